#pragma once

#include <cstdint>
#include <span>

namespace pspin {

/// Mean with a standard error, the universal estimator return type.
/// std_error follows the independent-batch convention: sample standard
/// deviation divided by sqrt(n_samples); 0 when n_samples < 2.
struct EstimateWithError {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t n_samples = 0;
};

/// Mean and standard error of a sample, summed in index order (two-pass).
EstimateWithError mean_and_error(std::span<const double> values);

/// Batch-means estimate: splits the series into n_batches contiguous batches
/// and treats batch means as independent samples. Used for thermal error
/// diagnostics where successive MC samples are correlated.
EstimateWithError batch_means(std::span<const double> values, int n_batches = 20);

/// Standard error of a difference of independent estimates.
double combined_std_error(const EstimateWithError& a, const EstimateWithError& b);

}  // namespace pspin
