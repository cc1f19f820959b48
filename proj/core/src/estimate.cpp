#include "pspin/estimate.hpp"

#include <cmath>
#include <vector>

namespace pspin {

EstimateWithError mean_and_error(std::span<const double> values) {
  EstimateWithError out;
  out.n_samples = static_cast<std::int64_t>(values.size());
  if (values.empty()) return out;
  long double sum = 0.0L;
  for (double v : values) sum += v;
  const double mean = static_cast<double>(sum / values.size());
  out.mean = mean;
  if (values.size() < 2) return out;
  long double sq = 0.0L;
  for (double v : values) {
    const long double d = v - mean;
    sq += d * d;
  }
  const double var = static_cast<double>(sq / (values.size() - 1));
  out.std_error = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

EstimateWithError batch_means(std::span<const double> values, int n_batches) {
  if (n_batches < 2 || values.size() < static_cast<std::size_t>(2 * n_batches)) {
    return mean_and_error(values);
  }
  const std::size_t batch = values.size() / n_batches;
  std::vector<double> means;
  means.reserve(n_batches);
  for (int b = 0; b < n_batches; ++b) {
    long double sum = 0.0L;
    for (std::size_t i = b * batch; i < (b + 1) * batch; ++i) sum += values[i];
    means.push_back(static_cast<double>(sum / batch));
  }
  EstimateWithError out = mean_and_error(means);
  // The mean reported is over the used samples; n reflects the raw count.
  out.n_samples = static_cast<std::int64_t>(values.size());
  return out;
}

double combined_std_error(const EstimateWithError& a, const EstimateWithError& b) {
  return std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
}

}  // namespace pspin
