#include "gridfloor/eval.hpp"

#include <algorithm>
#include <cmath>

#include "gridfloor/error.hpp"
#include "gridfloor/io.hpp"

namespace gridfloor::eval {

double euclid_error(Point2 truth, Point2 predicted) {
  return std::hypot(truth.x - predicted.x, truth.y - predicted.y);
}

ErrorReport summarize(std::span<const double> errors) {
  if (errors.empty()) throw ReportError("cannot summarise an empty error list");
  ErrorReport r;
  r.errors.assign(errors.begin(), errors.end());
  const double n = static_cast<double>(errors.size());
  double sum = 0;
  for (double e : errors) sum += e;
  r.mean = sum / n;
  double ss = 0;
  for (double e : errors) ss += (e - r.mean) * (e - r.mean);
  r.variance = ss / n;

  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  r.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

  const double top = sorted.back();
  r.bin_edges.resize(kHistogramBins + 1);
  for (int i = 0; i <= kHistogramBins; ++i) r.bin_edges[i] = top * i / kHistogramBins;
  r.bin_counts.assign(kHistogramBins, 0);
  for (double e : errors) {
    int bin = top > 0 ? static_cast<int>(e / top * kHistogramBins) : 0;
    r.bin_counts[std::clamp(bin, 0, kHistogramBins - 1)]++;
  }
  return r;
}

std::vector<double> frame_errors(std::span<const Point2> truth, std::span<const Point2> predicted) {
  if (truth.size() != predicted.size()) {
    throw AlignmentError("prediction count " + std::to_string(predicted.size()) +
                         " does not match " + std::to_string(truth.size()) + " frames");
  }
  std::vector<double> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) out[i] = euclid_error(truth[i], predicted[i]);
  return out;
}

std::string comparison_csv(std::span<const NamedReport> reports) {
  std::string out = "model,mean,median,variance\n";
  for (const auto& r : reports) {
    out += r.name + "," + io::format_double(r.report.mean) + "," + io::format_double(r.report.median) +
           "," + io::format_double(r.report.variance) + "\n";
  }
  return out;
}

}  // namespace gridfloor::eval
