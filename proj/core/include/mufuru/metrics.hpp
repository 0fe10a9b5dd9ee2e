#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mufuru {

/// One evaluation event. `metric` is accuracy or perplexity depending on the
/// task; `loss` is the mean negative log-likelihood at that point.
struct MetricRow {
  std::int64_t step = 0;
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double metric = 0.0;
};

/// Writes rows as CSV with the mandatory header
/// `step,epoch,split,loss,metric`, in the given order. Floats are printed
/// with %.17g so identical runs produce byte-identical files.
void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows);

std::vector<MetricRow> read_metrics_csv(const std::string& path);

}  // namespace mufuru
