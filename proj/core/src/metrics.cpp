#include "mufuru/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mufuru/errors.hpp"

namespace mufuru {

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open metrics file for writing: " + path);
  os << "step,epoch,split,loss,metric\n";
  char buf[64];
  for (const MetricRow& r : rows) {
    os << r.step << ',' << r.epoch << ',' << r.split << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.metric);
    os << buf << '\n';
  }
  if (!os) throw IoError("failed writing metrics file: " + path);
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open metrics file: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "step,epoch,split,loss,metric") {
    throw DataError("metrics file missing header: " + path);
  }
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    MetricRow r;
    std::string field;
    std::getline(ss, field, ',');
    r.step = std::stoll(field);
    std::getline(ss, field, ',');
    r.epoch = std::stoi(field);
    std::getline(ss, r.split, ',');
    std::getline(ss, field, ',');
    r.loss = std::stod(field);
    std::getline(ss, field, ',');
    r.metric = std::stod(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace mufuru
