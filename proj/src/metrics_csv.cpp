#include "dba/metrics_csv.hpp"

#include <charconv>
#include <fstream>

#include "dba/errors.hpp"

namespace dba {

std::string format_csv_double(double v) {
  char buf[48];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string metrics_csv_string(const Trace& trace) {
  std::string out{kMetricsCsvHeader};
  out += "\n";
  for (const IterationRecord& rec : trace) {
    out += std::to_string(rec.iter);
    out += ",";
    out += format_csv_double(rec.mean_reproj_err);
    out += ",";
    out += format_csv_double(rec.max_primal_x);
    out += ",";
    out += format_csv_double(rec.max_primal_y);
    out += ",";
    out += format_csv_double(rec.camera_mse);
    out += ",";
    out += format_csv_double(rec.point_mse);
    out += ",";
    out += format_csv_double(rec.wall_ms);
    out += ",";
    out += std::to_string(rec.comm_floats);
    out += "\n";
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot open '" + path.string() + "' for writing");
  }
  out << metrics_csv_string(trace);
  if (!out) {
    throw Error("write failed for '" + path.string() + "'");
  }
}

}  // namespace dba
