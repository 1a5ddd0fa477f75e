#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dba/trace.hpp"

namespace dba {

inline constexpr std::string_view kMetricsCsvHeader =
    "iter,mean_reproj_err,max_primal_x,max_primal_y,camera_mse,point_mse,wall_ms,comm_floats";

/// Locale-independent shortest-round-trip formatting (std::to_chars).
std::string format_csv_double(double v);

std::string metrics_csv_string(const Trace& trace);

void write_metrics_csv(const std::filesystem::path& path, const Trace& trace);

}  // namespace dba
