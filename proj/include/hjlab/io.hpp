#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hjlab/grid_function.hpp"

namespace hjlab {

using json = nlohmann::json;

/// Matrix from CSV text (one row per line, comma or blank separated) or
/// inline JSON ([[...],[...]]).
Mat parse_matrix(const std::string& text);
Mat read_matrix_file(const std::string& path);
void write_matrix_csv(const std::string& path, const Mat& M);

/// Flat row-major list.
json matrix_to_json(const Mat& M);
/// Accepts nested rows or {rows, cols, data}.
Mat matrix_from_json(const json& j);

/// {N, kappa, n[], Q (row-major), A0 (row-major)}
json frame_to_json(const KalmanFrame& frame);

/// Writes stem.bin (little-endian f64, slice-major, axis 0 fastest) and
/// stem.json {dims, extents, dt, t0, t1, h, A, P0, ...}.
void write_grid_function(const GridFunction& u, const std::string& stem);
GridFunction read_grid_function(const std::string& stem);

/// All numbers of a CSV file in reading order.
std::vector<double> read_numbers_csv(const std::string& path);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

/// Minimal log-log scatter plot with a fitted line.
void write_loglog_svg(const std::string& path, const std::string& title,
                      const std::vector<double>& x, const std::vector<double>& y,
                      double slope = 0, double intercept = 0, bool with_fit = false);

/// Fixed-format number for CSV output.
std::string fmt(double v);

}  // namespace hjlab
