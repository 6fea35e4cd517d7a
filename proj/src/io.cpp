#include "hjlab/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hjlab/errors.hpp"

namespace hjlab {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  out << text;
}

Mat matrix_from_json(const json& j) {
  if (j.is_object()) {
    const int r = j.at("rows").get<int>(), c = j.at("cols").get<int>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<int>(data.size()) != r * c) throw InvalidInput("matrix data size mismatch");
    Mat M(r, c);
    for (int i = 0; i < r; ++i)
      for (int k = 0; k < c; ++k) M(i, k) = data[i * c + k];
    return M;
  }
  if (!j.is_array() || j.empty()) throw InvalidInput("matrix must be a nonempty array of rows");
  const int r = static_cast<int>(j.size());
  const int c = static_cast<int>(j[0].size());
  Mat M(r, c);
  for (int i = 0; i < r; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != c) throw InvalidInput("ragged matrix rows");
    for (int k = 0; k < c; ++k) M(i, k) = j[i][k].get<double>();
  }
  return M;
}

Mat parse_matrix(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw InvalidInput("empty matrix text");
  if (text[first] == '[' || text[first] == '{') {
    try {
      return matrix_from_json(json::parse(text));
    } catch (const json::exception& e) {
      throw InvalidInput(std::string("bad matrix JSON: ") + e.what());
    }
  }
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw InvalidInput("not a number: " + tok);
      }
    }
    if (!row.empty()) rows.push_back(row);
  }
  if (rows.empty()) throw InvalidInput("empty matrix text");
  Mat M(rows.size(), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw InvalidInput("ragged matrix rows");
    for (size_t k = 0; k < rows[i].size(); ++k) M(i, k) = rows[i][k];
  }
  return M;
}

Mat read_matrix_file(const std::string& path) { return parse_matrix(read_text(path)); }

void write_matrix_csv(const std::string& path, const Mat& M) {
  std::ostringstream out;
  for (int i = 0; i < M.rows(); ++i) {
    for (int k = 0; k < M.cols(); ++k) out << (k ? "," : "") << fmt(M(i, k));
    out << "\n";
  }
  write_text(path, out.str());
}

json matrix_to_json(const Mat& M) {
  std::vector<double> flat;
  for (int i = 0; i < M.rows(); ++i)
    for (int k = 0; k < M.cols(); ++k) flat.push_back(M(i, k));
  return flat;
}

json frame_to_json(const KalmanFrame& f) {
  return {{"N", f.N}, {"kappa", f.kappa}, {"n", f.n}, {"Q", matrix_to_json(f.Q)},
          {"A0", matrix_to_json(f.A0)}};
}

namespace {
json nested(const Mat& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (int k = 0; k < M.cols(); ++k) r.push_back(M(i, k));
    rows.push_back(r);
  }
  return rows;
}
}  // namespace

void write_grid_function(const GridFunction& u, const std::string& stem) {
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  json h;
  std::vector<int> dims{u.slices()};
  json extents = json::array();
  for (int k = 0; k < u.dim(); ++k) {
    dims.push_back(u.spec().n[k]);
    extents.push_back({u.spec().lo(k), u.spec().hi(k)});
  }
  h["dims"] = dims;
  h["extents"] = extents;
  h["dt"] = u.dt();
  h["t0"] = u.spec().t0;
  h["t1"] = u.spec().t1;
  h["h"] = u.h;
  h["A"] = nested(u.drift().A);
  h["P0"] = nested(u.drift().P0);
  h["coordinates"] = "adapted";
  h["layout"] = "slice-major, axis 0 fastest, little-endian f64";
  h["saturation_fraction"] = u.saturation_fraction;
  h["warnings"] = u.warnings;
  h["source_p"] = u.source_p;
  h["lp_multiplier"] = u.lp_multiplier;
  write_text(stem + ".json", h.dump(2) + "\n");
  std::ofstream out(stem + ".bin", std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + stem + ".bin");
  out.write(reinterpret_cast<const char*>(u.values().data()),
            static_cast<std::streamsize>(u.values().size() * sizeof(double)));
}

GridFunction read_grid_function(const std::string& stem) {
  json h;
  try {
    h = json::parse(read_text(stem + ".json"));
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad grid header: ") + e.what());
  }
  const DriftBundle drift = make_bundle(matrix_from_json(h.at("A")), matrix_from_json(h.at("P0")));
  const auto dims = h.at("dims").get<std::vector<int>>();
  GridSpec s;
  const int d = static_cast<int>(dims.size()) - 1;
  s.lo.resize(d);
  s.hi.resize(d);
  for (int k = 0; k < d; ++k) {
    s.n.push_back(dims[k + 1]);
    s.lo(k) = h.at("extents")[k][0].get<double>();
    s.hi(k) = h.at("extents")[k][1].get<double>();
  }
  s.t0 = h.at("t0").get<double>();
  s.t1 = h.at("t1").get<double>();
  s.nt = dims[0] - 1;
  GridFunction u(s, drift, h.at("h").get<double>());
  u.saturation_fraction = h.value("saturation_fraction", 0.0);
  u.source_p = h.value("source_p", 0.0);
  u.lp_multiplier = h.value("lp_multiplier", 1.0);
  const std::string raw = read_text(stem + ".bin");
  if (raw.size() != u.values().size() * sizeof(double)) throw InvalidInput("grid payload size mismatch");
  std::memcpy(u.values().data(), raw.data(), raw.size());
  return u;
}

std::vector<double> read_numbers_csv(const std::string& path) {
  std::string text = read_text(path);
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw InvalidInput("not a number: " + tok);
    }
  }
  return out;
}

void write_loglog_svg(const std::string& path, const std::string& title,
                      const std::vector<double>& x, const std::vector<double>& y, double slope,
                      double intercept, bool with_fit) {
  std::vector<double> lx, ly;
  for (size_t i = 0; i < x.size() && i < y.size(); ++i)
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log10(x[i]));
      ly.push_back(std::log10(y[i]));
    }
  const double W = 480, H = 360, m = 40;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<text x=\"" << m << "\" y=\"20\" font-size=\"12\">" << title << "</text>\n";
  if (!lx.empty()) {
    const auto [x0, x1] = std::minmax_element(lx.begin(), lx.end());
    const auto [y0, y1] = std::minmax_element(ly.begin(), ly.end());
    const double ax = *x0, bx = std::max(*x1 - *x0, 1e-12), ay = *y0, by = std::max(*y1 - *y0, 1e-12);
    auto px = [&](double v) { return m + (v - ax) / bx * (W - 2 * m); };
    auto py = [&](double v) { return H - m - (v - ay) / by * (H - 2 * m); };
    s << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << W - 2 * m << "\" height=\"" << H - 2 * m
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (size_t i = 0; i < lx.size(); ++i)
      s << "<circle cx=\"" << fmt(px(lx[i])) << "\" cy=\"" << fmt(py(ly[i])) << "\" r=\"2\"/>\n";
    if (with_fit) {
      // fit is in natural logs
      const double c = intercept / std::log(10.0);
      s << "<line x1=\"" << fmt(px(ax)) << "\" y1=\"" << fmt(py(slope * ax + c)) << "\" x2=\""
        << fmt(px(ax + bx)) << "\" y2=\"" << fmt(py(slope * (ax + bx) + c))
        << "\" stroke=\"red\"/>\n";
    }
    s << "<text x=\"" << m << "\" y=\"" << H - 10 << "\" font-size=\"10\">log10 x in [" << fmt(ax) << ", "
      << fmt(ax + bx) << "], log10 y in [" << fmt(ay) << ", " << fmt(ay + by) << "]</text>\n";
  }
  s << "</svg>\n";
  write_text(path, s.str());
}

}  // namespace hjlab
