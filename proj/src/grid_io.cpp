#include "saddle/grid_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace saddle::decomp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& what) {
  throw InputError(source + ":" + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& cell, const std::string& source, int line, std::size_t col) {
  if (cell.empty()) fail(source, line, "empty value in column " + std::to_string(col + 1));
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    fail(source, line, "not a number in column " + std::to_string(col + 1) + ": '" + cell + "'");
  }
  if (used != cell.size()) fail(source, line, "trailing characters in column " + std::to_string(col + 1) + ": '" + cell + "'");
  if (!std::isfinite(v)) fail(source, line, "non-finite value in column " + std::to_string(col + 1));
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

GridSamples read_grid_csv(std::istream& in, const std::string& source) {
  std::vector<std::pair<int, std::string>> lines;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string t = trim(raw);
    if (t.empty() || t[0] == '#') continue;
    lines.emplace_back(lineno, t);
  }
  if (lines.empty()) throw InputError(source + ": empty grid file");
  std::size_t pos = 0;
  {
    auto cells = split(lines[0].second);
    if (!cells.empty() && cells[0] == "m") {
      const std::vector<std::string> expected{"m", "x_lo", "x_hi", "y_lo", "y_hi"};
      if (cells != expected) fail(source, lines[0].first, "header must be m,x_lo,x_hi,y_lo,y_hi");
      ++pos;
    }
  }
  if (pos >= lines.size()) fail(source, lines.back().first, "missing metadata line after header");
  const auto [meta_line, meta_text] = lines[pos++];
  auto meta = split(meta_text);
  if (meta.size() != 5) fail(source, meta_line, "metadata needs 5 values (m,x_lo,x_hi,y_lo,y_hi), got " + std::to_string(meta.size()));
  const double mraw = parse_number(meta[0], source, meta_line, 0);
  if (mraw < 1 || mraw != std::floor(mraw) || mraw > 1e6) fail(source, meta_line, "m must be a positive integer");
  GridSamples g;
  g.m = static_cast<int>(mraw);
  g.x = {parse_number(meta[1], source, meta_line, 1), parse_number(meta[2], source, meta_line, 2)};
  g.y = {parse_number(meta[3], source, meta_line, 3), parse_number(meta[4], source, meta_line, 4)};
  if (!(g.x.hi > g.x.lo)) fail(source, meta_line, "x interval must satisfy x_lo < x_hi");
  if (!(g.y.hi > g.y.lo)) fail(source, meta_line, "y interval must satisfy y_lo < y_hi");
  const std::size_t n = static_cast<std::size_t>(g.m) + 1;
  if (lines.size() - pos != n) {
    const int where = lines.size() > pos ? lines.back().first : meta_line;
    fail(source, where, "expected " + std::to_string(n) + " data rows, got " + std::to_string(lines.size() - pos));
  }
  g.A.resize(g.m + 1, g.m + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [ln, text] = lines[pos + i];
    auto cells = split(text);
    if (cells.size() != n) {
      fail(source, ln, "expected " + std::to_string(n) + " values, got " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < n; ++j) {
      g.A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_number(cells[j], source, ln, j);
    }
  }
  return g;
}

GridSamples read_grid_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open grid file '" + path + "'");
  return read_grid_csv(in, path);
}

void write_grid_csv(std::ostream& out, const GridSamples& grid) {
  out << "m,x_lo,x_hi,y_lo,y_hi\n";
  out << grid.m << ',' << fmt(grid.x.lo) << ',' << fmt(grid.x.hi) << ',' << fmt(grid.y.lo) << ',' << fmt(grid.y.hi)
      << '\n';
  for (Eigen::Index i = 0; i < grid.A.rows(); ++i) {
    for (Eigen::Index j = 0; j < grid.A.cols(); ++j) out << (j ? "," : "") << fmt(grid.A(i, j));
    out << '\n';
  }
}

nlohmann::json to_json(const MongeReport& r) {
  return {{"m", r.m},
          {"tol", r.tol},
          {"convexity_margin", r.convexity_margin},
          {"concavity_margin", r.concavity_margin},
          {"mixed_margin", r.mixed_margin},
          {"mixed_max", r.mixed_max},
          {"convex_ok", r.convex_ok},
          {"concave_ok", r.concave_ok},
          {"mixed_ok", r.mixed_ok},
          {"reversed_mixed_ok", r.reversed_mixed_ok},
          {"forward_pass", r.forward_pass()},
          {"reversed_pass", r.reversed_pass()}};
}

nlohmann::json to_json(const SaddleDecomposition& d, const LiftedSaddleFunction& lifted) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  std::vector<double> b(d.B.data(), d.B.data() + d.B.size());  // RowMajor storage
  return {{"m", d.m},
          {"orientation", lifted.orientation == Orientation::Forward ? "forward" : "reversed"},
          {"E0", vec(d.E0)},
          {"Em", vec(d.Em)},
          {"B", b},
          {"B_shape", {d.B.rows(), d.B.cols()}},
          {"C0", lifted.C0},
          {"Cm", lifted.Cm},
          {"domain", {{"x", {d.x.lo, d.x.hi}}, {"y", {d.y.lo, d.y.hi}}}}};
}

}  // namespace saddle::decomp
