#pragma once

// Grid CSV and decomposition JSON.
//
// CSV layout:
//   m,x_lo,x_hi,y_lo,y_hi        (header line, optional on input)
//   8,-1,1,-1,1                  (metadata)
//   A[0][0],...,A[0][m]          (m+1 rows; row i <-> x_i, column j <-> y_j)

#include "saddle/decomposition.hpp"

#include "json.hpp"

#include <iosfwd>
#include <string>

namespace saddle::decomp {

/// Parses a grid; `source` names the input in diagnostics ("file:line: ...").
GridSamples read_grid_csv(std::istream& in, const std::string& source = "<grid>");
GridSamples read_grid_csv_file(const std::string& path);
void write_grid_csv(std::ostream& out, const GridSamples& grid);

nlohmann::json to_json(const MongeReport& r);
nlohmann::json to_json(const SaddleDecomposition& d, const LiftedSaddleFunction& lifted);

}  // namespace saddle::decomp
