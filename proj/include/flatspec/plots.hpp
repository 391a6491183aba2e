#pragma once

// Plot data: CSV tables and static SVG figures.

#include <string>
#include <vector>

#include "flatspec/slq.hpp"
#include "flatspec/training.hpp"

namespace flatspec {

// node,weight per pooled Ritz node.
std::string spectrum_csv(const RitzSpectrum& s);
// Stems at each node with a log10 weight axis.
std::string spectrum_svg(const RitzSpectrum& s, const std::string& title);

// Inverse of history_csv.
std::vector<EpochRecord> parse_history_csv(const std::string& text);

// epoch,test_error,weight_norm.
std::string history_plot_csv(const std::vector<EpochRecord>& h);
// Test error and weight norm against epoch, two panels.
std::string history_svg(const std::vector<EpochRecord>& h, const std::string& title);

struct DegeneracyPoint {
  std::size_t epoch;
  double ratio;
  double node_value;
};
// epoch,ratio,node_value.
std::string degeneracy_csv(const std::vector<DegeneracyPoint>& pts);

}  // namespace flatspec
