#pragma once

#include <string>
#include <vector>

#include "doob/types.hpp"

namespace doob::svg {

struct Bar {
  std::string label;
  double value;
  double error;  ///< half-width of the error bar; 0 draws none
};

struct Series {
  std::string label;
  Vector x;
  Vector y;
};

/// Standalone SVG documents. `comment` is embedded verbatim in an XML comment (any "--" is
/// rewritten so the comment stays well formed).
std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<Bar>& bars, const std::string& comment = "");
std::string scatter_plot(const std::string& title, const std::vector<Series>& series,
                         const std::string& comment = "");
std::string line_plot(const std::string& title, const std::vector<Series>& series,
                      const std::string& comment = "");

}  // namespace doob::svg
