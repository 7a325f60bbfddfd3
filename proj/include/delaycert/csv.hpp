#pragma once

/// Minimal CSV output helpers. Data files are deterministic: fixed "%.15g"
/// formatting, no timestamps.

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace delaycert {

inline std::string format_g15(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  }

  void header(const std::vector<std::string>& names) { write_row_strings(names); }

  void row(const std::vector<double>& values) {
    std::string line;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) line += ',';
      line += format_g15(values[i]);
    }
    line += '\n';
    out_ << line;
  }

  /// Row with possibly-missing cells (empty string for absent values).
  void row_optional(const std::vector<std::string>& cells) { write_row_strings(cells); }

 private:
  void write_row_strings(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    line += '\n';
    out_ << line;
  }

  std::ofstream out_;
};

}  // namespace delaycert
