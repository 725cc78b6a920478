#pragma once

// Minimal CSV dialect shared by every reader and writer in the project:
// comma-separated, mandatory header row, '.' decimal point, no quoting.
// Numbers are written in shortest round-trip form so files re-parse to the
// identical doubles.

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace longsim {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), source_(source), line_(line) {}
  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

namespace csv {

std::string format(double v);
std::string format(long long v);

struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row

  // Column index by header name, or npos.
  std::size_t column(std::string_view name) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

Table parse(std::string_view text, const std::string& source);
Table read(const std::filesystem::path& path);

// Strict numeric conversion; throws ParseError naming the cell.
double to_double(std::string_view cell, const Table& table, std::size_t row);
long long to_integer(std::string_view cell, const Table& table, std::size_t row);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace csv
}  // namespace longsim
