#include "eaee/csv.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "eaee/errors.hpp"

namespace eaee::csv {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

double parse_double(std::string_view field, std::size_t line_no, std::string_view what) {
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || field.empty() || !std::isfinite(v)) {
    throw ParseError(fmt::format("line {}: cannot parse {} from '{}'", line_no, what, field));
  }
  return v;
}

long long parse_int(std::string_view field, std::size_t line_no, std::string_view what) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError(fmt::format("line {}: cannot parse {} from '{}'", line_no, what, field));
  }
  return v;
}

bool parse_bool01(std::string_view field, std::size_t line_no, std::string_view what) {
  if (field == "0") return false;
  if (field == "1") return true;
  throw ParseError(fmt::format("line {}: {} must be 0 or 1, got '{}'", line_no, what, field));
}

std::string exact(double v) { return fmt::format("{}", v); }

void expect_header(std::istream& in, std::string_view expected) {
  std::string line;
  if (!read_line(in, line)) throw ParseError("line 1: missing header");
  if (line != expected) {
    throw ParseError(fmt::format("line 1: expected header '{}', got '{}'", expected, line));
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError(fmt::format("cannot open '{}' for reading", path.string()));
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

}  // namespace eaee::csv
