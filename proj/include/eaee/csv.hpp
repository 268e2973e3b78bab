#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace eaee::csv {

std::vector<std::string_view> split_fields(std::string_view line);

/// Reads one line, dropping a trailing CR. Returns false at end of input.
bool read_line(std::istream& in, std::string& line);

/// Throws ParseError naming `what` and `line_no` on failure.
double parse_double(std::string_view field, std::size_t line_no, std::string_view what);
long long parse_int(std::string_view field, std::size_t line_no, std::string_view what);
bool parse_bool01(std::string_view field, std::size_t line_no, std::string_view what);

/// Shortest representation that round-trips to the same double.
std::string exact(double v);

/// Checks the first line of `in` against `expected`; throws ParseError.
void expect_header(std::istream& in, std::string_view expected);

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace eaee::csv
