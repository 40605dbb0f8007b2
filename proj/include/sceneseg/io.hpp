#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sceneseg {

// Parse or validation failure tied to a file location.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::filesystem::path& file, int line, const std::string& message);
    explicit ParseError(const std::string& message);
};

struct TextLine {
    int number = 0;  // 1-based line number in the file
    std::string text;
};

// Whole-file read; returns non-blank lines with their original line numbers.
std::vector<TextLine> read_lines(const std::filesystem::path& file);

std::vector<std::string> split_fields(std::string_view line);

double parse_double_field(std::string_view field, const std::filesystem::path& file, int line);
long parse_long_field(std::string_view field, const std::filesystem::path& file, int line);

// Shortest decimal form that round-trips exactly.
std::string format_double(double value);

// Write via temporary sibling + rename so failed commands leave no partial file.
void atomic_write(const std::filesystem::path& file, const std::string& content);

// fn(i) for i in [0, n) on up to `jobs` threads. Work items must be
// independent and write only to per-index slots.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace sceneseg
