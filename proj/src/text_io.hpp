#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dag {

// Shortest round-trip decimal form; output is stable across runs.
std::string format_double(double x);

std::vector<std::string_view> split_csv(std::string_view line);
double parse_double(std::string_view s);
std::int64_t parse_int(std::string_view s);

std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t h);
std::string file_hash(const std::filesystem::path& path);

}  // namespace dag
