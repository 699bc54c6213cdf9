#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace segloc {

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

// Round-trip formatting for doubles ("%.17g"); parse_* throw DataError with
// `context` on malformed input.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);
std::uint32_t parse_u32(const std::string& s, const std::string& context);
std::uint64_t parse_u64(const std::string& s, const std::string& context);

void warn(const std::string& msg);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// FNV-1a over a file's bytes; used to prove artifacts unchanged between
// pipeline stages.
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

// Runs body(0..n-1) on up to `jobs` threads. Results must be written to
// per-index slots; worker scheduling never affects output.
void parallel_for(std::size_t n, unsigned jobs,
                  const std::function<void(std::size_t)>& body);

}  // namespace segloc
