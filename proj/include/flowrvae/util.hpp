// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace flowrvae {

/// Splits on commas. No quoting: binetflow fields never contain commas.
std::vector<std::string_view> split_csv(std::string_view line);

/// Strips a trailing '\r' and/or '\n'.
std::string_view trim_eol(std::string_view s);

/// Shortest text that parses back to the same double.
std::string format_real(double v);

/// Strict full-string parse; throws DataError naming `what` on failure.
double parse_real_field(std::string_view s, std::string_view what);
std::int64_t parse_int_field(std::string_view s, std::string_view what);

/// 64-bit FNV-1a, used for run-manifest content hashes.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
/// Hash of a whole file's bytes; throws DataError if unreadable.
std::string hash_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace flowrvae
