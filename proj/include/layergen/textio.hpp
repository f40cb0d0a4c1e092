// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace layergen {

/// "%.17g" — enough digits for an exact double round trip.
std::string format_exact(double v);

/// "%.12e" — fixed-precision rendering used in CSV output so that repeated
/// stages produce byte-identical files.
std::string format_fixed(double v);

double parse_double(const std::string& s, const std::string& what);
long parse_long(const std::string& s, const std::string& what);
std::uint64_t parse_u64(const std::string& s, const std::string& what);

/// Task positions are exact tenths held as integers. 0 -> "0.0",
/// 6 -> "0.6", -12 -> "-1.2".
std::string format_deci(long deci);

/// Inverse of format_deci; accepts any decimal that is an exact multiple of
/// 0.1 and rejects everything else.
long parse_deci(const std::string& s, const std::string& what);

std::vector<std::string> split_ws(const std::string& line);
std::vector<std::string> split_csv_line(const std::string& line);

/// Write-temp-then-rename so that concurrent readers never observe a
/// partially written file. Creates parent directories.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// FNV-1a over the file bytes, rendered as 16 hex digits.
std::uint64_t fnv1a64(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

/// Manifest: sorted lines "<hash16> <relative path>". Stages write one after
/// completing and verify upstream manifests before consuming files.
struct Manifest {
  // path (relative to the manifest's directory) -> hash
  std::vector<std::pair<std::string, std::string>> entries;

  void add_file(const std::filesystem::path& root, const std::string& rel);
  void write(const std::filesystem::path& path) const;
  static Manifest read(const std::filesystem::path& path);

  /// Throws MissingInputError if `rel` is absent from the manifest or the
  /// file's current hash differs from the recorded one.
  void verify_file(const std::filesystem::path& root, const std::string& rel) const;
  bool same_as(const Manifest& other) const;
};

} // namespace layergen
