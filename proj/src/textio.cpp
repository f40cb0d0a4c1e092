// SPDX-License-Identifier: Apache-2.0
#include "layergen/textio.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "layergen/errors.hpp"

namespace layergen {

std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_fixed(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12e", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    throw ParseError("cannot parse '" + s + "' as a real number (" + what + ")");
  return v;
}

long parse_long(const std::string& s, const std::string& what) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    throw ParseError("cannot parse '" + s + "' as an integer (" + what + ")");
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  // strtoull accepts signs and leading whitespace (negatives wrap around);
  // only plain digit strings are valid here.
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError("cannot parse '" + s + "' as an unsigned integer (" + what + ")");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    throw ParseError("cannot parse '" + s + "' as an unsigned integer (" + what + ")");
  return static_cast<std::uint64_t>(v);
}

std::string format_deci(long deci) {
  std::string out;
  if (deci < 0) {
    out += '-';
    deci = -deci;
  }
  out += std::to_string(deci / 10);
  out += '.';
  out += std::to_string(deci % 10);
  return out;
}

long parse_deci(const std::string& s, const std::string& what) {
  const double v = parse_double(s, what);
  const double scaled = v * 10.0;
  const double rounded = std::round(scaled);
  if (std::abs(scaled - rounded) > 1e-9 || std::abs(rounded) > 1e15)
    throw ParseError("'" + s + "' is not an exact multiple of 0.1 (" + what + ")");
  return static_cast<long>(rounded);
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path.string() +
                        " (" + ec.message() + ")");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string file_hash(const std::filesystem::path& path) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(read_file(path))));
  return buf;
}

void Manifest::add_file(const std::filesystem::path& root, const std::string& rel) {
  entries.emplace_back(rel, file_hash(root / rel));
}

void Manifest::write(const std::filesystem::path& path) const {
  auto sorted = entries;
  std::sort(sorted.begin(), sorted.end());
  std::ostringstream os;
  for (const auto& [rel, hash] : sorted) os << hash << " " << rel << "\n";
  atomic_write(path, os.str());
}

Manifest Manifest::read(const std::filesystem::path& path) {
  Manifest m;
  std::istringstream in(read_file(path));
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto pos = line.find(' ');
    if (pos == std::string::npos || pos != 16)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad manifest line");
    m.entries.emplace_back(line.substr(pos + 1), line.substr(0, pos));
  }
  return m;
}

void Manifest::verify_file(const std::filesystem::path& root, const std::string& rel) const {
  auto it = std::find_if(entries.begin(), entries.end(),
                         [&](const auto& e) { return e.first == rel; });
  if (it == entries.end())
    throw MissingInputError("file not listed in manifest: " + rel);
  const std::string actual = file_hash(root / rel);
  if (actual != it->second)
    throw MissingInputError("manifest hash mismatch for " + rel + " (expected " + it->second +
                            ", found " + actual + ")");
}

bool Manifest::same_as(const Manifest& other) const {
  auto a = entries, b = other.entries;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

} // namespace layergen
