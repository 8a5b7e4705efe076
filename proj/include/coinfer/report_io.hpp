#pragma once

// Output plumbing shared by the CLI: content digests, atomic file writes,
// CSV with a leading "# {json}" metadata line, and range flags of the form
// start:stop:{lin|log}:count.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "coinfer/error.hpp"

namespace coinfer {

inline constexpr std::string_view kToolVersion = "0.1.0";

// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a64_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

// Writes to a sibling temp file and renames it over `path`, so readers see
// either the old file or the complete new one.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(path.string() + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(path.string() + ": write failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(path.string() + ": rename failed");
  }
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  nlohmann::json meta; // parsed from the "# " line, null when absent
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ParseError("csv: no column '" + std::string(name) + "'");
  }
  double number(std::size_t row, std::string_view name) const {
    const auto& cell = rows.at(row).at(column(name));
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0') throw ParseError("csv: '" + cell + "' is not a number");
    return v;
  }
};

class CsvWriter {
public:
  CsvWriter(const nlohmann::ordered_json& meta, std::vector<std::string> header) : columns_(header.size()) {
    out_ << "# " << meta.dump() << "\n";
    write_row(header);
  }

  void write_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw Error("csv: row has wrong number of cells");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\n\"") != std::string::npos) throw Error("csv: cell needs quoting: " + cells[i]);
      out_ << (i ? "," : "") << cells[i];
    }
    out_ << "\n";
  }

  std::string str() const { return out_.str(); }

private:
  std::size_t columns_;
  std::ostringstream out_;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      if (!have_header && t.meta.is_null()) t.meta = nlohmann::json::parse(line.substr(2));
      continue;
    }
    auto cells = split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != t.header.size()) throw ParseError("csv: ragged row: " + line);
      t.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw ParseError("csv: missing header row");
  return t;
}

// ---------------------------------------------------------------------------
// Range flags

inline std::vector<double> parse_range(std::string_view spec) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream ss{std::string(spec)};
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.size() != 4) throw RangeError("range '" + std::string(spec) + "': expected start:stop:{lin|log}:count");
  auto num = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw RangeError("range '" + std::string(spec) + "': bad number '" + s + "'");
    return v;
  };
  const double start = num(parts[0]), stop = num(parts[1]);
  const double count_d = num(parts[3]);
  if (count_d < 1 || count_d != std::floor(count_d)) throw RangeError("range: count must be a positive integer");
  const auto count = static_cast<std::size_t>(count_d);
  const bool log = parts[2] == "log";
  if (!log && parts[2] != "lin") throw RangeError("range: spacing must be 'lin' or 'log'");
  if (log && !(start > 0.0 && stop > 0.0)) throw RangeError("range: log spacing needs positive bounds");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = log ? std::exp(std::log(start) + t * (std::log(stop) - std::log(start))) : start + t * (stop - start);
  }
  if (count > 1) {
    out.front() = start;
    out.back() = stop;
  }
  return out;
}

// Comma separated numbers.
inline std::vector<double> parse_number_list(std::string_view spec) {
  std::vector<double> out;
  for (const auto& s : split_csv_line(std::string(spec))) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end == s.c_str() || *end != '\0') throw RangeError("bad number '" + s + "' in list");
    out.push_back(v);
  }
  return out;
}

} // namespace coinfer
