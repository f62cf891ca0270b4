#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atn/image.hpp"
#include "atn/label.hpp"
#include "atn/synthgen.hpp"

namespace atn::io {

/// In-memory form of a dataset bundle directory:
///   manifest.txt  `key = value` lines
///   patches.bin   count*H*W little-endian float32, row-major
///   labels.csv    id,R_A,R_B,W_A,W_B,C_x,C_y,theta,has_adjacent (optional)
struct Bundle {
  std::uint64_t count = 0;
  int height = 0;
  int width = 0;
  double pixel_spacing_mm = 0.5;
  std::vector<float> data;
  std::vector<AirwayLabel> labels;  // empty, or exactly `count` entries
  std::map<std::string, std::string> extra;  // additional manifest keys

  Image image(std::uint64_t index) const;
  synth::Patch patch(std::uint64_t index) const;
  void push_back(const synth::Patch& patch);
  bool has_labels() const { return !labels.empty(); }
};

void write_bundle(const std::filesystem::path& dir, const Bundle& bundle);
Bundle read_bundle(const std::filesystem::path& dir);

/// Parse a `key = value` manifest. Throws IoError on unreadable files.
std::map<std::string, std::string> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, std::string>>& entries);

void write_floats_le(const std::filesystem::path& path, const std::vector<float>& data);
std::vector<float> read_floats_le(const std::filesystem::path& path, std::uint64_t expected_count);

/// Shortest representation that round-trips a double.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws DataError if absent.
  std::size_t column(const std::string& name) const;
  std::optional<std::size_t> find_column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

double parse_double(const std::string& text, const std::string& context);
std::optional<double> parse_optional_double(const std::string& text, const std::string& context);
long long parse_int(const std::string& text, const std::string& context);
bool parse_bool(const std::string& text, const std::string& context);

inline const std::vector<std::string>& label_header() {
  static const std::vector<std::string> header{"id",  "R_A", "R_B",   "W_A",         "W_B",
                                               "C_x", "C_y", "theta", "has_adjacent"};
  return header;
}
std::vector<std::string> label_row(std::uint64_t id, const AirwayLabel& label);
AirwayLabel parse_label_row(const CsvTable& table, std::size_t row);

}  // namespace atn::io
