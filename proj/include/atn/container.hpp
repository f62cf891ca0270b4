#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace atn::io {

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

/// Checkpoint / weights container, one file:
///   bytes 0..7    magic "ATNCKPT1"
///   bytes 8..15   header length N, little-endian uint64
///   N bytes       UTF-8 JSON header: {"arch", "config", "arrays": [{name, shape,
///                 offset, count}], "history_bytes"}
///   float32 LE    array payloads, concatenated in header order
///   history_bytes training history CSV text
struct Container {
  std::string arch;
  nlohmann::json config = nlohmann::json::object();
  std::vector<NamedArray> arrays;
  std::string history_csv;

  const NamedArray& array(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

}  // namespace atn::io
