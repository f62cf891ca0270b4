#include "atn/dataset.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "atn/errors.hpp"

namespace atn::io {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

const std::string& need(const std::map<std::string, std::string>& m, const std::string& key,
                        const fs::path& where) {
  const auto it = m.find(key);
  if (it == m.end()) throw IoError(where.string(), "manifest is missing key '" + key + "'");
  return it->second;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw DataError(context + ": cannot parse number '" + text + "'");
  return value;
}

std::optional<double> parse_optional_double(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  if (t.empty() || t == "NA" || t == "nan" || t == "NaN") return std::nullopt;
  return parse_double(t, context);
}

long long parse_int(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  long long value = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw DataError(context + ": cannot parse integer '" + text + "'");
  return value;
}

bool parse_bool(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  if (t == "1" || t == "true" || t == "True") return true;
  if (t == "0" || t == "false" || t == "False") return false;
  throw DataError(context + ": cannot parse boolean '" + text + "'");
}

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open manifest");
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw IoError(path.string(), "line " + std::to_string(lineno) + " is not 'key = value'");
    out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return out;
}

void write_manifest(const fs::path& path,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot write manifest");
  for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
  if (!out) throw IoError(path.string(), "write failed");
}

void write_floats_le(const fs::path& path, const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  } else {
    for (float f : data) {
      auto bits = std::bit_cast<std::uint32_t>(f);
      char b[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8),
                   static_cast<char>(bits >> 16), static_cast<char>(bits >> 24)};
      out.write(b, 4);
    }
  }
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<float> read_floats_le(const fs::path& path, std::uint64_t expected_count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  if (bytes != expected_count * sizeof(float)) {
    throw IoError(path.string(), "expected " + std::to_string(expected_count * sizeof(float)) +
                                     " bytes, found " + std::to_string(bytes));
  }
  in.seekg(0);
  std::vector<float> data(expected_count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : data) {
      const auto u = std::bit_cast<std::uint32_t>(f);
      f = std::bit_cast<float>((u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24));
    }
  }
  return data;
}

std::size_t CsvTable::column(const std::string& name) const {
  if (auto c = find_column(name)) return *c;
  throw DataError("CSV is missing column '" + name + "'");
}

std::optional<std::size_t> CsvTable::find_column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open CSV");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string(), "empty CSV");
  table.header = split(trim(line), ',');
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto row = split(trim(line), ',');
    if (row.size() != table.header.size()) {
      throw IoError(path.string(), "line " + std::to_string(lineno) + " has " +
                                       std::to_string(row.size()) + " fields, header has " +
                                       std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_csv(const fs::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open CSV for writing");
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<std::string> label_row(std::uint64_t id, const AirwayLabel& l) {
  return {std::to_string(id), format_double(l.r_a), format_double(l.r_b),
          format_double(l.w_a), format_double(l.w_b), format_double(l.c_x),
          format_double(l.c_y), format_double(l.theta), l.has_adjacent ? "1" : "0"};
}

AirwayLabel parse_label_row(const CsvTable& t, std::size_t row) {
  const auto& r = t.rows.at(row);
  const std::string ctx = "labels row " + std::to_string(row + 1);
  AirwayLabel l;
  l.r_a = parse_double(r[t.column("R_A")], ctx);
  l.r_b = parse_double(r[t.column("R_B")], ctx);
  l.w_a = parse_double(r[t.column("W_A")], ctx);
  l.w_b = parse_double(r[t.column("W_B")], ctx);
  l.c_x = parse_double(r[t.column("C_x")], ctx);
  l.c_y = parse_double(r[t.column("C_y")], ctx);
  l.theta = parse_double(r[t.column("theta")], ctx);
  l.has_adjacent = parse_bool(r[t.column("has_adjacent")], ctx);
  return l;
}

Image Bundle::image(std::uint64_t index) const {
  if (index >= count) throw DataError("bundle index out of range");
  Image img(height, width);
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::memcpy(img.pixels.data(), data.data() + index * n, n * sizeof(float));
  return img;
}

synth::Patch Bundle::patch(std::uint64_t index) const {
  synth::Patch p{image(index), pixel_spacing_mm, std::nullopt};
  if (has_labels()) p.label = labels.at(index);
  return p;
}

void Bundle::push_back(const synth::Patch& p) {
  if (count == 0 && height == 0) {
    height = p.image.height;
    width = p.image.width;
    pixel_spacing_mm = p.spacing_mm;
  }
  if (p.image.height != height || p.image.width != width)
    throw ShapeError("patch shape does not match bundle");
  if (count > 0 && (p.label.has_value() != has_labels()))
    throw DataError("bundle mixes labelled and unlabelled patches");
  data.insert(data.end(), p.image.pixels.begin(), p.image.pixels.end());
  if (p.label) labels.push_back(*p.label);
  ++count;
}

void write_bundle(const fs::path& dir, const Bundle& b) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
  if (b.data.size() != b.count * static_cast<std::uint64_t>(b.height) * b.width)
    throw ShapeError("bundle data size does not match count*height*width");
  if (b.has_labels() && b.labels.size() != b.count)
    throw DataError("bundle label count does not match patch count");

  std::vector<std::pair<std::string, std::string>> entries{
      {"count", std::to_string(b.count)},
      {"height", std::to_string(b.height)},
      {"width", std::to_string(b.width)},
      {"pixel_spacing_mm", format_double(b.pixel_spacing_mm)},
      {"dtype", "float32-le"},
      {"order", "row-major"},
  };
  for (const auto& [k, v] : b.extra) entries.emplace_back(k, v);
  write_manifest(dir / "manifest.txt", entries);
  write_floats_le(dir / "patches.bin", b.data);
  if (b.has_labels()) {
    CsvTable t;
    t.header = label_header();
    for (std::uint64_t i = 0; i < b.count; ++i) t.rows.push_back(label_row(i, b.labels[i]));
    write_csv(dir / "labels.csv", t);
  }
}

Bundle read_bundle(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.txt";
  auto m = read_manifest(manifest);
  if (need(m, "dtype", manifest) != "float32-le")
    throw IoError(manifest.string(), "unsupported dtype " + m["dtype"]);
  if (need(m, "order", manifest) != "row-major")
    throw IoError(manifest.string(), "unsupported order " + m["order"]);
  Bundle b;
  b.count = static_cast<std::uint64_t>(parse_int(need(m, "count", manifest), "count"));
  b.height = static_cast<int>(parse_int(need(m, "height", manifest), "height"));
  b.width = static_cast<int>(parse_int(need(m, "width", manifest), "width"));
  b.pixel_spacing_mm = parse_double(need(m, "pixel_spacing_mm", manifest), "pixel_spacing_mm");
  std::uint64_t depth = 1;
  if (m.count("depth")) depth = static_cast<std::uint64_t>(parse_int(m["depth"], "depth"));
  b.data = read_floats_le(dir / "patches.bin",
                          b.count * depth * static_cast<std::uint64_t>(b.height) * b.width);
  for (const auto& [k, v] : m) {
    if (k != "count" && k != "height" && k != "width" && k != "pixel_spacing_mm" &&
        k != "dtype" && k != "order")
      b.extra[k] = v;
  }
  if (fs::exists(dir / "labels.csv")) {
    const CsvTable t = read_csv(dir / "labels.csv");
    if (t.rows.size() != b.count) {
      throw DataError((dir / "labels.csv").string() + ": " + std::to_string(t.rows.size()) +
                      " label rows for " + std::to_string(b.count) + " patches");
    }
    for (std::size_t i = 0; i < t.rows.size(); ++i) b.labels.push_back(parse_label_row(t, i));
  }
  return b;
}

}  // namespace atn::io
