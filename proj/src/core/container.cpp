#include "atn/container.hpp"

#include <cstring>
#include <fstream>

#include "atn/errors.hpp"

namespace atn::io {

namespace {

constexpr char kMagic[8] = {'A', 'T', 'N', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
  for (float f : v) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                 static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    out.write(b, 4);
  }
}

}  // namespace

const NamedArray& Container::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw DataError("container has no array named '" + name + "'");
}

void write_container(const std::filesystem::path& path, const Container& c) {
  nlohmann::json header;
  header["arch"] = c.arch;
  header["config"] = c.config;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : c.arrays) {
    std::int64_t expected = 1;
    for (auto d : a.shape) expected *= d;
    if (expected != static_cast<std::int64_t>(a.values.size()))
      throw DataError("array '" + a.name + "' size does not match its shape");
    header["arrays"].push_back(
        {{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.values.size()}});
    offset += a.values.size();
  }
  header["history_bytes"] = c.history_csv.size();
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open checkpoint for writing");
  out.write(kMagic, 8);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : c.arrays) put_floats(out, a.values);
  out.write(c.history_csv.data(), static_cast<std::streamsize>(c.history_csv.size()));
  if (!out) throw IoError(path.string(), "checkpoint write failed");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open checkpoint");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError(path.string(), "not an ATN checkpoint (bad magic)");
  const std::uint64_t len = get_u64(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(path.string(), "truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string(), std::string("corrupt checkpoint header: ") + e.what());
  }
  Container c;
  c.arch = header.at("arch").get<std::string>();
  c.config = header.at("config");
  for (const auto& entry : header.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto count = entry.at("count").get<std::uint64_t>();
    a.values.resize(count);
    std::vector<unsigned char> raw(count * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError(path.string(), "truncated checkpoint payload");
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint32_t bits = raw[4 * i] | (raw[4 * i + 1] << 8) | (raw[4 * i + 2] << 16) |
                                 (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
      std::memcpy(&a.values[i], &bits, 4);
    }
    c.arrays.push_back(std::move(a));
  }
  const auto hist = header.at("history_bytes").get<std::uint64_t>();
  c.history_csv.resize(hist);
  in.read(c.history_csv.data(), static_cast<std::streamsize>(hist));
  if (!in) throw IoError(path.string(), "truncated checkpoint history");
  return c;
}

}  // namespace atn::io
