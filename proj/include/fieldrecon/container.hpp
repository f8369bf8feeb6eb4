#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fieldrecon/common.hpp"

namespace fieldrecon {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

/// One named float32 array inside a container file.
struct ArrayEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;  // row-major

  std::int64_t size() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

/// FRD1 container: a handful of named float32 arrays plus a small JSON
/// metadata object, in one file.
///
/// Layout: magic "FRD1" | version byte (1) | u32 little-endian header length |
/// header JSON | payload. The header is {"entries": [{"name", "dtype": "f32",
/// "shape", "offset", "len_bytes"}, ...]} with offsets relative to the start
/// of the payload; an optional "meta" object rides alongside "entries".
/// Payload arrays are row-major little-endian float32, concatenated in entry
/// order.
class Container {
 public:
  nlohmann::json meta = nlohmann::json::object();

  void add(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> data) {
    std::int64_t n = 1;
    for (auto d : shape) {
      require(d > 0, "Container::add: non-positive dimension in '" + name + "'");
      n *= d;
    }
    require(n == std::int64_t(data.size()),
            "Container::add: shape/data mismatch for '" + name + "'");
    require(!has(name), "Container::add: duplicate entry '" + name + "'");
    entries_.push_back({name, std::move(shape), std::move(data)});
  }

  template <typename Scalar>
  void add(const std::string& name, std::vector<std::int64_t> shape, const ArrayX<Scalar>& values) {
    std::vector<float> data(size_t(values.size()));
    for (Eigen::Index i = 0; i < values.size(); ++i) data[size_t(i)] = float(values[i]);
    add(name, std::move(shape), std::move(data));
  }

  bool has(const std::string& name) const { return find(name) != nullptr; }

  const ArrayEntry& at(const std::string& name) const {
    const ArrayEntry* e = find(name);
    if (!e) fail("Container: no entry named '" + name + "'");
    return *e;
  }

  template <typename Scalar>
  ArrayX<Scalar> values(const std::string& name) const {
    const ArrayEntry& e = at(name);
    ArrayX<Scalar> out(Eigen::Index(e.data.size()));
    for (size_t i = 0; i < e.data.size(); ++i) out[Eigen::Index(i)] = Scalar(e.data[i]);
    return out;
  }

  const std::vector<ArrayEntry>& entries() const { return entries_; }

  void write(const std::string& path) const {
    nlohmann::json header;
    header["entries"] = nlohmann::json::array();
    std::int64_t offset = 0;
    for (const auto& e : entries_) {
      const std::int64_t bytes = e.size() * 4;
      header["entries"].push_back({{"name", e.name},
                                   {"dtype", "f32"},
                                   {"shape", e.shape},
                                   {"offset", offset},
                                   {"len_bytes", bytes}});
      offset += bytes;
    }
    if (!meta.empty()) header["meta"] = meta;
    const std::string header_str = header.dump();
    require(header_str.size() <= UINT32_MAX, "Container::write: header too large");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "Container::write: cannot open '" + path + "'");
    try {
      out.write("FRD1", 4);
      const unsigned char version = 1;
      out.write(reinterpret_cast<const char*>(&version), 1);
      const std::uint32_t header_len = std::uint32_t(header_str.size());
      out.write(reinterpret_cast<const char*>(&header_len), 4);
      out.write(header_str.data(), std::streamsize(header_str.size()));
      for (const auto& e : entries_)
        out.write(reinterpret_cast<const char*>(e.data.data()), std::streamsize(e.data.size() * 4));
      out.flush();
      require(out.good(), "Container::write: I/O error writing '" + path + "'");
    } catch (...) {
      out.close();
      std::remove(path.c_str());  // no partial files
      throw;
    }
  }

  static Container read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "Container::read: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    require(in.good() && std::memcmp(magic, "FRD1", 4) == 0,
            "Container::read: '" + path + "' is not an FRD1 file");
    unsigned char version = 0;
    in.read(reinterpret_cast<char*>(&version), 1);
    require(in.good() && version == 1,
            "Container::read: unsupported version " + std::to_string(int(version)));
    std::uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), 4);
    require(in.good(), "Container::read: truncated header length");
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), std::streamsize(header_len));
    require(in.good(), "Container::read: truncated header");

    nlohmann::json header = nlohmann::json::parse(header_str, nullptr, false);
    require(!header.is_discarded(), "Container::read: header is not valid JSON");

    Container c;
    if (header.contains("meta")) c.meta = header["meta"];
    const std::streampos payload_start = in.tellg();
    for (const auto& je : header.at("entries")) {
      ArrayEntry e;
      e.name = je.at("name").get<std::string>();
      const std::string dtype = je.at("dtype").get<std::string>();
      require(dtype == "f32", "Container::read: unsupported dtype '" + dtype + "'");
      e.shape = je.at("shape").get<std::vector<std::int64_t>>();
      const std::int64_t offset = je.at("offset").get<std::int64_t>();
      const std::int64_t len_bytes = je.at("len_bytes").get<std::int64_t>();
      require(len_bytes == e.size() * 4,
              "Container::read: shape/len_bytes mismatch for '" + e.name + "'");
      e.data.resize(size_t(e.size()));
      in.seekg(payload_start + std::streampos(offset));
      in.read(reinterpret_cast<char*>(e.data.data()), std::streamsize(len_bytes));
      require(in.good(), "Container::read: truncated payload for '" + e.name + "'");
      c.entries_.push_back(std::move(e));
    }
    return c;
  }

 private:
  const ArrayEntry* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  std::vector<ArrayEntry> entries_;
};

}  // namespace fieldrecon
