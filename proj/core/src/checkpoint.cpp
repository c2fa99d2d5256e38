// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#include "coopcast/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "coopcast/errors.hpp"

namespace coopcast {

namespace {

void put_u64_le(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t double_bits(double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  return u;
}

double bits_double(std::uint64_t u) {
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace

std::uint64_t fnv1a64(const unsigned char* bytes, std::size_t n) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void save_checkpoint(const ParamStore& params, const std::string& path) {
  std::ostringstream header;
  header << "coopcast.ckpt 1\n";
  for (const auto& [name, t] : params.entries) {
    header << "tensor " << name << " f64";
    for (auto e : t.shape) header << " " << e;
    header << "\n";
  }
  header << "payload\n";

  std::vector<unsigned char> payload;
  for (const auto& [name, t] : params.entries) {
    (void)name;
    payload.reserve(payload.size() + t.data.size() * 8);
    for (double d : t.data) put_u64_le(payload, double_bits(d));
  }
  std::uint64_t checksum = fnv1a64(payload.data(), payload.size());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot open '" + path + "' for writing");
  const std::string h = header.str();
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  std::vector<unsigned char> tail;
  put_u64_le(tail, checksum);
  f.write(reinterpret_cast<const char*>(tail.data()), 8);
  if (!f) throw DataError("checkpoint: write failed for '" + path + "'");
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(f, line) || line != "coopcast.ckpt 1")
    throw DataError("checkpoint: bad magic line in '" + path + "'");

  struct Entry {
    std::string name;
    std::vector<std::int64_t> shape;
  };
  std::vector<Entry> manifest;
  while (std::getline(f, line)) {
    if (line == "payload") break;
    std::istringstream ls(line);
    std::string tag, name, dtype;
    if (!(ls >> tag >> name >> dtype) || tag != "tensor" || dtype != "f64")
      throw DataError("checkpoint: malformed manifest line: " + line);
    Entry e;
    e.name = name;
    std::int64_t ext;
    while (ls >> ext) e.shape.push_back(ext);
    manifest.push_back(std::move(e));
  }
  if (line != "payload") throw DataError("checkpoint: manifest missing payload marker");

  std::vector<unsigned char> rest((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  std::size_t expected_doubles = 0;
  for (const auto& e : manifest)
    expected_doubles += static_cast<std::size_t>(Tensor::numel(e.shape));
  std::size_t expected_bytes = expected_doubles * 8 + 8;
  if (rest.size() != expected_bytes)
    throw DataError("checkpoint: truncated or oversized payload in '" + path + "' (" +
                    std::to_string(rest.size()) + " bytes, expected " +
                    std::to_string(expected_bytes) + ")");

  std::size_t payload_bytes = rest.size() - 8;
  std::uint64_t stored = get_u64_le(rest.data() + payload_bytes);
  std::uint64_t actual = fnv1a64(rest.data(), payload_bytes);
  if (stored != actual) throw DataError("checkpoint: checksum mismatch in '" + path + "'");

  ParamStore ps;
  std::size_t off = 0;
  for (const auto& e : manifest) {
    Tensor t = Tensor::zeros(e.shape);
    for (auto& d : t.data) {
      d = bits_double(get_u64_le(rest.data() + off));
      off += 8;
    }
    t.requires_grad = true;
    if (!ps.entries.emplace(e.name, std::move(t)).second)
      throw DataError("checkpoint: duplicate tensor '" + e.name + "'");
  }
  return ps;
}

void validate_param_shapes(const ParamStore& params,
                           const std::map<std::string, std::vector<std::int64_t>>& expected) {
  for (const auto& [name, shape] : expected) {
    auto it = params.entries.find(name);
    if (it == params.entries.end())
      throw NumericError("checkpoint incompatible: missing tensor '" + name + "'");
    if (it->second.shape != shape) {
      Tensor probe = Tensor::zeros(shape);
      throw NumericError("checkpoint incompatible: tensor '" + name + "' has shape " +
                         it->second.shape_str() + ", model expects " + probe.shape_str());
    }
  }
  for (const auto& [name, t] : params.entries) {
    (void)t;
    if (!expected.count(name))
      throw NumericError("checkpoint incompatible: unexpected tensor '" + name + "'");
  }
}

}  // namespace coopcast
