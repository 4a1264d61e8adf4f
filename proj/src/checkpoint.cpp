#include "lumos/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace lumos {
namespace {

constexpr char kMagic[] = "LUMOSCKPT1\n";
constexpr size_t kMagicLen = sizeof(kMagic) - 1;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("checkpoint: " + path + ": " + what);
}

void put_u64(std::ostream& os, uint64_t v) {
  // Fixed little-endian on disk so checkpoints are portable across hosts.
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  nlohmann::json header;
  header["config"] = c.config;
  header["iteration"] = c.iteration;
  header["rng_state"] = c.rng_state;
  header["best_val_dsc"] = c.best_val_dsc;
  nlohmann::json arr = nlohmann::json::array();
  int64_t offset = 0;  // in floats, from the start of the blob section
  for (const Param& p : c.arrays) {
    arr.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += p.value.numel();
  }
  header["arrays"] = std::move(arr);
  const std::string hs = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(tmp, "cannot open for writing");
    os.write(kMagic, static_cast<std::streamsize>(kMagicLen));
    put_u64(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Param& p : c.arrays) {
      os.write(reinterpret_cast<const char*>(p.value.data()),
               static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(p.value.numel())));
    }
    if (!os) fail(tmp, "write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(path, "rename from temp file failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path, "cannot open");
  char magic[kMagicLen];
  is.read(magic, static_cast<std::streamsize>(kMagicLen));
  if (!is || std::string(magic, kMagicLen) != std::string(kMagic, kMagicLen)) {
    fail(path, "bad magic, not a checkpoint file");
  }
  const uint64_t hlen = get_u64(is);
  if (!is) fail(path, "truncated header length");
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) fail(path, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    fail(path, std::string("header parse error: ") + e.what());
  }

  Checkpoint c;
  c.config = header.at("config");
  c.iteration = header.at("iteration").get<int64_t>();
  c.rng_state = header.at("rng_state").get<std::string>();
  c.best_val_dsc = header.at("best_val_dsc").get<double>();
  for (const auto& a : header.at("arrays")) {
    Param p;
    p.name = a.at("name").get<std::string>();
    const auto shape = a.at("shape").get<std::vector<int64_t>>();
    p.value = Tensor(shape);
    is.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(p.value.numel())));
    if (!is) fail(path, "truncated array '" + p.name + "'");
    c.arrays.push_back(std::move(p));
  }
  return c;
}

void require_config_match(const Checkpoint& c, const nlohmann::json& expected) {
  if (c.config != expected) {
    throw std::runtime_error(
        "checkpoint: stored config does not match the current experiment config; "
        "refusing to resume across different configurations");
  }
}

}  // namespace lumos
