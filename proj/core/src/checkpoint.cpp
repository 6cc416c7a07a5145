#include "acadet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "acadet/config.hpp"

namespace acadet {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'A', 'D'};
constexpr std::uint32_t kVersion = 1;

void put(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void take(std::ifstream& in, void* p, std::size_t n, const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw DataError("checkpoint truncated: " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  put(out, kMagic, 4);
  put(out, &kVersion, 4);
  const std::string cfg_json = model_config_to_canonical_json(cfg);
  const std::uint64_t cfg_len = cfg_json.size();
  put(out, &cfg_len, 8);
  put(out, cfg_json.data(), cfg_json.size());
  for (const auto& [name, tensor] : params.all()) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    put(out, &name_len, 4);
    put(out, name.data(), name.size());
    const std::uint32_t b = static_cast<std::uint32_t>(tensor.batch());
    const std::uint32_t c = static_cast<std::uint32_t>(tensor.channels());
    const std::uint32_t t = static_cast<std::uint32_t>(tensor.length());
    put(out, &b, 4);
    put(out, &c, 4);
    put(out, &t, 4);
    const std::uint64_t count = static_cast<std::uint64_t>(tensor.numel());
    put(out, &count, 8);
    put(out, tensor.data().data(), 8 * count);
  }
  if (!out) throw DataError("cannot write checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  take(in, magic, 4, path);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  take(in, &version, 4, path);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version in " + path);
  std::uint64_t cfg_len = 0;
  take(in, &cfg_len, 8, path);
  if (cfg_len == 0 || cfg_len > (1ull << 20))
    throw DataError("implausible checkpoint header in " + path);
  std::string cfg_json(cfg_len, '\0');
  take(in, cfg_json.data(), cfg_len, path);

  Checkpoint ckpt;
  ckpt.config = model_config_from_json_text(cfg_json);
  while (true) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), 4);
    if (in.gcount() == 0 && in.eof()) break;
    if (in.gcount() != 4) throw DataError("checkpoint truncated: " + path);
    if (name_len == 0 || name_len > 4096)
      throw DataError("implausible parameter name in " + path);
    std::string name(name_len, '\0');
    take(in, name.data(), name_len, path);
    std::uint32_t b = 0, c = 0, t = 0;
    std::uint64_t count = 0;
    take(in, &b, 4, path);
    take(in, &c, 4, path);
    take(in, &t, 4, path);
    take(in, &count, 8, path);
    if (b == 0 || c == 0 || t == 0 ||
        count != static_cast<std::uint64_t>(b) * c * t ||
        count > (1ull << 32))
      throw DataError("implausible parameter shape in " + path + " for " +
                      name);
    SeqTensor tensor(static_cast<int>(b), static_cast<int>(c),
                     static_cast<int>(t));
    take(in, tensor.data().data(), 8 * count, path);
    if (!tensor.all_finite())
      throw DataError("non-finite values in " + path + " for " + name);
    if (!ckpt.params.emplace(name, std::move(tensor)).second)
      throw DataError("duplicate parameter in " + path + ": " + name);
  }
  return ckpt;
}

Model load_model(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  Model model(ckpt.config);
  model.load_params(ckpt.params);
  return model;
}

}  // namespace acadet
