#include "vads/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"
#include "vads/error.hpp"

namespace vads {

namespace {

constexpr char kMagic[8] = {'V', 'A', 'D', 'S', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ParseError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

void put_array(std::ostream& os, const std::string& name, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) put_u64(os, d);
  for (double v : t.values) put_f64(os, v);
}

std::pair<std::string, Tensor> get_array(std::istream& is) {
  const std::uint32_t name_len = get_u32(is);
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  if (!is) throw ParseError("checkpoint: truncated array name");
  const std::uint32_t rank = get_u32(is);
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) shape[i] = get_u64(is);
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = get_f64(is);
  return {std::move(name), Tensor(std::move(shape), std::move(data))};
}

}  // namespace

void write_checkpoint(const std::string& path, const std::string& kind,
                      const std::string& hyperparameters_json, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("checkpoint: cannot open '" + path + "' for writing");

  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["kind"] = kind;
  manifest["adam_steps"] = store.adam_step_count();
  manifest["hyperparameters"] =
      hyperparameters_json.empty() ? nlohmann::json::object()
                                   : nlohmann::json::parse(hyperparameters_json);
  const std::string mtext = manifest.dump();

  os.write(kMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(mtext.size()));
  os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  put_u64(os, static_cast<std::uint64_t>(store.size()) * 4);
  for (const auto& [name, e] : store.entries()) {
    put_array(os, "param/" + name, e.value);
    put_array(os, "adam_m/" + name, e.m);
    put_array(os, "adam_v/" + name, e.v);
    put_array(os, "ema/" + name, e.shadow);
  }
  if (!os) throw ValidationError("checkpoint: write to '" + path + "' failed");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("checkpoint: cannot open '" + path + "'");

  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw ParseError("checkpoint: '" + path + "' is not a checkpoint file");
  }
  const std::uint32_t mlen = get_u32(is);
  std::string mtext(mlen, '\0');
  is.read(mtext.data(), mlen);
  if (!is) throw ParseError("checkpoint: truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mtext);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: bad manifest: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.format_version = manifest.value("format_version", 0u);
  if (ckpt.format_version != kFormatVersion) {
    throw ParseError("checkpoint: unsupported format version " +
                     std::to_string(ckpt.format_version));
  }
  ckpt.kind = manifest.value("kind", "");
  ckpt.hyperparameters_json = manifest.value("hyperparameters", nlohmann::json::object()).dump();

  const std::uint64_t n_arrays = get_u64(is);
  std::map<std::string, Tensor> arrays;
  for (std::uint64_t i = 0; i < n_arrays; ++i) {
    auto [name, tensor] = get_array(is);
    arrays.emplace(std::move(name), std::move(tensor));
  }

  for (auto& [full_name, tensor] : arrays) {
    if (full_name.rfind("param/", 0) != 0) continue;
    const std::string name = full_name.substr(6);
    ckpt.store.add(name, tensor);
    ParamStore::Entry& e = ckpt.store.entry(name);
    auto fetch = [&](const std::string& prefix) -> const Tensor& {
      auto it = arrays.find(prefix + name);
      if (it == arrays.end()) {
        throw ValidationError("checkpoint: missing '" + prefix + name + "'");
      }
      if (!it->second.same_shape(e.value)) {
        throw ValidationError("checkpoint: shape mismatch for '" + prefix + name + "'");
      }
      return it->second;
    };
    e.m = fetch("adam_m/");
    e.v = fetch("adam_v/");
    e.shadow = fetch("ema/");
  }
  ckpt.store.set_adam_step_count(manifest.value("adam_steps", 0ull));
  return ckpt;
}

}  // namespace vads
