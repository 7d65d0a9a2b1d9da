#include "tsac/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tsac::checkpoint {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'A', 'C', 'C', 'K', 'P', 'T'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    default: throw std::invalid_argument("checkpoint: unsupported dtype");
  }
}

torch::ScalarType dtype_from(const std::string& s) {
  if (s == "float32") return torch::kFloat32;
  if (s == "float64") return torch::kFloat64;
  if (s == "int64") return torch::kInt64;
  throw std::runtime_error("checkpoint: unknown dtype " + s);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

const torch::Tensor& Contents::at(const std::string& key) const {
  for (const auto& [k, t] : tensors) {
    if (k == key) return t;
  }
  throw std::out_of_range("checkpoint: no tensor named " + key);
}

void save(const std::string& path, const TensorList& tensors, const nlohmann::json& meta) {
  nlohmann::json header;
  header["format"] = 1;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::vector<torch::Tensor> data;
  std::uint64_t offset = 0;
  for (const auto& [key, t] : tensors) {
    auto c = t.detach().cpu().contiguous();
    const std::uint64_t nbytes = static_cast<std::uint64_t>(c.numel()) * c.element_size();
    header["tensors"].push_back({{"key", key},
                                 {"dtype", dtype_name(c.scalar_type())},
                                 {"shape", c.sizes().vec()},
                                 {"offset", offset},
                                 {"nbytes", nbytes}});
    offset += nbytes;
    data.push_back(c);
  }
  const std::string text = header.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + tmp);
    os.write(kMagic, sizeof kMagic);
    put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& c : data) {
      os.write(static_cast<const char*>(c.data_ptr()),
               static_cast<std::streamsize>(c.numel() * c.element_size()));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("checkpoint: cannot move " + tmp + " to " + path);
  }
}

Contents load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: " + path + " is not a tsac checkpoint");
  }
  const auto hlen = get_u64(is);
  std::string text(hlen, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(hlen))) {
    throw std::runtime_error("checkpoint: truncated header");
  }
  const auto header = nlohmann::json::parse(text);
  if (header.at("format").get<int>() != 1) throw std::runtime_error("checkpoint: unknown format");
  const auto base = is.tellg();
  Contents out;
  out.meta = header.at("meta");
  for (const auto& e : header.at("tensors")) {
    const auto shape = e.at("shape").get<std::vector<int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(e.at("dtype"))));
    const auto nbytes = e.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(t.numel()) * t.element_size()) {
      throw std::runtime_error("checkpoint: size mismatch for " + e.at("key").get<std::string>());
    }
    is.seekg(base + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    if (!is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes))) {
      throw std::runtime_error("checkpoint: truncated data");
    }
    out.tensors.emplace_back(e.at("key").get<std::string>(), t);
  }
  return out;
}

TensorList collect(const std::string& prefix, const torch::nn::Module& m) {
  TensorList out;
  for (const auto& p : m.named_parameters(true)) out.emplace_back(prefix + "." + p.key(), p.value());
  for (const auto& b : m.named_buffers(true)) out.emplace_back(prefix + "." + b.key(), b.value());
  return out;
}

void restore(torch::nn::Module& m, const std::string& prefix, const Contents& c) {
  torch::NoGradGuard ng;
  auto apply = [&](const std::string& key, torch::Tensor& dst) {
    const auto& src = c.at(prefix + "." + key);
    if (src.sizes() != dst.sizes()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + prefix + "." + key);
    }
    dst.copy_(src);
  };
  for (auto& p : m.named_parameters(true)) apply(p.key(), p.value());
  for (auto& b : m.named_buffers(true)) apply(b.key(), b.value());
}

}  // namespace tsac::checkpoint
