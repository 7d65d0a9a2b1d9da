#pragma once

// Self-describing tensor container.
//
// Layout: the 8 bytes "TSACCKPT", a little-endian uint64 header length, a
// JSON header, then raw little-endian tensor data. The header is
//   {"format": 1, "meta": {...},
//    "tensors": [{"key": "critics.0.layer0_q.weight", "dtype": "float32",
//                 "shape": [128, 128], "offset": 0, "nbytes": 65536}, ...]}
// with offsets counted from the first byte after the header.

#include <torch/torch.h>

#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

namespace tsac::checkpoint {

using TensorList = std::vector<std::pair<std::string, torch::Tensor>>;

struct Contents {
  TensorList tensors;
  nlohmann::json meta;

  const torch::Tensor& at(const std::string& key) const;
};

void save(const std::string& path, const TensorList& tensors, const nlohmann::json& meta);
Contents load(const std::string& path);

/// Parameters and buffers of `m`, keyed "<prefix>.<module path>".
TensorList collect(const std::string& prefix, const torch::nn::Module& m);

/// Copies every "<prefix>.*" entry into `m`; missing keys or shape mismatches throw.
void restore(torch::nn::Module& m, const std::string& prefix, const Contents& c);

}  // namespace tsac::checkpoint
