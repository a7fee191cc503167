#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cdfnet/tensor.hpp"

namespace cdfnet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NamedTensor = std::pair<std::string, Tensor<float>>;

// Binary layout, all integers little-endian u64:
//   "CDF1"
//   repeated until EOF: name_len, name bytes (UTF-8), rank, extents[rank], f32 LE data
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

}  // namespace cdfnet
