#include "cdfnet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace cdfnet {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'F', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() {
    need(4);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return std::bit_cast<float>(bits);
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("truncated checkpoint at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, sizeof(kMagic));
  for (const auto& [name, t] : tensors) {
    put_u64(out, name.size());
    out += name;
    put_u64(out, t.rank());
    for (auto e : t.shape()) put_u64(out, static_cast<std::uint64_t>(e));
    for (float v : t.data()) put_f32(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("missing CDF1 magic");
  Reader r(bytes);
  r.str(4);
  std::vector<NamedTensor> out;
  while (!r.at_end()) {
    const auto name_len = r.u64();
    std::string name = r.str(name_len);
    const auto rank = r.u64();
    if (rank > 8) throw CheckpointError("implausible rank " + std::to_string(rank) + " for " + name);
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::int64_t>(r.u64()));
    std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = r.f32();
    out.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  const auto bytes = encode_checkpoint(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed for " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace cdfnet
