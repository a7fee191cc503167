#include "cdfnet/sample.hpp"

#include <algorithm>
#include <stdexcept>

namespace cdfnet {

void DamageMask::validate() const {
  if (static_cast<std::int64_t>(labels.size()) != height * width)
    throw std::invalid_argument("damage mask storage does not match " + std::to_string(height) + "x" +
                                std::to_string(width));
  for (auto v : labels) {
    if (v >= kNumClasses && v != kIgnoreLabel)
      throw std::invalid_argument("damage mask contains invalid class id " + std::to_string(v));
  }
}

std::array<std::int64_t, kNumClasses> DamageMask::class_counts() const {
  std::array<std::int64_t, kNumClasses> counts{};
  for (auto v : labels)
    if (v < kNumClasses) ++counts[v];
  return counts;
}

void SamplePair::validate() const {
  if (!pre.defined() || !post.defined() || pre.rank() != 3 || pre.shape() != post.shape())
    throw std::invalid_argument("sample " + id + ": pre and post images must share one [c,H,W] shape");
  if (pre.dim(1) != mask.height || pre.dim(2) != mask.width)
    throw std::invalid_argument("sample " + id + ": mask is " + std::to_string(mask.height) + "x" +
                                std::to_string(mask.width) + " but images are " + shape_to_string(pre.shape()));
  mask.validate();
}

bool same_pixels(const SamplePair& a, const SamplePair& b) {
  auto eq = [](const Tensor<float>& x, const Tensor<float>& y) {
    return x.shape() == y.shape() && std::equal(x.data().begin(), x.data().end(), y.data().begin());
  };
  return eq(a.pre, b.pre) && eq(a.post, b.post) && a.mask == b.mask;
}

}  // namespace cdfnet
