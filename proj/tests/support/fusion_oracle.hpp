#pragma once

#include <cmath>
#include <vector>

namespace cdfnet::testing {

// Plain nested-loop transcription of the fusion block, no tensor library.
// Layouts: features [C][H][W] flattened, reduce weight [C][2C], spatial weight [2C].
struct OracleFusion {
  std::vector<double> gate_cha;  // [C]
  std::vector<double> pre_cha, post_cha;
  std::vector<double> gate_spa;  // [H][W]
  std::vector<double> pre_spa, post_spa;
};

inline OracleFusion oracle_fusion(int C, int H, int W, const std::vector<double>& pre, const std::vector<double>& post,
                                  const std::vector<double>& reduce_w, const std::vector<double>& reduce_b,
                                  const std::vector<double>& spatial_w, double spatial_b) {
  const int hw = H * W;
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  OracleFusion o;

  std::vector<double> pooled(2 * C, 0.0);
  for (int c = 0; c < C; ++c)
    for (int p = 0; p < hw; ++p) {
      pooled[c] += pre[c * hw + p] / hw;
      pooled[C + c] += post[c * hw + p] / hw;
    }
  o.gate_cha.resize(C);
  for (int c = 0; c < C; ++c) {
    double z = reduce_b[c];
    for (int k = 0; k < 2 * C; ++k) z += reduce_w[c * 2 * C + k] * pooled[k];
    o.gate_cha[c] = sig(z);
  }

  o.pre_cha.resize(C * hw);
  o.post_cha.resize(C * hw);
  for (int c = 0; c < C; ++c)
    for (int p = 0; p < hw; ++p) {
      o.pre_cha[c * hw + p] = o.gate_cha[c] * post[c * hw + p] + pre[c * hw + p];
      o.post_cha[c * hw + p] = o.gate_cha[c] * pre[c * hw + p] + post[c * hw + p];
    }

  o.gate_spa.resize(hw);
  for (int p = 0; p < hw; ++p) {
    double z = spatial_b;
    for (int c = 0; c < C; ++c) z += spatial_w[c] * o.pre_cha[c * hw + p] + spatial_w[C + c] * o.post_cha[c * hw + p];
    o.gate_spa[p] = sig(z);
  }

  o.pre_spa.resize(C * hw);
  o.post_spa.resize(C * hw);
  for (int c = 0; c < C; ++c)
    for (int p = 0; p < hw; ++p) {
      o.pre_spa[c * hw + p] = o.gate_spa[p] * o.post_cha[c * hw + p] + pre[c * hw + p];
      o.post_spa[c * hw + p] = o.gate_spa[p] * o.pre_cha[c * hw + p] + post[c * hw + p];
    }
  return o;
}

}  // namespace cdfnet::testing
