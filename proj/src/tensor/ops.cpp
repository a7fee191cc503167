#include "cdfnet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cdfnet {

template <typename T>
void Tape<T>::record(std::vector<StoragePtr> inputs, StoragePtr output, std::function<void()> backward_fn) {
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward_fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw AutogradError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  auto it = std::find_if(nodes_.rbegin(), nodes_.rend(),
                         [&](const Node& n) { return n.output == loss.storage(); });
  if (it == nodes_.rend()) {
    throw AutogradError(
        "loss was not produced by an operation on this tape (backward already ran, or the loss "
        "does not depend on any tensor that requires a gradient)");
  }
  auto& seed = loss.storage()->grad;
  seed.assign(1, T(1));
  for (; it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not on a path to the loss
    it->backward_fn();
  }
  nodes_.clear();
}

template class Tape<float>;
template class Tape<double>;

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
using StoragePtr = std::shared_ptr<detail::TensorStorage<T>>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b, const std::string& why = {}) {
  std::string msg = std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " + shape_to_string(b);
  if (!why.empty()) msg += " (" + why + ")";
  throw ShapeError(msg);
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& why) {
  throw ShapeError(std::string(op) + ": invalid shape " + shape_to_string(a) + " (" + why + ")");
}

template <typename T>
std::vector<T>& grad_of(const StoragePtr<T>& s) {
  if (s->grad.empty()) s->grad.assign(s->data.size(), T(0));
  return s->grad;
}

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Wraps freshly computed data as an output tensor and, when needed, records it.
template <typename T, typename Fn>
Tensor<T> emit(Tape<T>& tape, Shape shape, std::vector<T> data, std::initializer_list<const Tensor<T>*> inputs,
               Fn&& make_backward) {
  const bool track = tape.recording() && any_requires_grad<T>(inputs);
  Tensor<T> out(std::move(shape), std::move(data), track);
  if (track) {
    std::vector<StoragePtr<T>> in;
    in.reserve(inputs.size());
    for (const auto* t : inputs) in.push_back(t->storage());
    tape.record(std::move(in), out.storage(), make_backward(out.storage()));
  }
  return out;
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) shape_fail(op, s, "expected rank " + std::to_string(rank));
}

template <typename T>
void im2col3x3(const T* x, std::int64_t channels, std::int64_t h, std::int64_t w, T* cols) {
  const std::int64_t hw = h * w;
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t ky = 0; ky < 3; ++ky) {
      for (std::int64_t kx = 0; kx < 3; ++kx) {
        T* row = cols + ((c * 3 + ky) * 3 + kx) * hw;
        const std::int64_t dy = ky - 1;
        const std::int64_t dx = kx - 1;
        for (std::int64_t y = 0; y < h; ++y) {
          T* dst = row + y * w;
          const std::int64_t sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = x + (c * h + sy) * w;
          const std::int64_t lo = std::max<std::int64_t>(0, -dx);
          const std::int64_t hi = std::min<std::int64_t>(w, w - dx);
          std::fill(dst, dst + lo, T(0));
          std::copy(src + lo + dx, src + hi + dx, dst + lo);
          std::fill(dst + hi, dst + w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im3x3_add(const T* cols, std::int64_t channels, std::int64_t h, std::int64_t w, T* gx) {
  const std::int64_t hw = h * w;
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t ky = 0; ky < 3; ++ky) {
      for (std::int64_t kx = 0; kx < 3; ++kx) {
        const T* row = cols + ((c * 3 + ky) * 3 + kx) * hw;
        const std::int64_t dy = ky - 1;
        const std::int64_t dx = kx - 1;
        for (std::int64_t y = 0; y < h; ++y) {
          const std::int64_t sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + y * w;
          T* dst = gx + (c * h + sy) * w;
          const std::int64_t lo = std::max<std::int64_t>(0, -dx);
          const std::int64_t hi = std::min<std::int64_t>(w, w - dx);
          for (std::int64_t x = lo; x < hi; ++x) dst[x + dx] += src[x];
        }
      }
    }
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("conv2d", input.shape(), 3);
  require_rank("conv2d", weight.shape(), 4);
  const std::int64_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::int64_t cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin) shape_fail("conv2d", input.shape(), weight.shape(), "input channels differ");
  if (k != weight.dim(3) || (k != 1 && k != 3)) shape_fail("conv2d", weight.shape(), "kernel must be 1x1 or 3x3");
  if (bias.shape() != Shape{cout}) shape_fail("conv2d", weight.shape(), bias.shape(), "bias must be [Cout]");

  const std::int64_t hw = h * w;
  const std::int64_t kdim = cin * k * k;
  std::shared_ptr<std::vector<T>> cols;
  const T* col_ptr = input.data().data();
  if (k == 3) {
    cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(kdim * hw));
    im2col3x3(input.data().data(), cin, h, w, cols->data());
    col_ptr = cols->data();
  }

  std::vector<T> out(static_cast<std::size_t>(cout * hw));
  {
    ConstMatMap<T> wm(weight.data().data(), cout, kdim);
    ConstMatMap<T> cm(col_ptr, kdim, hw);
    MatMap<T> om(out.data(), cout, hw);
    om.noalias() = wm * cm;
    for (std::int64_t o = 0; o < cout; ++o) om.row(o).array() += bias.data()[static_cast<std::size_t>(o)];
  }

  return emit<T>(tape, Shape{cout, h, w}, std::move(out), {&input, &weight, &bias}, [=](const StoragePtr<T>& y) {
    auto xs = input.storage(), ws = weight.storage(), bs = bias.storage();
    return [=]() {
      ConstMatMap<T> gy(y->grad.data(), cout, hw);
      const T* colp = cols ? cols->data() : xs->data.data();
      if (ws->requires_grad) {
        MatMap<T> gw(grad_of(ws).data(), cout, kdim);
        gw.noalias() += gy * ConstMatMap<T>(colp, kdim, hw).transpose();
      }
      if (bs->requires_grad) {
        auto& gb = grad_of(bs);
        // Plain loop: Eigen's vectorised reduction order depends on buffer alignment.
        for (std::int64_t o = 0; o < cout; ++o) {
          T acc = 0;
          for (std::int64_t p = 0; p < hw; ++p) acc += y->grad[static_cast<std::size_t>(o * hw + p)];
          gb[static_cast<std::size_t>(o)] += acc;
        }
      }
      if (xs->requires_grad) {
        ConstMatMap<T> wm(ws->data.data(), cout, kdim);
        if (k == 1) {
          MatMap<T> gx(grad_of(xs).data(), cin, hw);
          gx.noalias() += wm.transpose() * gy;
        } else {
          std::vector<T> gcols(static_cast<std::size_t>(kdim * hw));
          MatMap<T>(gcols.data(), kdim, hw).noalias() = wm.transpose() * gy;
          col2im3x3_add(gcols.data(), cin, h, w, grad_of(xs).data());
        }
      }
    };
  });
}

template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("linear", input.shape(), 1);
  require_rank("linear", weight.shape(), 2);
  const std::int64_t nin = input.dim(0), nout = weight.dim(0);
  if (weight.dim(1) != nin) shape_fail("linear", input.shape(), weight.shape(), "input width differs");
  if (bias.shape() != Shape{nout}) shape_fail("linear", weight.shape(), bias.shape(), "bias must be [Nout]");

  std::vector<T> out(static_cast<std::size_t>(nout));
  for (std::int64_t o = 0; o < nout; ++o) {
    T acc = bias.data()[static_cast<std::size_t>(o)];
    for (std::int64_t i = 0; i < nin; ++i)
      acc += weight.data()[static_cast<std::size_t>(o * nin + i)] * input.data()[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(o)] = acc;
  }
  return emit<T>(tape, Shape{nout}, std::move(out), {&input, &weight, &bias}, [=](const StoragePtr<T>& y) {
    auto xs = input.storage(), ws = weight.storage(), bs = bias.storage();
    return [=]() {
      const auto& gy = y->grad;
      if (ws->requires_grad) {
        auto& gw = grad_of(ws);
        for (std::int64_t o = 0; o < nout; ++o)
          for (std::int64_t i = 0; i < nin; ++i)
            gw[static_cast<std::size_t>(o * nin + i)] += gy[static_cast<std::size_t>(o)] * xs->data[static_cast<std::size_t>(i)];
      }
      if (bs->requires_grad) {
        auto& gb = grad_of(bs);
        for (std::int64_t o = 0; o < nout; ++o) gb[static_cast<std::size_t>(o)] += gy[static_cast<std::size_t>(o)];
      }
      if (xs->requires_grad) {
        auto& gx = grad_of(xs);
        for (std::int64_t o = 0; o < nout; ++o)
          for (std::int64_t i = 0; i < nin; ++i)
            gx[static_cast<std::size_t>(i)] += ws->data[static_cast<std::size_t>(o * nin + i)] * gy[static_cast<std::size_t>(o)];
      }
    };
  });
}

template <typename T>
Tensor<T> global_average_pool(Tape<T>& tape, const Tensor<T>& input) {
  require_rank("global_average_pool", input.shape(), 3);
  const std::int64_t c = input.dim(0), hw = input.dim(1) * input.dim(2);
  if (hw == 0) shape_fail("global_average_pool", input.shape(), "empty spatial extent");
  std::vector<T> out(static_cast<std::size_t>(c));
  const auto x = input.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    T acc = 0;
    for (std::int64_t i = 0; i < hw; ++i) acc += x[static_cast<std::size_t>(ch * hw + i)];
    out[static_cast<std::size_t>(ch)] = acc / static_cast<T>(hw);
  }
  return emit<T>(tape, Shape{c}, std::move(out), {&input}, [=](const StoragePtr<T>& y) {
    auto xs = input.storage();
    return [=]() {
      auto& gx = grad_of(xs);
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T g = y->grad[static_cast<std::size_t>(ch)] / static_cast<T>(hw);
        for (std::int64_t i = 0; i < hw; ++i) gx[static_cast<std::size_t>(ch * hw + i)] += g;
      }
    };
  });
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input) {
  std::vector<T> out(input.numel());
  std::transform(input.data().begin(), input.data().end(), out.begin(), stable_sigmoid<T>);
  return emit<T>(tape, input.shape(), std::move(out), {&input}, [=](const StoragePtr<T>& y) {
    auto xs = input.storage();
    return [=]() {
      auto& gx = grad_of(xs);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const T s = y->data[i];
        gx[i] += y->grad[i] * s * (T(1) - s);
      }
    };
  });
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input) {
  std::vector<T> out(input.numel());
  std::transform(input.data().begin(), input.data().end(), out.begin(), [](T v) { return v > T(0) ? v : T(0); });
  return emit<T>(tape, input.shape(), std::move(out), {&input}, [=](const StoragePtr<T>& y) {
    auto xs = input.storage();
    return [=]() {
      auto& gx = grad_of(xs);
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (xs->data[i] > T(0)) gx[i] += y->grad[i];
    };
  });
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& first, const Tensor<T>& second) {
  require_rank("concat_channels", first.shape(), 3);
  require_rank("concat_channels", second.shape(), 3);
  if (first.dim(1) != second.dim(1) || first.dim(2) != second.dim(2))
    shape_fail("concat_channels", first.shape(), second.shape(), "spatial extents differ");
  std::vector<T> out;
  out.reserve(first.numel() + second.numel());
  out.insert(out.end(), first.data().begin(), first.data().end());
  out.insert(out.end(), second.data().begin(), second.data().end());
  const std::size_t split = first.numel();
  return emit<T>(tape, Shape{first.dim(0) + second.dim(0), first.dim(1), first.dim(2)}, std::move(out),
                 {&first, &second}, [=](const StoragePtr<T>& y) {
                   auto as = first.storage(), bs = second.storage();
                   return [=]() {
                     if (as->requires_grad) {
                       auto& ga = grad_of(as);
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += y->grad[i];
                     }
                     if (bs->requires_grad) {
                       auto& gb = grad_of(bs);
                       for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += y->grad[split + i];
                     }
                   };
                 });
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return emit<T>(tape, a.shape(), std::move(out), {&a, &b}, [=](const StoragePtr<T>& y) {
    auto as = a.storage(), bs = b.storage();
    return [=]() {
      for (const auto& s : {as, bs}) {
        if (!s->requires_grad) continue;
        auto& g = grad_of(s);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += y->grad[i];
      }
    };
  });
}

template <typename T>
Tensor<T> multiply(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_fail("multiply", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return emit<T>(tape, a.shape(), std::move(out), {&a, &b}, [=](const StoragePtr<T>& y) {
    auto as = a.storage(), bs = b.storage();
    return [=]() {
      if (as->requires_grad) {
        auto& g = grad_of(as);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += y->grad[i] * bs->data[i];
      }
      if (bs->requires_grad) {
        auto& g = grad_of(bs);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += y->grad[i] * as->data[i];
      }
    };
  });
}

template <typename T>
Tensor<T> channelwise_scale(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& scales) {
  require_rank("channelwise_scale", input.shape(), 3);
  if (scales.shape() != Shape{input.dim(0)})
    shape_fail("channelwise_scale", input.shape(), scales.shape(), "scale vector must have one entry per channel");
  const std::int64_t c = input.dim(0), hw = input.dim(1) * input.dim(2);
  std::vector<T> out(input.numel());
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const T s = scales.data()[static_cast<std::size_t>(ch)];
    for (std::int64_t i = 0; i < hw; ++i) {
      const auto idx = static_cast<std::size_t>(ch * hw + i);
      out[idx] = input.data()[idx] * s;
    }
  }
  return emit<T>(tape, input.shape(), std::move(out), {&input, &scales}, [=](const StoragePtr<T>& y) {
    auto xs = input.storage(), ss = scales.storage();
    return [=]() {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const auto cs = static_cast<std::size_t>(ch);
        T acc = 0;
        for (std::int64_t i = 0; i < hw; ++i) {
          const auto idx = static_cast<std::size_t>(ch * hw + i);
          acc += y->grad[idx] * xs->data[idx];
          if (xs->requires_grad) grad_of(xs)[idx] += y->grad[idx] * ss->data[cs];
        }
        if (ss->requires_grad) grad_of(ss)[cs] += acc;
      }
    };
  });
}

template <typename T>
Tensor<T> spatialwise_scale(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& map) {
  require_rank("spatialwise_scale", input.shape(), 3);
  if (map.shape() != Shape{1, input.dim(1), input.dim(2)})
    shape_fail("spatialwise_scale", input.shape(), map.shape(), "map must be [1,H,W]");
  const std::int64_t c = input.dim(0), hw = input.dim(1) * input.dim(2);
  std::vector<T> out(input.numel());
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < hw; ++i) {
      const auto idx = static_cast<std::size_t>(ch * hw + i);
      out[idx] = input.data()[idx] * map.data()[static_cast<std::size_t>(i)];
    }
  return emit<T>(tape, input.shape(), std::move(out), {&input, &map}, [=](const StoragePtr<T>& y) {
    auto xs = input.storage(), ms = map.storage();
    return [=]() {
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < hw; ++i) {
          const auto idx = static_cast<std::size_t>(ch * hw + i);
          const auto mi = static_cast<std::size_t>(i);
          if (xs->requires_grad) grad_of(xs)[idx] += y->grad[idx] * ms->data[mi];
          if (ms->requires_grad) grad_of(ms)[mi] += y->grad[idx] * xs->data[idx];
        }
    };
  });
}

template <typename T>
Tensor<T> max_pool2x2(Tape<T>& tape, const Tensor<T>& input) {
  require_rank("max_pool2x2", input.shape(), 3);
  const std::int64_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 || w % 2) shape_fail("max_pool2x2", input.shape(), "H and W must be even");
  const std::int64_t oh = h / 2, ow = w / 2;
  std::vector<T> out(static_cast<std::size_t>(c * oh * ow));
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  const auto x = input.data();
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx) {
        std::size_t best = static_cast<std::size_t>((ch * h + 2 * y) * w + 2 * xx);
        for (std::int64_t dy = 0; dy < 2; ++dy)
          for (std::int64_t dx = 0; dx < 2; ++dx) {
            const auto idx = static_cast<std::size_t>((ch * h + 2 * y + dy) * w + 2 * xx + dx);
            if (x[idx] > x[best]) best = idx;
          }
        const auto o = static_cast<std::size_t>((ch * oh + y) * ow + xx);
        out[o] = x[best];
        (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
  return emit<T>(tape, Shape{c, oh, ow}, std::move(out), {&input}, [=](const StoragePtr<T>& yv) {
    auto xs = input.storage();
    return [=]() {
      auto& gx = grad_of(xs);
      for (std::size_t o = 0; o < argmax->size(); ++o) gx[(*argmax)[o]] += yv->grad[o];
    };
  });
}

template <typename T>
Tensor<T> upsample_nearest2x(Tape<T>& tape, const Tensor<T>& input) {
  require_rank("upsample_nearest2x", input.shape(), 3);
  const std::int64_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::int64_t oh = 2 * h, ow = 2 * w;
  std::vector<T> out(static_cast<std::size_t>(c * oh * ow));
  const auto x = input.data();
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx)
        out[static_cast<std::size_t>((ch * oh + y) * ow + xx)] = x[static_cast<std::size_t>((ch * h + y / 2) * w + xx / 2)];
  return emit<T>(tape, Shape{c, oh, ow}, std::move(out), {&input}, [=](const StoragePtr<T>& yv) {
    auto xs = input.storage();
    return [=]() {
      auto& gx = grad_of(xs);
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < oh; ++y)
          for (std::int64_t xx = 0; xx < ow; ++xx)
            gx[static_cast<std::size_t>((ch * h + y / 2) * w + xx / 2)] +=
                yv->grad[static_cast<std::size_t>((ch * oh + y) * ow + xx)];
    };
  });
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                                std::uint8_t ignore_index) {
  require_rank("softmax_cross_entropy", logits.shape(), 3);
  const std::int64_t k = logits.dim(0), hw = logits.dim(1) * logits.dim(2);
  if (static_cast<std::int64_t>(labels.size()) != hw)
    shape_fail("softmax_cross_entropy", logits.shape(), Shape{static_cast<std::int64_t>(labels.size())},
               "label count must equal H*W");

  // Softmax probabilities are kept for the backward pass.
  auto probs = std::make_shared<std::vector<T>>(logits.numel());
  auto counted = std::make_shared<std::int64_t>(0);
  const auto z = logits.data();
  T total = 0;
  for (std::int64_t i = 0; i < hw; ++i) {
    const std::uint8_t label = labels[static_cast<std::size_t>(i)];
    if (label != ignore_index && label >= k) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                       std::to_string(k) + " classes (only " + std::to_string(ignore_index) + " is ignored)");
    }
    T mx = -std::numeric_limits<T>::infinity();
    for (std::int64_t c = 0; c < k; ++c) mx = std::max(mx, z[static_cast<std::size_t>(c * hw + i)]);
    T denom = 0;
    for (std::int64_t c = 0; c < k; ++c) {
      const auto idx = static_cast<std::size_t>(c * hw + i);
      (*probs)[idx] = std::exp(z[idx] - mx);
      denom += (*probs)[idx];
    }
    for (std::int64_t c = 0; c < k; ++c) (*probs)[static_cast<std::size_t>(c * hw + i)] /= denom;
    if (label == ignore_index) continue;
    total += -(z[static_cast<std::size_t>(label * hw + i)] - mx - std::log(denom));
    ++*counted;
  }
  const T loss = *counted ? total / static_cast<T>(*counted) : T(0);
  std::vector<std::uint8_t> label_copy(labels.begin(), labels.end());
  return emit<T>(tape, Shape{}, std::vector<T>{loss}, {&logits}, [=, label_copy = std::move(label_copy)](const StoragePtr<T>& y) {
    auto zs = logits.storage();
    return [=]() {
      if (*counted == 0) return;
      auto& gz = grad_of(zs);
      const T g = y->grad[0] / static_cast<T>(*counted);
      for (std::int64_t i = 0; i < hw; ++i) {
        const std::uint8_t label = label_copy[static_cast<std::size_t>(i)];
        if (label == ignore_index) continue;
        for (std::int64_t c = 0; c < k; ++c) {
          const auto idx = static_cast<std::size_t>(c * hw + i);
          gz[idx] += g * ((*probs)[idx] - (c == label ? T(1) : T(0)));
        }
      }
    };
  });
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& input) {
  T acc = 0;
  for (T v : input.data()) acc += v;
  return emit<T>(tape, Shape{}, std::vector<T>{acc}, {&input}, [=](const StoragePtr<T>& y) {
    auto xs = input.storage();
    return [=]() {
      auto& gx = grad_of(xs);
      for (auto& g : gx) g += y->grad[0];
    };
  });
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& input, T factor) {
  std::vector<T> out(input.numel());
  std::transform(input.data().begin(), input.data().end(), out.begin(), [=](T v) { return v * factor; });
  return emit<T>(tape, input.shape(), std::move(out), {&input}, [=](const StoragePtr<T>& y) {
    auto xs = input.storage();
    return [=]() {
      auto& gx = grad_of(xs);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += y->grad[i] * factor;
    };
  });
}

#define CDFNET_INSTANTIATE_OPS(T)                                                                              \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> linear(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> global_average_pool(Tape<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                                        \
  template Tensor<T> concat_channels(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> multiply(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> channelwise_scale(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> spatialwise_scale(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> max_pool2x2(Tape<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> upsample_nearest2x(Tape<T>&, const Tensor<T>&);                                          \
  template Tensor<T> softmax_cross_entropy(Tape<T>&, const Tensor<T>&, std::span<const std::uint8_t>,         \
                                           std::uint8_t);                                                     \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                                         \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);

CDFNET_INSTANTIATE_OPS(float)
CDFNET_INSTANTIATE_OPS(double)

}  // namespace cdfnet
