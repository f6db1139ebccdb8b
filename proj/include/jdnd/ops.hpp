/* Copyright 2026 The JDND Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Differentiable free functions over Var. Feature maps are NHWC.

#ifndef JDND_OPS_HPP_
#define JDND_OPS_HPP_

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "jdnd/autograd.hpp"

namespace jdnd {

using IndexMap = std::shared_ptr<const std::vector<Index>>;

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                      shape_string(b));
  }
}

template <typename Scalar, typename F, typename DF>
Var<Scalar> unary(const Var<Scalar>& x, F f, DF df) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.value().array().unaryExpr(f);
  Tensor<Scalar> out_copy = x.requires_grad() ? out : Tensor<Scalar>();
  return make_result<Scalar>(std::move(out), {x},
                             [x, df, y = std::move(out_copy)](const Tensor<Scalar>& g) {
                               x.node()->accumulate(g.array() * df(x.value().array(), y.array()));
                             });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [a, b](const Tensor<Scalar>& g) {
    a.node()->accumulate(g.array());
    b.node()->accumulate(g.array());
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Scalar> out(a.shape(), a.value().array() - b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [a, b](const Tensor<Scalar>& g) {
    a.node()->accumulate(g.array());
    b.node()->accumulate(-g.array());
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape(), a.value().array() * b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [a, b](const Tensor<Scalar>& g) {
    a.node()->accumulate(g.array() * b.value().array());
    b.node()->accumulate(g.array() * a.value().array());
  });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) { return mul(a, b); }

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar s) {
  Tensor<Scalar> out(x.shape(), x.value().array() * s);
  return make_result<Scalar>(std::move(out), {x}, [x, s](const Tensor<Scalar>& g) {
    x.node()->accumulate(g.array() * s);
  });
}

/// x + c for a constant tensor c (no gradient to c).
template <typename Scalar>
Var<Scalar> add_constant(const Var<Scalar>& x, const Tensor<Scalar>& c) {
  detail::require_same_shape(x.shape(), c.shape(), "add_constant");
  Tensor<Scalar> out(x.shape(), x.value().array() + c.array());
  return make_result<Scalar>(std::move(out), {x},
                             [x](const Tensor<Scalar>& g) { x.node()->accumulate(g.array()); });
}

/// Adds a per-channel vector b[C] along the last axis.
template <typename Scalar>
Var<Scalar> add_channels(const Var<Scalar>& x, const Var<Scalar>& b) {
  if (b.size() != x.value().cols()) throw ConfigError("add_channels: channel mismatch");
  Tensor<Scalar> out = x.value();
  out.matrix().rowwise() += b.value().array().matrix().transpose();
  return make_result<Scalar>(std::move(out), {x, b}, [x, b](const Tensor<Scalar>& g) {
    x.node()->accumulate(g.array());
    if (b.requires_grad()) {
      typename Tensor<Scalar>::Array colsum = g.matrix().colwise().sum().transpose().array();
      b.node()->accumulate(colsum);
    }
  });
}

template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x) {
  return detail::unary(
      x,
      [](Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v * Scalar(M_SQRT1_2))); },
      [](const auto& xv, const auto&) {
        const auto cdf = xv.unaryExpr([](Scalar v) { return std::erf(v * Scalar(M_SQRT1_2)); });
        const Scalar inv_sqrt_2pi = Scalar(0.39894228040143267794);
        return (Scalar(0.5) * (Scalar(1) + cdf) +
                xv * inv_sqrt_2pi * (Scalar(-0.5) * xv.square()).exp())
            .eval();
      });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope = Scalar(0.1)) {
  return detail::unary(
      x, [slope](Scalar v) { return v > 0 ? v : slope * v; },
      [slope](const auto& xv, const auto&) {
        return ((xv > Scalar(0)).template cast<Scalar>() * (Scalar(1) - slope) + slope).eval();
      });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); },
      [](const auto&, const auto& y) { return (y * (Scalar(1) - y)).eval(); });
}

template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& x) {
  return detail::unary(
      x,
      [](Scalar v) { return v > Scalar(20) ? v : std::log1p(std::exp(v)); },
      [](const auto& xv, const auto&) { return (Scalar(1) / (Scalar(1) + (-xv).exp())).eval(); });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return std::exp(v); }, [](const auto&, const auto& y) { return y; });
}

template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return std::abs(v); },
      [](const auto& xv, const auto&) { return xv.sign().eval(); });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& x) {
  return detail::unary(
      x, [](Scalar v) { return v * v; },
      [](const auto& xv, const auto&) { return (Scalar(2) * xv).eval(); });
}

/// max(x, floor); the gradient is passed only where x > floor.
template <typename Scalar>
Var<Scalar> clamp_min(const Var<Scalar>& x, Scalar floor) {
  return detail::unary(
      x, [floor](Scalar v) { return v > floor ? v : floor; },
      [floor](const auto& xv, const auto&) { return (xv > floor).template cast<Scalar>().eval(); });
}

// ---------------------------------------------------------------- reductions

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Tensor<Scalar> out(Shape{1}, x.value().array().sum());
  return make_result<Scalar>(std::move(out), {x}, [x](const Tensor<Scalar>& g) {
    x.node()->accumulate(Tensor<Scalar>::Array::Constant(x.size(), g[0]));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.size()));
}

// ---------------------------------------------------------------- structural

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  Tensor<Scalar> out = x.value().reshaped(std::move(shape));
  return make_result<Scalar>(std::move(out), {x},
                             [x](const Tensor<Scalar>& g) { x.node()->accumulate(g.array()); });
}

/// Row gather: output row i is input row idx[i] (rows over the last axis),
/// or zeros where idx[i] < 0. Backward scatter-adds.
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& x, IndexMap idx, Shape out_shape) {
  const Index cols = x.value().cols();
  if (out_shape.empty() || out_shape.back() != cols ||
      shape_size(out_shape) != static_cast<Index>(idx->size()) * cols) {
    throw ConfigError("gather_rows: output shape " + shape_string(out_shape) +
                      " does not fit the index map");
  }
  Tensor<Scalar> out(std::move(out_shape));
  const Scalar* src = x.value().data();
  Scalar* dst = out.data();
  const auto& map = *idx;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] >= 0) std::copy_n(src + map[i] * cols, cols, dst + static_cast<Index>(i) * cols);
  }
  return make_result<Scalar>(std::move(out), {x}, [x, idx, cols](const Tensor<Scalar>& g) {
    Tensor<Scalar> gx(x.shape());
    Scalar* gd = gx.data();
    const Scalar* gs = g.data();
    const auto& m = *idx;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] < 0) continue;
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(gd + m[i] * cols, cols) +=
          Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(
              gs + static_cast<Index>(i) * cols, cols);
    }
    x.node()->accumulate(gx.array());
  });
}

/// Elementwise gather with the same conventions as gather_rows.
template <typename Scalar>
Var<Scalar> gather(const Var<Scalar>& x, IndexMap idx, Shape out_shape) {
  if (shape_size(out_shape) != static_cast<Index>(idx->size())) {
    throw ConfigError("gather: output shape does not fit the index map");
  }
  Tensor<Scalar> out(std::move(out_shape));
  const auto& map = *idx;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] >= 0) out[static_cast<Index>(i)] = x.value()[map[i]];
  }
  return make_result<Scalar>(std::move(out), {x}, [x, idx](const Tensor<Scalar>& g) {
    Tensor<Scalar> gx(x.shape());
    const auto& m = *idx;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] >= 0) gx[m[i]] += g[static_cast<Index>(i)];
    }
    x.node()->accumulate(gx.array());
  });
}

/// Concatenates [B, L1, C] and [B, L2, C] along the token axis.
template <typename Scalar>
Var<Scalar> concat_tokens(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.value().rank() != 3 || b.value().rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2)) {
    throw ConfigError("concat_tokens: incompatible shapes " + shape_string(a.shape()) + " and " +
                      shape_string(b.shape()));
  }
  const Index batch = a.dim(0), la = a.dim(1), lb = b.dim(1), c = a.dim(2);
  Tensor<Scalar> out(Shape{batch, la + lb, c});
  for (Index i = 0; i < batch; ++i) {
    std::copy_n(a.value().data() + i * la * c, la * c, out.data() + i * (la + lb) * c);
    std::copy_n(b.value().data() + i * lb * c, lb * c, out.data() + (i * (la + lb) + la) * c);
  }
  return make_result<Scalar>(std::move(out), {a, b}, [a, b, batch, la, lb, c](const Tensor<Scalar>& g) {
    if (a.requires_grad()) {
      Tensor<Scalar> ga(a.shape());
      for (Index i = 0; i < batch; ++i)
        std::copy_n(g.data() + i * (la + lb) * c, la * c, ga.data() + i * la * c);
      a.node()->accumulate(ga.array());
    }
    if (b.requires_grad()) {
      Tensor<Scalar> gb(b.shape());
      for (Index i = 0; i < batch; ++i)
        std::copy_n(g.data() + (i * (la + lb) + la) * c, lb * c, gb.data() + i * lb * c);
      b.node()->accumulate(gb.array());
    }
  });
}

/// Channels [begin, begin + count) of the last axis.
template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, Index begin, Index count) {
  const Index c = x.value().cols();
  if (begin < 0 || count < 0 || begin + count > c) throw ConfigError("slice_channels: out of range");
  Shape shape = x.shape();
  shape.back() = count;
  Tensor<Scalar> out(shape);
  out.matrix() = x.value().matrix().middleCols(begin, count);
  return make_result<Scalar>(std::move(out), {x}, [x, begin, count](const Tensor<Scalar>& g) {
    Tensor<Scalar> gx(x.shape());
    gx.matrix().middleCols(begin, count) = g.matrix();
    x.node()->accumulate(gx.array());
  });
}

// ---------------------------------------------------------------- linear maps

/// y = x·Wᵀ + b over the last axis; W is [out, in].
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b = {}) {
  const Index in = w.dim(1), outc = w.dim(0);
  if (x.value().cols() != in) {
    throw ConfigError("linear: input has " + std::to_string(x.value().cols()) +
                      " channels, weight expects " + std::to_string(in));
  }
  Shape shape = x.shape();
  shape.back() = outc;
  Tensor<Scalar> out(shape);
  out.matrix().noalias() = x.value().matrix() * w.value().matrix().transpose();
  if (b.defined()) out.matrix().rowwise() += b.value().array().matrix().transpose();
  mac_counter() += static_cast<std::uint64_t>(x.value().rows() * in * outc);
  return make_result<Scalar>(std::move(out), {x, w, b}, [x, w, b](const Tensor<Scalar>& g) {
    if (x.requires_grad()) {
      Tensor<Scalar> gx(x.shape());
      gx.matrix().noalias() = g.matrix() * w.value().matrix();
      x.node()->accumulate(gx.array());
    }
    if (w.requires_grad()) {
      Tensor<Scalar> gw(w.shape());
      gw.matrix().noalias() = g.matrix().transpose() * x.value().matrix();
      w.node()->accumulate(gw.array());
    }
    if (b.requires_grad()) {
      b.node()->accumulate(g.matrix().colwise().sum().transpose().array());
    }
  });
}

namespace detail {

/// Sliding-window geometry from a source grid to an output grid:
/// output (oy, ox) reads source (oy*stride - pad + ky, ox*stride - pad + kx).
struct ConvGeometry {
  Index src_h, src_w, out_h, out_w, kernel, stride, pad;
};

/// cols[(oy*out_w+ox), (ky*k+kx)*count + c] = src[iy, ix, first + c] or 0.
template <typename Scalar>
void im2col(const Scalar* src, Index channels, Index first, Index count, const ConvGeometry& g,
            RowMatrix<Scalar>& cols) {
  const Index k = g.kernel;
  cols.resize(g.out_h * g.out_w, k * k * count);
  for (Index oy = 0; oy < g.out_h; ++oy) {
    for (Index ox = 0; ox < g.out_w; ++ox) {
      Scalar* row = cols.data() + (oy * g.out_w + ox) * cols.cols();
      for (Index ky = 0; ky < k; ++ky) {
        const Index iy = oy * g.stride - g.pad + ky;
        for (Index kx = 0; kx < k; ++kx) {
          const Index ix = ox * g.stride - g.pad + kx;
          Scalar* dst = row + (ky * k + kx) * count;
          if (iy < 0 || iy >= g.src_h || ix < 0 || ix >= g.src_w) {
            std::fill_n(dst, count, Scalar(0));
          } else {
            std::copy_n(src + (iy * g.src_w + ix) * channels + first, count, dst);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds cols back onto the source grid.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, Index channels, Index first, Index count,
            const ConvGeometry& g, Scalar* dst) {
  const Index k = g.kernel;
  for (Index oy = 0; oy < g.out_h; ++oy) {
    for (Index ox = 0; ox < g.out_w; ++ox) {
      const Scalar* row = cols.data() + (oy * g.out_w + ox) * cols.cols();
      for (Index ky = 0; ky < k; ++ky) {
        const Index iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.src_h) continue;
        for (Index kx = 0; kx < k; ++kx) {
          const Index ix = ox * g.stride - g.pad + kx;
          if (ix < 0 || ix >= g.src_w) continue;
          Scalar* d = dst + (iy * g.src_w + ix) * channels + first;
          const Scalar* s = row + (ky * k + kx) * count;
          for (Index c = 0; c < count; ++c) d[c] += s[c];
        }
      }
    }
  }
}

}  // namespace detail

struct ConvOptions {
  Index stride = 1;
  Index pad = 0;
  Index groups = 1;
  Index output_padding = 0;  // transposed convolution only
};

/// 2-D convolution, x [B,H,W,Cin], w [Cout,k,k,Cin/groups], b [Cout] or empty.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b,
                   ConvOptions opt) {
  if (x.value().rank() != 4 || w.value().rank() != 4) throw ConfigError("conv2d: expects 4-d input and weight");
  const Index batch = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3);
  const Index cout = w.dim(0), k = w.dim(1), groups = opt.groups;
  if (cin % groups || cout % groups || w.dim(3) * groups != cin) {
    throw ConfigError("conv2d: channels " + std::to_string(cin) + "->" + std::to_string(cout) +
                      " do not fit " + std::to_string(groups) + " groups");
  }
  const Index cig = cin / groups, cog = cout / groups;
  const detail::ConvGeometry geo{h,   wd,           (h + 2 * opt.pad - k) / opt.stride + 1,
                                 (wd + 2 * opt.pad - k) / opt.stride + 1,
                                 k,   opt.stride,   opt.pad};
  if (geo.out_h < 1 || geo.out_w < 1) throw ConfigError("conv2d: input smaller than kernel");
  Tensor<Scalar> out(Shape{batch, geo.out_h, geo.out_w, cout});
  const auto wm = w.value().reshaped({cout, k * k * cig});
  const bool pointwise = k == 1 && opt.stride == 1 && opt.pad == 0 && groups == 1;
  RowMatrix<Scalar> cols;
  for (Index n = 0; n < batch; ++n) {
    const Scalar* src = x.value().data() + n * h * wd * cin;
    Eigen::Map<RowMatrix<Scalar>> om(out.data() + n * geo.out_h * geo.out_w * cout,
                                     geo.out_h * geo.out_w, cout);
    if (pointwise) {
      Eigen::Map<const RowMatrix<Scalar>> xm(src, h * wd, cin);
      om.noalias() = xm * wm.matrix().transpose();
      continue;
    }
    for (Index g = 0; g < groups; ++g) {
      detail::im2col(src, cin, g * cig, cig, geo, cols);
      om.middleCols(g * cog, cog).noalias() =
          cols * wm.matrix().middleRows(g * cog, cog).transpose();
    }
  }
  if (b.defined()) out.matrix().rowwise() += b.value().array().matrix().transpose();
  mac_counter() += static_cast<std::uint64_t>(batch * geo.out_h * geo.out_w * k * k * cig * cout);
  return make_result<Scalar>(
      std::move(out), {x, w, b},
      [x, w, b, geo, groups, cig, cog, pointwise](const Tensor<Scalar>& gout) {
        const Index batch = x.dim(0), cin = x.dim(3), cout = w.dim(0), k = geo.kernel;
        const Index hw_in = geo.src_h * geo.src_w, hw_out = geo.out_h * geo.out_w;
        const auto wm = w.value().reshaped({cout, k * k * cig});
        Tensor<Scalar> gx = x.requires_grad() ? Tensor<Scalar>(x.shape()) : Tensor<Scalar>();
        Tensor<Scalar> gw = w.requires_grad() ? Tensor<Scalar>(Shape{cout, k * k * cig}) : Tensor<Scalar>();
        RowMatrix<Scalar> cols, dcols;
        for (Index n = 0; n < batch; ++n) {
          const Scalar* src = x.value().data() + n * hw_in * cin;
          Eigen::Map<const RowMatrix<Scalar>> gm(gout.data() + n * hw_out * cout, hw_out, cout);
          if (pointwise) {
            Eigen::Map<const RowMatrix<Scalar>> xm(src, hw_in, cin);
            if (w.requires_grad()) gw.matrix().noalias() += gm.transpose() * xm;
            if (x.requires_grad()) {
              Eigen::Map<RowMatrix<Scalar>> gxm(gx.data() + n * hw_in * cin, hw_in, cin);
              gxm.noalias() = gm * wm.matrix();
            }
            continue;
          }
          for (Index g = 0; g < groups; ++g) {
            if (w.requires_grad()) {
              detail::im2col(src, cin, g * cig, cig, geo, cols);
              gw.matrix().middleRows(g * cog, cog).noalias() +=
                  gm.middleCols(g * cog, cog).transpose() * cols;
            }
            if (x.requires_grad()) {
              dcols.noalias() = gm.middleCols(g * cog, cog) * wm.matrix().middleRows(g * cog, cog);
              detail::col2im(dcols, cin, g * cig, cig, geo, gx.data() + n * hw_in * cin);
            }
          }
        }
        if (x.requires_grad()) x.node()->accumulate(gx.array());
        if (w.requires_grad()) w.node()->accumulate(gw.array());
        if (b.requires_grad()) b.node()->accumulate(gout.matrix().colwise().sum().transpose().array());
      });
}

/// Transposed convolution, x [B,H,W,Cin], w [Cin,k,k,Cout/groups].
/// Output size (H-1)*stride - 2*pad + k + output_padding.
template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b,
                             ConvOptions opt) {
  if (x.value().rank() != 4 || w.value().rank() != 4) {
    throw ConfigError("conv_transpose2d: expects 4-d input and weight");
  }
  const Index batch = x.dim(0), h = x.dim(1), wd = x.dim(2), cin = x.dim(3);
  const Index k = w.dim(1), groups = opt.groups, cog = w.dim(3), cout = cog * groups;
  if (w.dim(0) != cin || cin % groups) throw ConfigError("conv_transpose2d: channel mismatch");
  const Index cig = cin / groups;
  const Index out_h = (h - 1) * opt.stride - 2 * opt.pad + k + opt.output_padding;
  const Index out_w = (wd - 1) * opt.stride - 2 * opt.pad + k + opt.output_padding;
  // Seen from the output grid this is an ordinary convolution geometry.
  const detail::ConvGeometry geo{out_h, out_w, h, wd, k, opt.stride, opt.pad};
  Tensor<Scalar> out(Shape{batch, out_h, out_w, cout});
  const auto wm = w.value().reshaped({cin, k * k * cog});
  RowMatrix<Scalar> cols;
  for (Index n = 0; n < batch; ++n) {
    Eigen::Map<const RowMatrix<Scalar>> xm(x.value().data() + n * h * wd * cin, h * wd, cin);
    for (Index g = 0; g < groups; ++g) {
      cols.noalias() = xm.middleCols(g * cig, cig) * wm.matrix().middleRows(g * cig, cig);
      detail::col2im(cols, cout, g * cog, cog, geo, out.data() + n * out_h * out_w * cout);
    }
  }
  if (b.defined()) out.matrix().rowwise() += b.value().array().matrix().transpose();
  mac_counter() += static_cast<std::uint64_t>(batch * h * wd * k * k * cig * cout);
  return make_result<Scalar>(
      std::move(out), {x, w, b}, [x, w, b, geo, groups, cig, cog](const Tensor<Scalar>& gout) {
        const Index batch = x.dim(0), cin = x.dim(3), k = geo.kernel, cout = cog * groups;
        const Index hw_in = geo.out_h * geo.out_w, hw_out = geo.src_h * geo.src_w;
        const auto wm = w.value().reshaped({cin, k * k * cog});
        Tensor<Scalar> gx = x.requires_grad() ? Tensor<Scalar>(x.shape()) : Tensor<Scalar>();
        Tensor<Scalar> gw = w.requires_grad() ? Tensor<Scalar>(Shape{cin, k * k * cog}) : Tensor<Scalar>();
        RowMatrix<Scalar> dcols;
        for (Index n = 0; n < batch; ++n) {
          Eigen::Map<const RowMatrix<Scalar>> xm(x.value().data() + n * hw_in * cin, hw_in, cin);
          for (Index g = 0; g < groups; ++g) {
            detail::im2col(gout.data() + n * hw_out * cout, cout, g * cog, cog, geo, dcols);
            if (x.requires_grad()) {
              Eigen::Map<RowMatrix<Scalar>> gxm(gx.data() + n * hw_in * cin, hw_in, cin);
              gxm.middleCols(g * cig, cig).noalias() =
                  dcols * wm.matrix().middleRows(g * cig, cig).transpose();
            }
            if (w.requires_grad()) {
              gw.matrix().middleRows(g * cig, cig).noalias() +=
                  xm.middleCols(g * cig, cig).transpose() * dcols;
            }
          }
        }
        if (x.requires_grad()) x.node()->accumulate(gx.array());
        if (w.requires_grad()) w.node()->accumulate(gw.array());
        if (b.requires_grad()) b.node()->accumulate(gout.matrix().colwise().sum().transpose().array());
      });
}

/// Normalizes over the last axis, then applies gamma/beta.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Scalar eps = Scalar(1e-5)) {
  const Index rows = x.value().rows(), c = x.value().cols();
  Tensor<Scalar> xhat(x.shape());
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std(rows);
  const auto xm = x.value().matrix();
  auto hm = xhat.matrix();
  for (Index r = 0; r < rows; ++r) {
    const Scalar mu = xm.row(r).mean();
    const Scalar var = (xm.row(r).array() - mu).square().mean();
    inv_std[r] = Scalar(1) / std::sqrt(var + eps);
    hm.row(r) = (xm.row(r).array() - mu) * inv_std[r];
  }
  Tensor<Scalar> out(x.shape());
  out.matrix() = (hm.array().rowwise() * gamma.value().array().transpose()).rowwise() +
                 beta.value().array().transpose();
  return make_result<Scalar>(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std, c](const Tensor<Scalar>& g) {
        const auto gm = g.matrix();
        const auto hm = xhat.matrix();
        if (gamma.requires_grad())
          gamma.node()->accumulate((gm.array() * hm.array()).colwise().sum().transpose());
        if (beta.requires_grad()) beta.node()->accumulate(gm.array().colwise().sum().transpose());
        if (x.requires_grad()) {
          Tensor<Scalar> gx(x.shape());
          auto gxm = gx.matrix();
          const Scalar inv_c = Scalar(1) / static_cast<Scalar>(c);
          for (Index r = 0; r < gm.rows(); ++r) {
            const auto dh = (gm.row(r).array() * gamma.value().array().transpose()).eval();
            const Scalar m1 = dh.sum() * inv_c;
            const Scalar m2 = (dh * hm.row(r).array()).sum() * inv_c;
            gxm.row(r) = (inv_std[r] * (dh - m1 - hm.row(r).array() * m2)).matrix();
          }
          x.node()->accumulate(gx.array());
        }
      });
}

// ---------------------------------------------------------------- attention

/// Multi-head scaled dot-product attention per window.
///   q [Bw, N, C], k/v [Bw, L, C] with L >= N.
///   bias [heads, N, N] is added to the first N key columns; the remaining
///   L - N columns get zero bias. mask [nM, N, L] is added to window b as
///   mask[b % nM]. Either may be empty.
template <typename Scalar>
Var<Scalar> attention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v,
                      const Var<Scalar>& bias, std::shared_ptr<const Tensor<Scalar>> mask,
                      Index heads) {
  if (q.value().rank() != 3 || k.value().rank() != 3 || k.shape() != v.shape() ||
      q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2)) {
    throw ConfigError("attention: inconsistent q/k/v shapes " + shape_string(q.shape()) + ", " +
                      shape_string(k.shape()));
  }
  const Index bw = q.dim(0), n = q.dim(1), l = k.dim(1), c = q.dim(2);
  if (heads < 1 || c % heads) throw ConfigError("attention: heads must divide channels");
  if (!q.value().all_finite() || !k.value().all_finite() || !v.value().all_finite()) {
    throw NumericError("attention: non-finite input to softmax");
  }
  const Index d = c / heads;
  const Scalar sc = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
  if (bias.defined() && bias.shape() != Shape{heads, n, n}) throw ConfigError("attention: bias shape");
  if (mask && (mask->rank() != 3 || mask->dim(1) != n || mask->dim(2) != l)) {
    throw ConfigError("attention: mask shape");
  }
  auto probs = std::make_shared<Tensor<Scalar>>(Shape{bw, heads, n, l});
  Tensor<Scalar> out(Shape{bw, n, c});
  RowMatrix<Scalar> s(n, l);
  for (Index b = 0; b < bw; ++b) {
    Eigen::Map<const RowMatrix<Scalar>> qm(q.value().data() + b * n * c, n, c);
    Eigen::Map<const RowMatrix<Scalar>> km(k.value().data() + b * l * c, l, c);
    Eigen::Map<const RowMatrix<Scalar>> vm(v.value().data() + b * l * c, l, c);
    Eigen::Map<RowMatrix<Scalar>> om(out.data() + b * n * c, n, c);
    for (Index h = 0; h < heads; ++h) {
      s.noalias() = sc * qm.middleCols(h * d, d) * km.middleCols(h * d, d).transpose();
      if (bias.defined()) {
        s.leftCols(n) += Eigen::Map<const RowMatrix<Scalar>>(bias.value().data() + h * n * n, n, n);
      }
      if (mask) {
        s += Eigen::Map<const RowMatrix<Scalar>>(mask->data() + (b % mask->dim(0)) * n * l, n, l);
      }
      Eigen::Map<RowMatrix<Scalar>> p(probs->data() + (b * heads + h) * n * l, n, l);
      p = (s.colwise() - s.rowwise().maxCoeff()).array().exp().matrix();
      p.array().colwise() /= p.rowwise().sum().array();
      om.middleCols(h * d, d).noalias() = p * vm.middleCols(h * d, d);
    }
  }
  mac_counter() += static_cast<std::uint64_t>(2 * bw * n * l * c);
  return make_result<Scalar>(
      std::move(out), {q, k, v, bias},
      [q, k, v, bias, probs, heads, bw, n, l, c, d, sc](const Tensor<Scalar>& g) {
        Tensor<Scalar> gq(q.shape()), gk(k.shape()), gv(v.shape());
        Tensor<Scalar> gb = bias.requires_grad() ? Tensor<Scalar>(bias.shape()) : Tensor<Scalar>();
        RowMatrix<Scalar> dp(n, l), ds(n, l);
        for (Index b = 0; b < bw; ++b) {
          Eigen::Map<const RowMatrix<Scalar>> qm(q.value().data() + b * n * c, n, c);
          Eigen::Map<const RowMatrix<Scalar>> km(k.value().data() + b * l * c, l, c);
          Eigen::Map<const RowMatrix<Scalar>> vm(v.value().data() + b * l * c, l, c);
          Eigen::Map<const RowMatrix<Scalar>> gm(g.data() + b * n * c, n, c);
          Eigen::Map<RowMatrix<Scalar>> gqm(gq.data() + b * n * c, n, c);
          Eigen::Map<RowMatrix<Scalar>> gkm(gk.data() + b * l * c, l, c);
          Eigen::Map<RowMatrix<Scalar>> gvm(gv.data() + b * l * c, l, c);
          for (Index h = 0; h < heads; ++h) {
            Eigen::Map<const RowMatrix<Scalar>> p(probs->data() + (b * heads + h) * n * l, n, l);
            gvm.middleCols(h * d, d).noalias() += p.transpose() * gm.middleCols(h * d, d);
            dp.noalias() = gm.middleCols(h * d, d) * vm.middleCols(h * d, d).transpose();
            const auto row_dot = (dp.array() * p.array()).rowwise().sum().eval();
            ds = (p.array() * (dp.array().colwise() - row_dot)).matrix();
            if (bias.requires_grad()) {
              Eigen::Map<RowMatrix<Scalar>>(gb.data() + h * n * n, n, n) += ds.leftCols(n);
            }
            gqm.middleCols(h * d, d).noalias() += sc * ds * km.middleCols(h * d, d);
            gkm.middleCols(h * d, d).noalias() += sc * ds.transpose() * qm.middleCols(h * d, d);
          }
        }
        q.node()->accumulate(gq.array());
        k.node()->accumulate(gk.array());
        v.node()->accumulate(gv.array());
        if (bias.requires_grad()) bias.node()->accumulate(gb.array());
      });
}

}  // namespace jdnd

#endif  // JDND_OPS_HPP_
