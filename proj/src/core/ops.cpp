// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

namespace pfmce {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using ColVec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

Tensor causal_mask(std::size_t n) {
  Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m.at(i, j) = (i >= j) ? 0 : kMaskSentinel;
  return m;
}

AttentionLayout AttentionLayout::contiguous(std::size_t groups, std::size_t tokens) {
  AttentionLayout l;
  l.groups = groups;
  l.tokens = tokens;
  l.groups_per_block = groups;
  l.block_stride = 0;
  l.group_stride = tokens;
  l.token_stride = 1;
  return l;
}

AttentionLayout AttentionLayout::interleaved(std::size_t blocks, std::size_t groups_per_block, std::size_t tokens) {
  AttentionLayout l;
  l.groups = blocks * groups_per_block;
  l.tokens = tokens;
  l.groups_per_block = groups_per_block;
  l.block_stride = groups_per_block * tokens;
  l.group_stride = 1;
  l.token_stride = groups_per_block;
  return l;
}

namespace ops {
namespace {

void require_same_size(const Var& a, const Var& b, const char* op) {
  if (a.value().size() != b.value().size())
    throw DimensionError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

Shape replace_last(Shape s, std::size_t v) {
  s.back() = v;
  return s;
}

bool is_masked(Real m) { return m <= kMaskSentinel / 2 || m == -std::numeric_limits<Real>::infinity(); }

}  // namespace

Var add(Var a, Var b) {
  require_same_size(a, b, "add");
  Tensor out = a.value();
  out.accumulate(b.value());
  const auto ia = a.id(), ib = b.id();
  return a.graph()->emit(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ia)) g.grad(ia).accumulate(dy);
    if (g.requires_grad(ib)) g.grad(ib).accumulate(dy);
  });
}

Var sub(Var a, Var b) {
  require_same_size(a, b, "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph()->emit(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ia)) g.grad(ia).accumulate(dy);
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_size(a, b, "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.graph()->emit(std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    const Tensor& av = g.value(ia);
    const Tensor& bv = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& da = g.grad(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

Var scale(Var a, Real s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  const auto ia = a.id();
  return a.graph()->emit(std::move(out), {a}, [ia, s](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += s * dy[i];
  });
}

Var add_bias(Var x, Var b) {
  const std::size_t c = last_dim(x.value());
  if (b.value().size() != c)
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " vs input " + shape_str(x.shape()));
  Tensor out = x.value();
  const Tensor& bv = b.value();
  const std::size_t n = out.size() / c;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] += bv[j];
  const auto ix = x.id(), ib = b.id();
  return x.graph()->emit(std::move(out), {x, b}, [ix, ib, n, c](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ix)) g.grad(ix).accumulate(dy);
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) db[j] += dy[r * c + j];
    }
  });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw DimensionError("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  MapMat(out.data(), m, n).noalias() = CMapMat(av.data(), m, k) * CMapMat(bv.data(), k, n);
  const auto ia = a.id(), ib = b.id();
  return a.graph()->emit(std::move(out), {a, b}, [ia, ib, m, k, n](Graph& g, std::size_t self) {
    CMapMat dy(g.grad(self).data(), m, n);
    if (g.requires_grad(ia))
      MapMat(g.grad(ia).data(), m, k).noalias() += dy * CMapMat(g.value(ib).data(), k, n).transpose();
    if (g.requires_grad(ib))
      MapMat(g.grad(ib).data(), k, n).noalias() += CMapMat(g.value(ia).data(), m, k).transpose() * dy;
  });
}

Var linear(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const std::size_t in = last_dim(xv);
  if (wv.rank() != 2 || wv.dim(0) != in)
    throw DimensionError("linear: input " + shape_str(xv.shape()) + " with weight " + shape_str(wv.shape()));
  const std::size_t out_dim = wv.dim(1);
  const bool has_bias = b.valid();
  if (has_bias && b.value().size() != out_dim)
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " for output width " + std::to_string(out_dim));
  const std::size_t n = xv.size() / in;
  Tensor out(replace_last(xv.shape(), out_dim));
  MapMat y(out.data(), n, out_dim);
  y.noalias() = CMapMat(xv.data(), n, in) * CMapMat(wv.data(), in, out_dim);
  if (has_bias) y.rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(b.value().data(), out_dim);
  const auto ix = x.id(), iw = w.id();
  const std::size_t ib = has_bias ? b.id() : 0;
  auto backward = [ix, iw, ib, has_bias, n, in, out_dim](Graph& g, std::size_t self) {
    CMapMat dy(g.grad(self).data(), n, out_dim);
    if (g.requires_grad(ix))
      MapMat(g.grad(ix).data(), n, in).noalias() += dy * CMapMat(g.value(iw).data(), in, out_dim).transpose();
    if (g.requires_grad(iw))
      MapMat(g.grad(iw).data(), in, out_dim).noalias() += CMapMat(g.value(ix).data(), n, in).transpose() * dy;
    if (has_bias && g.requires_grad(ib))
      Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>(g.grad(ib).data(), out_dim) += dy.colwise().sum();
  };
  if (has_bias) return x.graph()->emit(std::move(out), {x, w, b}, backward);
  return x.graph()->emit(std::move(out), {x, w}, backward);
}

Var gelu(Var x) {
  Tensor out = x.value();
  constexpr Real inv_sqrt_2pi = 0.3989422804014327;
  const bool rec = x.graph()->recording() && x.graph()->requires_grad(x);
  // d/dx gelu = cdf + x * pdf, kept from the forward pass
  auto slope = std::make_shared<std::vector<Real>>(rec ? out.size() : 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real v = out[i];
    const Real cdf = 0.5 * (1 + std::erf(v * std::numbers::sqrt2 / 2));
    out[i] = v * cdf;
    if (rec) (*slope)[i] = cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
  }
  const auto ix = x.id();
  return x.graph()->emit(std::move(out), {x}, [ix, slope](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad(ix);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (*slope)[i];
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0 ? v : 0;
  const auto ix = x.id();
  return x.graph()->emit(std::move(out), {x}, [ix](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    const Tensor& xv = g.value(ix);
    Tensor& dx = g.grad(ix);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (xv[i] > 0) dx[i] += dy[i];
  });
}

namespace {

struct NormCache {
  std::vector<Real> xhat;
  std::vector<Real> inv_std;
  std::vector<char> floored;
};

// Standardizes each row of x (last axis of width c) into cache.
std::shared_ptr<NormCache> standardize_rows(const Tensor& x, std::size_t c, Real eps) {
  const std::size_t n = x.size() / c;
  auto cache = std::make_shared<NormCache>();
  cache->xhat.resize(x.size());
  cache->inv_std.resize(n);
  cache->floored.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const Real* row = x.data() + r * c;
    Real mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<Real>(c);
    Real var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<Real>(c);
    cache->floored[r] = var < eps;
    const Real inv = 1 / std::sqrt(std::max(var, eps));
    cache->inv_std[r] = inv;
    for (std::size_t j = 0; j < c; ++j) cache->xhat[r * c + j] = (row[j] - mean) * inv;
  }
  return cache;
}

// dx for row r given dxhat (already multiplied by the affine scale).
void standardize_backward(const NormCache& cache, std::size_t r, std::size_t c, const Real* dxhat, Real* dx) {
  const Real* xh = cache.xhat.data() + r * c;
  Real mean_d = 0, mean_dx = 0;
  for (std::size_t j = 0; j < c; ++j) {
    mean_d += dxhat[j];
    mean_dx += dxhat[j] * xh[j];
  }
  mean_d /= static_cast<Real>(c);
  mean_dx /= static_cast<Real>(c);
  if (cache.floored[r]) mean_dx = 0;
  const Real inv = cache.inv_std[r];
  for (std::size_t j = 0; j < c; ++j) dx[j] += inv * (dxhat[j] - mean_d - xh[j] * mean_dx);
}

}  // namespace

Var layer_norm(Var x, Var gamma, Var beta, Real eps) {
  const Tensor& xv = x.value();
  const std::size_t c = last_dim(xv);
  if (gamma.value().size() != c || beta.value().size() != c)
    throw DimensionError("layer_norm: affine parameters do not match width " + std::to_string(c));
  const std::size_t n = xv.size() / c;
  auto cache = standardize_rows(xv, c, eps);
  Tensor out(xv.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = cache->xhat[r * c + j] * gv[j] + bv[j];
  const auto ix = x.id(), ig = gamma.id(), ibt = beta.id();
  return x.graph()->emit(std::move(out), {x, gamma, beta}, [=](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    const Tensor& gv = g.value(ig);
    if (g.requires_grad(ig)) {
      Tensor& dg = g.grad(ig);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) dg[j] += dy[r * c + j] * cache->xhat[r * c + j];
    }
    if (g.requires_grad(ibt)) {
      Tensor& db = g.grad(ibt);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) db[j] += dy[r * c + j];
    }
    if (g.requires_grad(ix)) {
      Tensor& dx = g.grad(ix);
      std::vector<Real> dxhat(c);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) dxhat[j] = dy[r * c + j] * gv[j];
        standardize_backward(*cache, r, c, dxhat.data(), dx.data() + r * c);
      }
    }
  });
}

Var ada_layer_norm(Var x, Var modulation, std::size_t rows_per_condition, Real eps) {
  const Tensor& xv = x.value();
  const Tensor& mv = modulation.value();
  const std::size_t c = last_dim(xv);
  const std::size_t n = xv.size() / c;
  if (rows_per_condition == 0 || n % rows_per_condition != 0)
    throw DimensionError("ada_layer_norm: " + std::to_string(n) + " rows not divisible into groups of " +
                         std::to_string(rows_per_condition));
  const std::size_t groups = n / rows_per_condition;
  if (mv.size() != groups * 2 * c)
    throw DimensionError("ada_layer_norm: modulation " + shape_str(mv.shape()) + " for " + std::to_string(groups) +
                         " groups of width " + std::to_string(c));
  auto cache = standardize_rows(xv, c, eps);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const Real* m = mv.data() + (r / rows_per_condition) * 2 * c;
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = cache->xhat[r * c + j] * (1 + m[j]) + m[c + j];
  }
  const auto ix = x.id(), im = modulation.id();
  return x.graph()->emit(std::move(out), {x, modulation}, [=](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    const Tensor& mv = g.value(im);
    if (g.requires_grad(im)) {
      Tensor& dm = g.grad(im);
      for (std::size_t r = 0; r < n; ++r) {
        Real* d = dm.data() + (r / rows_per_condition) * 2 * c;
        for (std::size_t j = 0; j < c; ++j) {
          d[j] += dy[r * c + j] * cache->xhat[r * c + j];
          d[c + j] += dy[r * c + j];
        }
      }
    }
    if (g.requires_grad(ix)) {
      Tensor& dx = g.grad(ix);
      std::vector<Real> dxhat(c);
      for (std::size_t r = 0; r < n; ++r) {
        const Real* m = mv.data() + (r / rows_per_condition) * 2 * c;
        for (std::size_t j = 0; j < c; ++j) dxhat[j] = dy[r * c + j] * (1 + m[j]);
        standardize_backward(*cache, r, c, dxhat.data(), dx.data() + r * c);
      }
    }
  });
}

Var masked_softmax(Var logits, const Tensor& mask) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2) throw DimensionError("masked_softmax: logits must be a matrix, got " + shape_str(lv.shape()));
  if (mask.shape() != lv.shape())
    throw DimensionError("masked_softmax: mask " + shape_str(mask.shape()) + " vs logits " + shape_str(lv.shape()));
  const std::size_t n = lv.dim(0), m = lv.dim(1);
  Tensor out(lv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (!is_masked(mask.at(i, j))) mx = std::max(mx, lv.at(i, j) + mask.at(i, j));
    if (mx == -std::numeric_limits<Real>::infinity())
      throw NumericError("masked_softmax: row " + std::to_string(i) + " is fully masked");
    Real s = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const Real e = is_masked(mask.at(i, j)) ? 0 : std::exp(lv.at(i, j) + mask.at(i, j) - mx);
      out.at(i, j) = e;
      s += e;
    }
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) /= s;
  }
  const auto il = logits.id();
  return logits.graph()->emit(std::move(out), {logits}, [il, n, m](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    const Tensor& p = g.value(self);
    Tensor& dl = g.grad(il);
    for (std::size_t i = 0; i < n; ++i) {
      Real dot = 0;
      for (std::size_t j = 0; j < m; ++j) dot += dy.at(i, j) * p.at(i, j);
      for (std::size_t j = 0; j < m; ++j) dl.at(i, j) += p.at(i, j) * (dy.at(i, j) - dot);
    }
  });
}

Var attention(Var q, Var k, Var v, const AttentionLayout& layout, std::size_t heads, bool causal) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (qv.rank() != 2 || kv.shape() != qv.shape() || vv.shape() != qv.shape())
    throw DimensionError("attention: q/k/v shapes " + shape_str(qv.shape()) + ", " + shape_str(kv.shape()) + ", " +
                         shape_str(vv.shape()));
  const std::size_t rows = qv.dim(0), d = qv.dim(1);
  if (heads == 0 || d % heads != 0)
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                         " heads");
  if (layout.rows() != rows)
    throw DimensionError("attention: layout covers " + std::to_string(layout.rows()) + " rows, input has " +
                         std::to_string(rows));
  const std::size_t dk = d / heads, nt = layout.tokens, ng = layout.groups;
  const Real inv_sqrt = 1 / std::sqrt(static_cast<Real>(dk));

  // probs[(g * heads + h) * nt * nt + i * nt + j]
  auto probs = std::make_shared<std::vector<Real>>(ng * heads * nt * nt, 0.0);
  Tensor out({rows, d});
  std::vector<std::size_t> rix(nt);
  std::vector<Real> score(nt);
  for (std::size_t grp = 0; grp < ng; ++grp) {
    for (std::size_t i = 0; i < nt; ++i) rix[i] = layout.row(grp, i);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dk;
      Real* P = probs->data() + (grp * heads + h) * nt * nt;
      for (std::size_t i = 0; i < nt; ++i) {
        const std::size_t last = causal ? i + 1 : nt;
        const Real* qi = qv.data() + rix[i] * d + off;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < last; ++j) {
          const Real* kj = kv.data() + rix[j] * d + off;
          Real s = 0;
          for (std::size_t c = 0; c < dk; ++c) s += qi[c] * kj[c];
          score[j] = s * inv_sqrt;
          mx = std::max(mx, score[j]);
        }
        Real z = 0;
        for (std::size_t j = 0; j < last; ++j) {
          score[j] = std::exp(score[j] - mx);
          z += score[j];
        }
        Real* oi = out.data() + rix[i] * d + off;
        for (std::size_t j = 0; j < last; ++j) {
          const Real p = score[j] / z;
          P[i * nt + j] = p;
          const Real* vj = vv.data() + rix[j] * d + off;
          for (std::size_t c = 0; c < dk; ++c) oi[c] += p * vj[c];
        }
      }
    }
  }
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return q.graph()->emit(std::move(out), {q, k, v}, [=](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    const Tensor& qv = g.value(iq);
    const Tensor& kv = g.value(ik);
    const Tensor& vv = g.value(iv);
    const bool gq = g.requires_grad(iq), gk = g.requires_grad(ik), gv = g.requires_grad(iv);
    Real* dq = gq ? g.grad(iq).data() : nullptr;
    Real* dkp = gk ? g.grad(ik).data() : nullptr;
    Real* dv = gv ? g.grad(iv).data() : nullptr;
    std::vector<std::size_t> rix(nt);
    std::vector<Real> dp(nt);
    for (std::size_t grp = 0; grp < ng; ++grp) {
      for (std::size_t i = 0; i < nt; ++i) rix[i] = layout.row(grp, i);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dk;
        const Real* P = probs->data() + (grp * heads + h) * nt * nt;
        for (std::size_t i = 0; i < nt; ++i) {
          const std::size_t last = causal ? i + 1 : nt;
          const Real* dyi = dy.data() + rix[i] * d + off;
          Real dot = 0;
          for (std::size_t j = 0; j < last; ++j) {
            const Real* vj = vv.data() + rix[j] * d + off;
            Real s = 0;
            for (std::size_t c = 0; c < dk; ++c) s += dyi[c] * vj[c];
            dp[j] = s;
            dot += s * P[i * nt + j];
            if (gv) {
              Real* dvj = dv + rix[j] * d + off;
              for (std::size_t c = 0; c < dk; ++c) dvj[c] += P[i * nt + j] * dyi[c];
            }
          }
          if (!gq && !gk) continue;
          const Real* qi = qv.data() + rix[i] * d + off;
          for (std::size_t j = 0; j < last; ++j) {
            const Real ds = P[i * nt + j] * (dp[j] - dot) * inv_sqrt;
            if (ds == 0) continue;
            const Real* kj = kv.data() + rix[j] * d + off;
            if (gq) {
              Real* dqi = dq + rix[i] * d + off;
              for (std::size_t c = 0; c < dk; ++c) dqi[c] += ds * kj[c];
            }
            if (gk) {
              Real* dkj = dkp + rix[j] * d + off;
              for (std::size_t c = 0; c < dk; ++c) dkj[c] += ds * qi[c];
            }
          }
        }
      }
    }
  });
}

Var depthwise_conv2d(Var x, Var kernels) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  if (xv.rank() != 4 || kv.rank() != 3)
    throw DimensionError("depthwise_conv2d: expected x[B,H,W,C] and k[kh,kw,C], got " + shape_str(xv.shape()) +
                         " and " + shape_str(kv.shape()));
  const std::size_t B = xv.dim(0), H = xv.dim(1), W = xv.dim(2), C = xv.dim(3);
  const std::size_t kh = kv.dim(0), kw = kv.dim(1);
  if (kv.dim(2) != C)
    throw DimensionError("depthwise_conv2d: kernel channels " + std::to_string(kv.dim(2)) + " vs input channels " +
                         std::to_string(C));
  if (kh % 2 == 0 || kw % 2 == 0) throw DimensionError("depthwise_conv2d: kernel extents must be odd");
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  Tensor out(xv.shape());
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < B; ++b)
      for (long i = 0; i < static_cast<long>(H); ++i)
        for (long j = 0; j < static_cast<long>(W); ++j)
          for (std::size_t di = 0; di < kh; ++di) {
            const long ii = i + static_cast<long>(di) - ph;
            if (ii < 0 || ii >= static_cast<long>(H)) continue;
            for (std::size_t dj = 0; dj < kw; ++dj) {
              const long jj = j + static_cast<long>(dj) - pw;
              if (jj < 0 || jj >= static_cast<long>(W)) continue;
              const std::size_t o = ((b * H + i) * W + j) * C;
              const std::size_t s = ((b * H + ii) * W + jj) * C;
              const std::size_t kk = (di * kw + dj) * C;
              fn(o, s, kk);
            }
          }
  };
  {
    const Real* xp = xv.data();
    const Real* kp = kv.data();
    Real* yp = out.data();
    for_each_tap([&](std::size_t o, std::size_t s, std::size_t kk) {
      for (std::size_t c = 0; c < C; ++c) yp[o + c] += xp[s + c] * kp[kk + c];
    });
  }
  const auto ix = x.id(), ik = kernels.id();
  return x.graph()->emit(std::move(out), {x, kernels}, [=](Graph& g, std::size_t self) {
    const Real* dy = g.grad(self).data();
    const Real* xp = g.value(ix).data();
    const Real* kp = g.value(ik).data();
    Real* dx = g.requires_grad(ix) ? g.grad(ix).data() : nullptr;
    Real* dk = g.requires_grad(ik) ? g.grad(ik).data() : nullptr;
    for_each_tap([&](std::size_t o, std::size_t s, std::size_t kk) {
      if (dx)
        for (std::size_t c = 0; c < C; ++c) dx[s + c] += dy[o + c] * kp[kk + c];
      if (dk)
        for (std::size_t c = 0; c < C; ++c) dk[kk + c] += dy[o + c] * xp[s + c];
    });
  });
}

namespace {

struct ConvGeometry {
  std::size_t B, H, W, Cin, kh, kw;
  std::size_t patch() const { return kh * kw * Cin; }
  std::size_t positions() const { return B * H * W; }
};

template <typename Fn>
void for_each_im2col(const ConvGeometry& geo, Fn&& fn) {
  const long ph = static_cast<long>(geo.kh / 2), pw = static_cast<long>(geo.kw / 2);
  for (std::size_t b = 0; b < geo.B; ++b)
    for (long i = 0; i < static_cast<long>(geo.H); ++i)
      for (long j = 0; j < static_cast<long>(geo.W); ++j) {
        const std::size_t row = (b * geo.H + i) * geo.W + j;
        for (std::size_t di = 0; di < geo.kh; ++di) {
          const long ii = i + static_cast<long>(di) - ph;
          if (ii < 0 || ii >= static_cast<long>(geo.H)) continue;
          for (std::size_t dj = 0; dj < geo.kw; ++dj) {
            const long jj = j + static_cast<long>(dj) - pw;
            if (jj < 0 || jj >= static_cast<long>(geo.W)) continue;
            fn(row * geo.patch() + (di * geo.kw + dj) * geo.Cin, ((b * geo.H + ii) * geo.W + jj) * geo.Cin);
          }
        }
      }
}

}  // namespace

Var conv2d(Var x, Var kernels) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  if (xv.rank() != 4 || kv.rank() != 4)
    throw DimensionError("conv2d: expected x[B,H,W,Cin] and k[kh,kw,Cin,Cout], got " + shape_str(xv.shape()) +
                         " and " + shape_str(kv.shape()));
  const ConvGeometry geo{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), kv.dim(0), kv.dim(1)};
  if (kv.dim(2) != geo.Cin)
    throw DimensionError("conv2d: kernel input channels " + std::to_string(kv.dim(2)) + " vs input channels " +
                         std::to_string(geo.Cin));
  if (geo.kh % 2 == 0 || geo.kw % 2 == 0) throw DimensionError("conv2d: kernel extents must be odd");
  const std::size_t Cout = kv.dim(3);
  auto cols = std::make_shared<std::vector<Real>>(geo.positions() * geo.patch(), 0.0);
  {
    const Real* xp = xv.data();
    Real* cp = cols->data();
    for_each_im2col(geo, [&](std::size_t dst, std::size_t src) {
      for (std::size_t c = 0; c < geo.Cin; ++c) cp[dst + c] = xp[src + c];
    });
  }
  Tensor out({geo.B, geo.H, geo.W, Cout});
  MapMat(out.data(), geo.positions(), Cout).noalias() =
      CMapMat(cols->data(), geo.positions(), geo.patch()) * CMapMat(kv.data(), geo.patch(), Cout);
  const auto ix = x.id(), ik = kernels.id();
  return x.graph()->emit(std::move(out), {x, kernels}, [=](Graph& g, std::size_t self) {
    CMapMat dy(g.grad(self).data(), geo.positions(), Cout);
    if (g.requires_grad(ik))
      MapMat(g.grad(ik).data(), geo.patch(), Cout).noalias() +=
          CMapMat(cols->data(), geo.positions(), geo.patch()).transpose() * dy;
    if (g.requires_grad(ix)) {
      RowMat dcols = dy * CMapMat(g.value(ik).data(), geo.patch(), Cout).transpose();
      Real* dx = g.grad(ix).data();
      const Real* dc = dcols.data();
      for_each_im2col(geo, [&](std::size_t dst, std::size_t src) {
        for (std::size_t c = 0; c < geo.Cin; ++c) dx[src + c] += dc[dst + c];
      });
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const auto ix = x.id();
  return x.graph()->emit(std::move(out), {x}, [ix](Graph& g, std::size_t self) {
    g.grad(ix).accumulate(g.grad(self));
  });
}

Var concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0))
    throw DimensionError("concat_cols: " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  const std::size_t n = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Tensor out({n, p + q});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.data() + r * p, p, out.data() + r * (p + q));
    std::copy_n(bv.data() + r * q, q, out.data() + r * (p + q) + p);
  }
  const auto ia = a.id(), ib = b.id();
  return a.graph()->emit(std::move(out), {a, b}, [=](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    if (g.requires_grad(ia)) {
      Real* da = g.grad(ia).data();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < p; ++j) da[r * p + j] += dy[r * (p + q) + j];
    }
    if (g.requires_grad(ib)) {
      Real* db = g.grad(ib).data();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < q; ++j) db[r * q + j] += dy[r * (p + q) + p + j];
    }
  });
}

Var gather_rows(Var x, std::vector<std::size_t> rows) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("gather_rows: expected a matrix, got " + shape_str(xv.shape()));
  if (rows.empty()) throw DimensionError("gather_rows: empty row list");
  const std::size_t c = xv.dim(1);
  Tensor out({rows.size(), c});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= xv.dim(0)) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(xv.data() + rows[r] * c, c, out.data() + r * c);
  }
  const auto ix = x.id();
  return x.graph()->emit(std::move(out), {x}, [ix, c, rows = std::move(rows)](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    Real* dx = g.grad(ix).data();
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < c; ++j) dx[rows[r] * c + j] += dy[r * c + j];
  });
}

Var affine_rows(Var x, std::vector<Real> scale, std::vector<Real> shift) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || scale.size() != xv.dim(0) || shift.size() != xv.dim(0))
    throw DimensionError("affine_rows: per-row factors do not match " + shape_str(xv.shape()));
  const std::size_t n = xv.dim(0), c = xv.dim(1);
  Tensor out = xv;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = out[r * c + j] * scale[r] + shift[r];
  const auto ix = x.id();
  return x.graph()->emit(std::move(out), {x}, [ix, n, c, scale = std::move(scale)](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    Real* dx = g.grad(ix).data();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < c; ++j) dx[r * c + j] += dy[r * c + j] * scale[r];
  });
}

Var sum(Var x) {
  Tensor out({1}, x.value().sum());
  const auto ix = x.id();
  return x.graph()->emit(std::move(out), {x}, [ix](Graph& g, std::size_t self) {
    const Real d = g.grad(self)[0];
    for (auto& v : g.grad(ix).values()) v += d;
  });
}

Var sum_squares(Var x) {
  Real s = 0;
  for (auto v : x.value().values()) s += v * v;
  const auto ix = x.id();
  return x.graph()->emit(Tensor({1}, s), {x}, [ix](Graph& g, std::size_t self) {
    const Real d = g.grad(self)[0];
    const Tensor& xv = g.value(ix);
    Tensor& dx = g.grad(ix);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += 2 * d * xv[i];
  });
}

Var mse(Var a, Var b) {
  require_same_size(a, b, "mse");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.size();
  Real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  const auto ia = a.id(), ib = b.id();
  return a.graph()->emit(Tensor({1}, s / static_cast<Real>(n)), {a, b}, [ia, ib, n](Graph& g, std::size_t self) {
    const Real d = g.grad(self)[0] * 2 / static_cast<Real>(n);
    const Tensor& av = g.value(ia);
    const Tensor& bv = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& da = g.grad(ia);
      for (std::size_t i = 0; i < n; ++i) da[i] += d * (av[i] - bv[i]);
    }
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      for (std::size_t i = 0; i < n; ++i) db[i] -= d * (av[i] - bv[i]);
    }
  });
}

}  // namespace ops
}  // namespace pfmce
