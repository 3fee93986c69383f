// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pfmce Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#include "pfmce/classical/classical.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pfmce {

namespace {

using CMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
using CVec = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;

CMat as_matrix(const std::vector<Complex>& v, std::size_t n) {
  CMat m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = v[i * n + j];
  return m;
}

// Linear interpolation of samples at ascending positions onto 0..len-1.
template <class T>
void interp_1d(const std::vector<std::size_t>& pos, const std::vector<T>& val, std::size_t len, std::vector<T>& out) {
  out.resize(len);
  std::size_t seg = 0;
  for (std::size_t x = 0; x < len; ++x) {
    if (x <= pos.front()) {
      out[x] = val.front();
    } else if (x >= pos.back()) {
      out[x] = val.back();
    } else {
      while (pos[seg + 1] < x) ++seg;
      const Real w = static_cast<Real>(x - pos[seg]) / static_cast<Real>(pos[seg + 1] - pos[seg]);
      out[x] = val[seg] * (1 - w) + val[seg + 1] * w;
    }
  }
}

}  // namespace

PilotEstimate ls_at_pilots(const PilotObservation& obs, const PilotPattern& pattern) {
  if (obs.y.size() != pattern.total()) throw std::invalid_argument("ls_at_pilots: observation does not match pattern");
  PilotEstimate est;
  est.n_t = pattern.n_t;
  est.k = pattern.k;
  est.t = pattern.t;
  est.symbols = pattern.symbols;
  std::size_t idx = 0;
  for (std::size_t n = 0; n < pattern.n_t; ++n) {
    est.subcarriers.push_back(pattern.subcarriers(n));
    std::vector<Complex> v;
    const auto count = pattern.symbols.size() * est.subcarriers.back().size();
    for (std::size_t i = 0; i < count; ++i, ++idx) {
      const Complex x = pattern.values[idx];
      if (x == Complex(0)) throw std::invalid_argument("ls_at_pilots: zero pilot symbol");
      v.push_back(obs.y[idx] * std::conj(x) / std::norm(x));
    }
    est.values.push_back(std::move(v));
  }
  return est;
}

ChannelRealization interpolate_linear(const PilotEstimate& est) {
  if (est.symbols.empty()) throw std::invalid_argument("interpolate_linear: empty pilot set");
  ChannelRealization h(est.n_t, est.k, est.t);
  const std::size_t tp = est.symbols.size();
  std::vector<Complex> row, col, at_pilots;
  for (std::size_t n = 0; n < est.n_t; ++n) {
    const auto& scs = est.subcarriers[n];
    if (scs.empty()) throw std::invalid_argument("interpolate_linear: empty pilot set");
    const std::size_t J = scs.size();
    // frequency pass on each pilot symbol
    std::vector<std::vector<Complex>> freq(tp);
    for (std::size_t si = 0; si < tp; ++si) {
      row.assign(est.values[n].begin() + si * J, est.values[n].begin() + (si + 1) * J);
      interp_1d(scs, row, est.k, freq[si]);
    }
    // time pass per subcarrier
    at_pilots.resize(tp);
    for (std::size_t sc = 0; sc < est.k; ++sc) {
      for (std::size_t si = 0; si < tp; ++si) at_pilots[si] = freq[si][sc];
      interp_1d(est.symbols, at_pilots, est.t, col);
      for (std::size_t s = 0; s < est.t; ++s) h.set(n, sc, s, col[s]);
    }
  }
  return h;
}

std::string CovarianceBank::bucket_key(ProfileId profile, Real speed_kmh, PatternId pattern) {
  std::ostringstream os;
  os << profile_name(profile) << '_' << std::lround(speed_kmh) << "kmh_" << pattern_name(pattern);
  return os.str();
}

const BucketCovariance& CovarianceBank::at(const std::string& bucket) const {
  auto it = buckets_.find(bucket);
  if (it == buckets_.end()) throw std::out_of_range("covariance bucket '" + bucket + "' not present");
  return it->second;
}

const BucketCovariance& CovarianceBank::lookup(const std::string& bucket) const {
  auto it = buckets_.find(bucket);
  return it != buckets_.end() ? it->second : at(kPooled);
}

NamedTensors CovarianceBank::to_tensors() const {
  NamedTensors out;
  auto planes = [](const std::vector<Complex>& m, std::size_t n) {
    Tensor t({2, n, n});
    for (std::size_t i = 0; i < n * n; ++i) {
      t[i] = m[i].real();
      t[n * n + i] = m[i].imag();
    }
    return t;
  };
  for (const auto& [name, c] : buckets_) {
    out.emplace_back("cov_f/" + name, planes(c.freq, c.k));
    out.emplace_back("cov_t/" + name, planes(c.time, c.t));
  }
  return out;
}

CovarianceBank CovarianceBank::from_tensors(const NamedTensors& tensors) {
  CovarianceBank bank;
  auto unplane = [](const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 2 || t.dim(1) != t.dim(2)) throw DimensionError("covariance tensor must be [2,n,n]");
    const std::size_t n = t.dim(1);
    std::vector<Complex> m(n * n);
    for (std::size_t i = 0; i < n * n; ++i) m[i] = {t[i], t[n * n + i]};
    return m;
  };
  for (const auto& [name, t] : tensors) {
    if (name.rfind("cov_f/", 0) == 0) {
      auto& b = bank.buckets_[name.substr(6)];
      b.k = t.dim(1);
      b.freq = unplane(t);
    } else if (name.rfind("cov_t/", 0) == 0) {
      auto& b = bank.buckets_[name.substr(6)];
      b.t = t.dim(1);
      b.time = unplane(t);
    }
  }
  for (const auto& [name, b] : bank.buckets_)
    if (b.freq.empty() || b.time.empty()) throw std::invalid_argument("covariance bucket '" + name + "' is incomplete");
  return bank;
}

CovarianceBank estimate_covariances(const std::vector<LabeledChannel>& data, std::size_t min_samples, Real loading) {
  if (data.empty()) throw std::invalid_argument("estimate_covariances: empty dataset");
  const std::size_t K = data.front().h->k, T = data.front().h->t;
  struct Acc {
    CMat f, t;
    std::size_t samples = 0, nf = 0, nt = 0;
  };
  std::map<std::string, Acc> acc;
  auto add = [&](Acc& a, const ChannelRealization& h) {
    if (a.samples == 0) {
      a.f = CMat::Zero(K, K);
      a.t = CMat::Zero(T, T);
    }
    CVec v(K), w(T);
    for (std::size_t n = 0; n < h.n_t; ++n) {
      for (std::size_t s = 0; s < T; ++s) {
        for (std::size_t sc = 0; sc < K; ++sc) v(sc) = h.get(n, sc, s);
        a.f.noalias() += v * v.adjoint();
        ++a.nf;
      }
      for (std::size_t sc = 0; sc < K; ++sc) {
        for (std::size_t s = 0; s < T; ++s) w(s) = h.get(n, sc, s);
        a.t.noalias() += w * w.adjoint();
        ++a.nt;
      }
    }
    ++a.samples;
  };
  for (const auto& d : data) {
    if (d.h->k != K || d.h->t != T) throw DimensionError("estimate_covariances: mixed grid sizes");
    add(acc[d.bucket], *d.h);
    add(acc[CovarianceBank::kPooled], *d.h);
  }
  CovarianceBank bank;
  for (auto& [name, a] : acc) {
    if (a.samples < min_samples)
      throw std::invalid_argument("covariance bucket '" + name + "' has " + std::to_string(a.samples) + " samples, needs " +
                                  std::to_string(min_samples));
    CMat f = a.f / static_cast<Real>(a.nf), t = a.t / static_cast<Real>(a.nt);
    f = (f + f.adjoint()) / 2;
    t = (t + t.adjoint()) / 2;
    f.diagonal().array() += loading;
    t.diagonal().array() += loading;
    BucketCovariance b;
    b.k = K;
    b.t = T;
    b.samples = a.samples;
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = 0; j < K; ++j) b.freq.push_back(f(i, j));
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j) b.time.push_back(t(i, j));
    bank.insert(name, std::move(b));
  }
  return bank;
}

ChannelRealization lmmse_interpolate(const PilotEstimate& est, const BucketCovariance& cov, Real noise_var) {
  if (cov.k != est.k || cov.t != est.t) throw DimensionError("lmmse_interpolate: covariance grid mismatch");
  if (noise_var < 0) throw std::invalid_argument("lmmse_interpolate: negative noise variance");
  const CMat cf = as_matrix(cov.freq, cov.k), ct = as_matrix(cov.time, cov.t);
  const std::size_t tp = est.symbols.size();
  ChannelRealization h(est.n_t, est.k, est.t);
  for (std::size_t n = 0; n < est.n_t; ++n) {
    const auto& P = est.subcarriers[n];
    const auto J = static_cast<Eigen::Index>(P.size());
    CMat a(J, J), cfp(J, est.k);  // C_f[P,P] + s I, C_f[P,:]
    for (Eigen::Index i = 0; i < J; ++i) {
      for (Eigen::Index j = 0; j < J; ++j) a(i, j) = cf(P[i], P[j]);
      a(i, i) += noise_var;
      cfp.row(i) = cf.row(P[i]);
    }
    const CMat wf = a.ldlt().solve(cfp).adjoint();  // K x J
    const Real err_f = std::max<Real>((cf - wf * cfp).diagonal().real().mean(), 0);

    CMat hf(est.k, tp);
    for (std::size_t si = 0; si < tp; ++si) {
      CVec y(J);
      for (Eigen::Index j = 0; j < J; ++j) y(j) = est.values[n][si * P.size() + j];
      hf.col(si) = wf * y;
    }
    const auto& S = est.symbols;
    CMat b(tp, tp), cts(tp, est.t);
    for (std::size_t i = 0; i < tp; ++i) {
      for (std::size_t j = 0; j < tp; ++j) b(i, j) = ct(S[i], S[j]);
      b(i, i) += err_f;
      cts.row(i) = ct.row(S[i]);
    }
    const CMat wt = b.ldlt().solve(cts).adjoint();  // T x tp
    const CMat full = hf * wt.transpose();          // K x T
    for (std::size_t sc = 0; sc < est.k; ++sc)
      for (std::size_t s = 0; s < est.t; ++s) h.set(n, sc, s, full(sc, s));
  }
  return h;
}

Tensor despread(const Tensor& x, std::size_t r_t, std::size_t r_f) {
  if (x.rank() != 3) throw DimensionError("despread: expects [c,k,t], got " + shape_str(x.shape()));
  const std::size_t C = x.dim(0), K = x.dim(1), T = x.dim(2);
  if (r_t == 0 || r_f == 0 || T % r_t != 0 || K % r_f != 0)
    throw DimensionError("despread: factors (" + std::to_string(r_t) + ", " + std::to_string(r_f) +
                         ") must divide grid " + shape_str(x.shape()));
  const std::size_t LB = T / r_t;
  Tensor out({C, K, LB});
  const Real inv = 1 / static_cast<Real>(r_t * r_f);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t kb = 0; kb < K / r_f; ++kb)
      for (std::size_t tb = 0; tb < LB; ++tb) {
        Real s = 0;
        for (std::size_t i = 0; i < r_f; ++i)
          for (std::size_t j = 0; j < r_t; ++j) s += x.at(c, kb * r_f + i, tb * r_t + j);
        for (std::size_t i = 0; i < r_f; ++i) out.at(c, kb * r_f + i, tb) = s * inv;
      }
  return out;
}

}  // namespace pfmce
