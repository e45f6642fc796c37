// Copyright 2026 The Anisoq Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anisoq/dataset.hpp"
#include "anisoq/error.hpp"
#include "anisoq/geometry.hpp"
#include "anisoq/parallel.hpp"
#include "anisoq/vq.hpp"

namespace anisoq {

// M dictionaries of k sub-codewords each; a datapoint is quantized as the
// concatenation of one codeword per subspace. Stored dictionary-major:
// entry (m, j) lives at (m*k + j) * sub_dimension.
struct ProductCodebook {
  std::size_t M = 0;
  std::size_t k = 0;
  std::size_t sub_dimension = 0;
  std::vector<double> dictionaries;

  std::size_t dim() const { return M * sub_dimension; }
  std::span<const double> codeword(std::size_t m, std::size_t j) const {
    return {dictionaries.data() + (m * k + j) * sub_dimension, sub_dimension};
  }
  std::span<double> mutable_codeword(std::size_t m, std::size_t j) {
    return {dictionaries.data() + (m * k + j) * sub_dimension, sub_dimension};
  }
};

// One code per subspace per datapoint, row-major n x M.
struct CodeMatrix {
  std::size_t n = 0;
  std::size_t M = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> codes;

  std::span<const std::uint32_t> row(std::size_t i) const {
    return {codes.data() + i * M, M};
  }
  std::span<std::uint32_t> mutable_row(std::size_t i) {
    return {codes.data() + i * M, M};
  }
};

// Normal equations of the joint codebook problem over the stacked
// dictionary vector (all codewords concatenated in dictionary-major order).
struct SelectorSystem {
  Eigen::MatrixXd system_matrix;
  Eigen::VectorXd rhs;
};

inline ProductCodebook to_product(const Codebook& cb) {
  ProductCodebook out;
  out.M = 1;
  out.k = cb.k;
  out.sub_dimension = cb.d;
  out.dictionaries = cb.codewords;
  return out;
}

inline Codebook to_vq(const ProductCodebook& cb) {
  if (cb.M != 1) throw InvalidArgument("to_vq requires M == 1");
  Codebook out;
  out.k = cb.k;
  out.d = cb.sub_dimension;
  out.codewords = cb.dictionaries;
  return out;
}

// Concatenation of the selected sub-codewords.
inline std::vector<double> reconstruct(std::span<const std::uint32_t> codes_row,
                                       const ProductCodebook& cb) {
  if (codes_row.size() != cb.M)
    throw DimensionMismatch("need one code per subspace");
  std::vector<double> out(cb.dim());
  for (std::size_t m = 0; m < cb.M; ++m) {
    if (codes_row[m] >= cb.k)
      throw CodeOutOfRange("code " + std::to_string(codes_row[m]) +
                           " >= k = " + std::to_string(cb.k));
    const auto cw = cb.codeword(m, codes_row[m]);
    std::copy(cw.begin(), cw.end(), out.begin() + m * cb.sub_dimension);
  }
  return out;
}

namespace detail {

// Residual terms of the current reconstruction, accumulated per subspace in
// ascending order; the total loss of a candidate code change is evaluated
// from running sums so a coordinate sweep costs O(k d) per point.
struct PqPointState {
  std::vector<double> t2;  // per-subspace squared residual
  std::vector<double> t1;  // per-subspace residual . x
  double s2 = 0.0;
  double s1 = 0.0;
};

inline void pq_point_state(std::span<const double> x,
                           std::span<const std::uint32_t> codes_row,
                           const ProductCodebook& cb, PqPointState& st) {
  st.t2.resize(cb.M);
  st.t1.resize(cb.M);
  st.s2 = 0.0;
  st.s1 = 0.0;
  for (std::size_t m = 0; m < cb.M; ++m) {
    const auto xs = x.subspan(m * cb.sub_dimension, cb.sub_dimension);
    residual_terms(xs, cb.codeword(m, codes_row[m]), st.t2[m], st.t1[m]);
    st.s2 += st.t2[m];
    st.s1 += st.t1[m];
  }
}

inline double pq_point_loss(std::span<const double> x,
                            std::span<const std::uint32_t> codes_row,
                            const ProductCodebook& cb,
                            const AnisotropicWeights& w, double inv_norm2) {
  PqPointState st;
  pq_point_state(x, codes_row, cb, st);
  if (w.is_isotropic()) return w.h_perpendicular * st.s2;
  const double loss = combined_loss(st.s2, st.s1, w, inv_norm2);
  return loss > 0.0 ? loss : 0.0;
}

// One coordinate-descent pass over `sweep_order`; every candidate that ties
// the best loss resolves to the lowest code index. Returns whether any code
// changed.
inline bool cd_sweep(std::span<const double> x, std::span<std::uint32_t> codes,
                     const ProductCodebook& cb, const AnisotropicWeights& w,
                     std::span<const std::size_t> sweep_order,
                     double inv_norm2, PqPointState& st) {
  const bool iso = w.is_isotropic();
  bool changed = false;
  for (const std::size_t m : sweep_order) {
    const auto xs = x.subspan(m * cb.sub_dimension, cb.sub_dimension);
    const double base2 = st.s2 - st.t2[m];
    const double base1 = st.s1 - st.t1[m];
    std::size_t best_j = 0;
    double best_score = 0.0, best2 = 0.0, best1 = 0.0;
    for (std::size_t j = 0; j < cb.k; ++j) {
      double c2 = 0.0, c1 = 0.0;
      residual_terms(xs, cb.codeword(m, j), c2, c1);
      const double score =
          iso ? c2 : combined_loss(base2 + c2, base1 + c1, w, inv_norm2);
      if (j == 0 || score < best_score) {
        best_score = score;
        best_j = j;
        best2 = c2;
        best1 = c1;
      }
    }
    if (best_j != codes[m]) {
      codes[m] = static_cast<std::uint32_t>(best_j);
      changed = true;
    }
    st.t2[m] = best2;
    st.t1[m] = best1;
    st.s2 = base2 + best2;
    st.s1 = base1 + best1;
  }
  return changed;
}

inline double point_inv_norm2(const Dataset& data, std::size_t i,
                              const AnisotropicWeights& w) {
  if (w.is_isotropic()) return 0.0;
  const double n2 = data.norms[i] * data.norms[i];
  if (n2 == 0.0)
    throw ZeroNormDatapoint("anisotropic loss undefined at |x| = 0");
  return 1.0 / n2;
}

inline std::vector<std::size_t> default_sweep(std::size_t M) {
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return order;
}

inline void pq_assign_pass(const Dataset& data, const ProductCodebook& cb,
                           std::span<const AnisotropicWeights> weights,
                           int threads, bool sweep_to_fixed_point,
                           CodeMatrix& codes, std::span<double> losses) {
  const auto order = default_sweep(cb.M);
  parallel_for(data.n, threads, [&](std::size_t begin, std::size_t end) {
    PqPointState st;
    for (std::size_t i = begin; i < end; ++i) {
      const auto x = data.row(i);
      const double inv_norm2 = point_inv_norm2(data, i, weights[i]);
      auto row = codes.mutable_row(i);
      pq_point_state(x, row, cb, st);
      int sweeps = 0;
      while (cd_sweep(x, row, cb, weights[i], order, inv_norm2, st) &&
             sweep_to_fixed_point && ++sweeps < 64) {
      }
      losses[i] = pq_point_loss(x, row, cb, weights[i], inv_norm2);
    }
  });
}

// Per-subspace nearest sub-codeword in squared distance; the starting point
// for score-aware re-quantization and the whole story for isotropic weights.
inline void reconstruction_nearest_pass(const Dataset& data,
                                        const ProductCodebook& cb, int threads,
                                        CodeMatrix& codes) {
  parallel_for(data.n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto x = data.row(i);
      auto row = codes.mutable_row(i);
      for (std::size_t m = 0; m < cb.M; ++m) {
        const auto xs = x.subspan(m * cb.sub_dimension, cb.sub_dimension);
        std::size_t best_j = 0;
        double best = 0.0;
        for (std::size_t j = 0; j < cb.k; ++j) {
          double c2 = 0.0, c1 = 0.0;
          residual_terms(xs, cb.codeword(m, j), c2, c1);
          if (j == 0 || c2 < best) {
            best = c2;
            best_j = j;
          }
        }
        row[m] = static_cast<std::uint32_t>(best_j);
      }
    }
  });
}

}  // namespace detail

// One coordinate-descent pass for a single point: for each subspace in
// `sweep_order`, pick the sub-codeword minimizing the full anisotropic loss
// with the other subspaces held fixed. The returned codes never lose to the
// input codes.
inline std::vector<std::uint32_t> pq_assign_point(
    std::span<const double> x, std::span<const std::uint32_t> current_codes,
    const ProductCodebook& cb, const AnisotropicWeights& w,
    std::span<const std::size_t> sweep_order = {}) {
  if (x.size() != cb.dim())
    throw DimensionMismatch("datapoint dimension does not match codebook");
  if (current_codes.size() != cb.M)
    throw DimensionMismatch("need one current code per subspace");
  for (std::uint32_t c : current_codes)
    if (c >= cb.k) throw CodeOutOfRange("current code out of range");
  double inv_norm2 = 0.0;
  if (!w.is_isotropic()) {
    const double n2 = detail::norm2(x);
    if (n2 == 0.0)
      throw ZeroNormDatapoint("anisotropic assignment undefined at |x| = 0");
    inv_norm2 = 1.0 / n2;
  }
  std::vector<std::uint32_t> codes(current_codes.begin(), current_codes.end());
  const auto order =
      sweep_order.empty() ? detail::default_sweep(cb.M)
                          : std::vector<std::size_t>(sweep_order.begin(),
                                                     sweep_order.end());
  detail::PqPointState st;
  detail::pq_point_state(x, codes, cb, st);
  detail::cd_sweep(x, codes, cb, w, order, inv_norm2, st);
  return codes;
}

// Normal equations sum_i B_i^T ((h_par_i - h_perp_i) x_i x_i^T / |x_i|^2 +
// h_perp_i I) B_i and sum_i h_par_i B_i^T x_i, where B_i selects datapoint
// i's codewords out of the stacked dictionary vector. Only the blocks of
// codewords actually referenced by a point receive contributions; with
// isotropic weights the coupling term vanishes identically and the system
// is block-diagonal per (subspace, codeword).
inline SelectorSystem assemble_selector_system(
    const Dataset& data, const CodeMatrix& codes,
    std::span<const AnisotropicWeights> weights, std::size_t M,
    std::size_t k) {
  if (codes.n != data.n || codes.M != M)
    throw DimensionMismatch("code matrix does not match dataset");
  if (data.d % M != 0)
    throw DimensionNotDivisible("dimension not divisible by M");
  if (weights.size() != data.n)
    throw InvalidArgument("need one AnisotropicWeights per datapoint");
  const std::size_t sub_d = data.d / M;
  const std::size_t dim = k * data.d;

  SelectorSystem sys;
  sys.system_matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                            static_cast<Eigen::Index>(dim));
  sys.rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));

  for (std::size_t i = 0; i < data.n; ++i) {
    const auto x = data.row(i);
    const auto row = codes.row(i);
    const double hp = weights[i].h_parallel;
    const double ho = weights[i].h_perpendicular;
    double coef = 0.0;
    if (hp != ho) {
      const double n2 = data.norms[i] * data.norms[i];
      if (n2 == 0.0)
        throw ZeroNormDatapoint("anisotropic update undefined at |x| = 0");
      coef = (hp - ho) / n2;
    }
    for (std::size_t m = 0; m < M; ++m) {
      if (row[m] >= k) throw CodeOutOfRange("code out of range");
      const std::size_t rb = (m * k + row[m]) * sub_d;
      for (std::size_t c = 0; c < sub_d; ++c) {
        sys.system_matrix(static_cast<Eigen::Index>(rb + c),
                          static_cast<Eigen::Index>(rb + c)) += ho;
        sys.rhs(static_cast<Eigen::Index>(rb + c)) += hp * x[m * sub_d + c];
      }
      if (coef == 0.0) continue;
      for (std::size_t m2 = 0; m2 < M; ++m2) {
        const std::size_t cbk = (m2 * k + row[m2]) * sub_d;
        for (std::size_t c1 = 0; c1 < sub_d; ++c1) {
          const double xc = coef * x[m * sub_d + c1];
          for (std::size_t c2 = 0; c2 < sub_d; ++c2) {
            sys.system_matrix(static_cast<Eigen::Index>(rb + c1),
                              static_cast<Eigen::Index>(cbk + c2)) +=
                xc * x[m2 * sub_d + c2];
          }
        }
      }
    }
  }
  return sys;
}

// Joint codebook solve given fixed codes. Paths:
//   - M == 1 delegates to the vq closed-form update per partition, which is
//     the same linear system decomposed by codeword;
//   - isotropic weights reduce to per-(m, codeword) weighted subvector
//     means (the system is block-diagonal), computed directly;
//   - otherwise the dense stacked system is assembled and solved by
//     Cholesky factorization. Stacked systems beyond 16384 unknowns are
//     rejected rather than silently switching methods.
// Codewords never referenced by any point are reseeded afterwards from the
// subvectors of the points with the highest loss under the new codebook;
// this leaves the current total loss untouched.
inline ProductCodebook pq_codebook_update(
    const Dataset& data, const CodeMatrix& codes,
    std::span<const AnisotropicWeights> weights, std::size_t M, std::size_t k,
    double ridge = -1.0) {
  if (data.n == 0) throw EmptyDataset("cannot update on an empty dataset");
  if (codes.n != data.n || codes.M != M)
    throw DimensionMismatch("code matrix does not match dataset");
  if (data.d % M != 0)
    throw DimensionNotDivisible("dimension not divisible by M");
  if (weights.size() != data.n)
    throw InvalidArgument("need one AnisotropicWeights per datapoint");
  const std::size_t sub_d = data.d / M;

  ProductCodebook cb;
  cb.M = M;
  cb.k = k;
  cb.sub_dimension = sub_d;
  cb.dictionaries.assign(M * k * sub_d, 0.0);

  std::vector<std::uint32_t> usage(M * k, 0);
  for (std::size_t i = 0; i < data.n; ++i) {
    const auto row = codes.row(i);
    for (std::size_t m = 0; m < M; ++m) {
      if (row[m] >= k) throw CodeOutOfRange("code out of range");
      ++usage[m * k + row[m]];
    }
  }

  bool all_iso = true;
  for (const auto& w : weights) all_iso &= w.is_isotropic();

  if (M == 1) {
    std::vector<double> member_buf;
    std::vector<AnisotropicWeights> weight_buf;
    for (std::size_t j = 0; j < k; ++j) {
      if (usage[j] == 0) continue;
      member_buf.clear();
      weight_buf.clear();
      for (std::size_t i = 0; i < data.n; ++i) {
        if (codes.codes[i] != j) continue;
        const auto row = data.row(i);
        member_buf.insert(member_buf.end(), row.begin(), row.end());
        weight_buf.push_back(weights[i]);
      }
      const auto updated =
          update_codeword(data.d, member_buf, weight_buf, ridge);
      std::copy(updated.begin(), updated.end(),
                cb.mutable_codeword(0, j).begin());
    }
  } else if (all_iso) {
    std::vector<double> num(M * k * sub_d, 0.0);
    std::vector<double> den(M * k, 0.0);
    for (std::size_t i = 0; i < data.n; ++i) {
      const auto x = data.row(i);
      const auto row = codes.row(i);
      for (std::size_t m = 0; m < M; ++m) {
        const std::size_t slot = m * k + row[m];
        for (std::size_t c = 0; c < sub_d; ++c)
          num[slot * sub_d + c] += weights[i].h_parallel * x[m * sub_d + c];
        den[slot] += weights[i].h_perpendicular;
      }
    }
    for (std::size_t slot = 0; slot < M * k; ++slot) {
      if (usage[slot] == 0) continue;
      if (den[slot] <= 0.0) throw SingularSystem("zero total weight in block");
      for (std::size_t c = 0; c < sub_d; ++c)
        cb.dictionaries[slot * sub_d + c] = num[slot * sub_d + c] / den[slot];
    }
  } else {
    const std::size_t dim = k * data.d;
    if (dim > 16384)
      throw InvalidArgument(
          "stacked codebook system has " + std::to_string(dim) +
          " unknowns; configurations beyond 16384 are not supported");
    SelectorSystem sys = assemble_selector_system(data, codes, weights, M, k);
    const double ridge_eff =
        ridge < 0.0 ? 1e-6 * sys.system_matrix.trace() /
                          static_cast<double>(dim)
                    : ridge;
    sys.system_matrix.diagonal().array() += ridge_eff;
    Eigen::LLT<Eigen::MatrixXd> llt(sys.system_matrix);
    if (llt.info() != Eigen::Success)
      throw SingularSystem("joint codebook system is not positive definite");
    const Eigen::VectorXd c = llt.solve(sys.rhs);
    std::copy(c.data(), c.data() + dim, cb.dictionaries.begin());
  }

  bool any_unused = false;
  for (std::uint32_t u : usage) any_unused |= u == 0;
  if (any_unused) {
    std::vector<double> losses(data.n);
    for (std::size_t i = 0; i < data.n; ++i)
      losses[i] = detail::pq_point_loss(
          data.row(i), codes.row(i), cb, weights[i],
          detail::point_inv_norm2(data, i, weights[i]));
    const auto order = detail::loss_ranking(losses);
    std::size_t cursor = 0;
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t j = 0; j < k; ++j) {
        if (usage[m * k + j] != 0) continue;
        const std::size_t p = order[cursor++ % order.size()];
        const auto x = data.row(p);
        std::copy(x.begin() + m * sub_d, x.begin() + (m + 1) * sub_d,
                  cb.mutable_codeword(m, j).begin());
      }
    }
  }
  return cb;
}

// Classical product quantization under reconstruction loss: an independent
// k-means per subspace. Subspace m consumes seed + m. Serves as the warm
// start and as the comparison baseline.
inline std::pair<ProductCodebook, CodeMatrix> train_l2_pq(
    const Dataset& data, std::size_t M, std::size_t k,
    const TrainConfig& config) {
  if (data.n == 0) throw EmptyDataset("cannot train on an empty dataset");
  if (M == 0 || data.d % M != 0)
    throw DimensionNotDivisible("dimension not divisible by M");
  if (k == 0 || k > data.n) throw InvalidArgument("need 1 <= k <= n");

  ProductCodebook cb;
  cb.M = M;
  cb.k = k;
  cb.sub_dimension = data.d / M;
  cb.dictionaries.resize(M * k * cb.sub_dimension);
  CodeMatrix codes;
  codes.n = data.n;
  codes.M = M;
  codes.k = k;
  codes.codes.resize(data.n * M);

  const std::vector<AnisotropicWeights> unit(data.n,
                                             AnisotropicWeights::isotropic());
  for (std::size_t m = 0; m < M; ++m) {
    const Dataset sub = detail::subspace_view(data, m, M);
    TrainConfig cfg = config;
    cfg.seed = config.seed + m;
    auto [sub_cb, sub_assign] = train_avq(sub, k, unit, cfg);
    std::copy(sub_cb.codewords.begin(), sub_cb.codewords.end(),
              cb.mutable_codeword(m, 0).begin());
    for (std::size_t i = 0; i < data.n; ++i)
      codes.codes[i * M + m] = sub_assign.assignments[i];
  }
  return {std::move(cb), std::move(codes)};
}

// Alternating trainer for the anisotropic product quantization problem.
// Schedule:
//   1. warm start (default): train_l2_pq provides dictionaries and codes;
//      otherwise dictionaries are sampled per subspace from datapoint
//      subvectors (Rng(seed), one sample_distinct per subspace in order)
//      and codes start reconstruction-nearest.
//   2. coordinate-descent assignment pass; loss recorded as history[0]
//   3. up to max_iterations rounds of joint codebook solve + assignment
//      pass, recording the loss after each pass; stops when a pass changes
//      no code or the relative loss drop falls below relative_tolerance.
inline std::pair<ProductCodebook, CodeMatrix> train_apq(
    const Dataset& data, std::size_t M, std::size_t k,
    std::span<const AnisotropicWeights> weights, const TrainConfig& config,
    bool warm_start = true, std::vector<double>* loss_history = nullptr) {
  if (data.n == 0) throw EmptyDataset("cannot train on an empty dataset");
  if (M == 0 || data.d % M != 0)
    throw DimensionNotDivisible("dimension not divisible by M");
  if (k == 0 || k > data.n) throw InvalidArgument("need 1 <= k <= n");
  if (weights.size() != data.n)
    throw InvalidArgument("need one AnisotropicWeights per datapoint");

  ProductCodebook cb;
  CodeMatrix codes;
  if (warm_start) {
    std::tie(cb, codes) = train_l2_pq(data, M, k, config);
  } else {
    cb.M = M;
    cb.k = k;
    cb.sub_dimension = data.d / M;
    cb.dictionaries.resize(M * k * cb.sub_dimension);
    Rng rng(config.seed);
    for (std::size_t m = 0; m < M; ++m) {
      const auto idx = rng.sample_distinct(data.n, k);
      for (std::size_t j = 0; j < k; ++j) {
        const auto x = data.row(idx[j]);
        std::copy(x.begin() + m * cb.sub_dimension,
                  x.begin() + (m + 1) * cb.sub_dimension,
                  cb.mutable_codeword(m, j).begin());
      }
    }
    codes.n = data.n;
    codes.M = M;
    codes.k = k;
    codes.codes.resize(data.n * M);
    detail::reconstruction_nearest_pass(data, cb, config.threads, codes);
  }

  std::vector<double> losses(data.n, 0.0);
  detail::pq_assign_pass(data, cb, weights, config.threads,
                         config.sweep_to_fixed_point, codes, losses);
  double total = std::accumulate(losses.begin(), losses.end(), 0.0);
  if (loss_history) loss_history->push_back(total);

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    cb = pq_codebook_update(data, codes, weights, M, k, config.ridge);
    std::vector<std::uint32_t> prev = codes.codes;
    detail::pq_assign_pass(data, cb, weights, config.threads,
                           config.sweep_to_fixed_point, codes, losses);
    const double prev_total = total;
    total = std::accumulate(losses.begin(), losses.end(), 0.0);
    if (loss_history) loss_history->push_back(total);

    std::size_t changes = 0;
    for (std::size_t i = 0; i < codes.codes.size(); ++i)
      changes += codes.codes[i] != prev[i];
    if (changes == 0) break;
    if (config.relative_tolerance > 0.0 &&
        (prev_total == 0.0 ||
         prev_total - total <= config.relative_tolerance * prev_total))
      break;
  }
  return {std::move(cb), std::move(codes)};
}

// Re-quantizes a dataset against a fixed codebook: reconstruction-nearest
// initialization followed by `passes` coordinate-descent sweeps under the
// given weights. passes = 0 reproduces the reconstruction-assignment
// baseline.
inline CodeMatrix pq_quantize(const Dataset& data, const ProductCodebook& cb,
                              std::span<const AnisotropicWeights> weights,
                              int passes, int threads = 1) {
  if (data.d != cb.dim())
    throw DimensionMismatch("dataset dimension does not match codebook");
  if (weights.size() != data.n)
    throw InvalidArgument("need one AnisotropicWeights per datapoint");
  if (passes < 0) throw InvalidArgument("passes must be >= 0");
  CodeMatrix codes;
  codes.n = data.n;
  codes.M = cb.M;
  codes.k = cb.k;
  codes.codes.resize(data.n * cb.M);
  detail::reconstruction_nearest_pass(data, cb, threads, codes);
  const auto order = detail::default_sweep(cb.M);
  if (passes > 0) {
    parallel_for(data.n, threads, [&](std::size_t begin, std::size_t end) {
      detail::PqPointState st;
      for (std::size_t i = begin; i < end; ++i) {
        const auto x = data.row(i);
        const double inv_norm2 = detail::point_inv_norm2(data, i, weights[i]);
        auto row = codes.mutable_row(i);
        detail::pq_point_state(x, row, cb, st);
        for (int p = 0; p < passes; ++p) {
          if (!detail::cd_sweep(x, row, cb, weights[i], order, inv_norm2, st))
            break;
        }
      }
    });
  }
  return codes;
}

// --- serialization ---------------------------------------------------------
//
// Codebook container: magic "AQCB", then version, M, k, d as little-endian
// uint32, then the dictionaries as row-major little-endian float32 (k*d
// values in dictionary-major order). Vector quantization codebooks use the
// same container with M = 1.
//
// Code container: n, M, k as little-endian uint32, then n*M codes row-major
// as uint8 when k <= 256, else uint16.

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4))
    throw MalformedFile(path + ": truncated header");
  return v;
}

}  // namespace detail

inline void save_codebook(const ProductCodebook& cb, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MalformedFile("cannot open " + path + " for writing");
  out.write("AQCB", 4);
  detail::put_u32(out, 1u);
  detail::put_u32(out, static_cast<std::uint32_t>(cb.M));
  detail::put_u32(out, static_cast<std::uint32_t>(cb.k));
  detail::put_u32(out, static_cast<std::uint32_t>(cb.dim()));
  for (double v : cb.dictionaries) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!out) throw MalformedFile("short write to " + path);
}

inline ProductCodebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedFile("cannot open " + path);
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, "AQCB", 4) != 0)
    throw MalformedFile(path + ": bad magic");
  const std::uint32_t version = detail::get_u32(in, path);
  if (version != 1u)
    throw MalformedFile(path + ": unsupported version " +
                        std::to_string(version));
  ProductCodebook cb;
  cb.M = detail::get_u32(in, path);
  cb.k = detail::get_u32(in, path);
  const std::uint32_t d = detail::get_u32(in, path);
  if (cb.M == 0 || d == 0 || d % cb.M != 0)
    throw MalformedFile(path + ": inconsistent shape");
  cb.sub_dimension = d / cb.M;
  cb.dictionaries.resize(static_cast<std::size_t>(cb.k) * d);
  for (double& v : cb.dictionaries) {
    float f = 0.0f;
    if (!in.read(reinterpret_cast<char*>(&f), 4))
      throw MalformedFile(path + ": truncated dictionaries");
    v = static_cast<double>(f);
  }
  return cb;
}

inline void save_codes(const CodeMatrix& cm, const std::string& path) {
  if (cm.k > 65536)
    throw InvalidArgument("code serialization supports k <= 65536");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MalformedFile("cannot open " + path + " for writing");
  detail::put_u32(out, static_cast<std::uint32_t>(cm.n));
  detail::put_u32(out, static_cast<std::uint32_t>(cm.M));
  detail::put_u32(out, static_cast<std::uint32_t>(cm.k));
  if (cm.k <= 256) {
    for (std::uint32_t c : cm.codes) {
      const std::uint8_t b = static_cast<std::uint8_t>(c);
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
  } else {
    for (std::uint32_t c : cm.codes) {
      const std::uint16_t b = static_cast<std::uint16_t>(c);
      out.write(reinterpret_cast<const char*>(&b), 2);
    }
  }
  if (!out) throw MalformedFile("short write to " + path);
}

inline CodeMatrix load_codes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedFile("cannot open " + path);
  CodeMatrix cm;
  cm.n = detail::get_u32(in, path);
  cm.M = detail::get_u32(in, path);
  cm.k = detail::get_u32(in, path);
  if (cm.M == 0) throw MalformedFile(path + ": M must be positive");
  cm.codes.resize(cm.n * cm.M);
  if (cm.k <= 256) {
    for (std::uint32_t& c : cm.codes) {
      std::uint8_t b = 0;
      if (!in.read(reinterpret_cast<char*>(&b), 1))
        throw MalformedFile(path + ": truncated codes");
      c = b;
    }
  } else {
    for (std::uint32_t& c : cm.codes) {
      std::uint16_t b = 0;
      if (!in.read(reinterpret_cast<char*>(&b), 2))
        throw MalformedFile(path + ": truncated codes");
      c = b;
    }
  }
  for (std::uint32_t c : cm.codes)
    if (c >= cm.k) throw CodeOutOfRange(path + ": stored code exceeds k");
  return cm;
}

}  // namespace anisoq
