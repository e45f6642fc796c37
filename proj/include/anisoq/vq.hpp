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
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "anisoq/dataset.hpp"
#include "anisoq/error.hpp"
#include "anisoq/geometry.hpp"
#include "anisoq/parallel.hpp"
#include "anisoq/rng.hpp"

namespace anisoq {

struct Codebook {
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<double> codewords;  // row-major k*d

  std::span<const double> row(std::size_t j) const {
    return {codewords.data() + j * d, d};
  }
  std::span<double> mutable_row(std::size_t j) {
    return {codewords.data() + j * d, d};
  }
};

struct VqAssignment {
  std::vector<std::uint32_t> assignments;
  std::vector<double> loss_history;  // total loss after each assignment pass
};

enum class EmptyPartitionPolicy {
  reseed_highest_loss,  // replace the codeword with the worst-quantized point
  keep_previous,
};

struct TrainConfig {
  int max_iterations = 100;
  double relative_tolerance = 1e-6;
  std::uint64_t seed = 0;
  EmptyPartitionPolicy empty_partition_policy =
      EmptyPartitionPolicy::reseed_highest_loss;
  // Tikhonov term for the codeword systems; negative selects the default
  // (1e-10 x mean h_perp for vq updates, 1e-6 x trace/size for the joint
  // product-quantization solve).
  double ridge = -1.0;
  int threads = 1;
  // Product quantization only: repeat per-point coordinate sweeps until the
  // point's codes stop changing instead of a single fixed-order pass.
  bool sweep_to_fixed_point = false;
};

namespace detail {

// Loss used for assignment scoring. With isotropic weights the score is the
// plain squared distance (argmin is invariant to the positive h scale and
// needs no datapoint norm); otherwise the fused anisotropic form. Keeping
// one code path here is what makes the k-means reduction exact.
struct AssignScore {
  double score;      // quantity minimized
  double dist2;      // squared residual norm
  double rdot;       // residual . x
};

inline std::size_t assign_scan(std::span<const double> x, const Codebook& cb,
                               const AnisotropicWeights& w, double inv_norm2,
                               AssignScore& best) {
  std::size_t best_j = 0;
  bool first = true;
  const bool iso = w.is_isotropic();
  for (std::size_t j = 0; j < cb.k; ++j) {
    double dist2 = 0.0, rdot = 0.0;
    residual_terms(x, cb.row(j), dist2, rdot);
    const double score = iso ? dist2 : combined_loss(dist2, rdot, w, inv_norm2);
    if (first || score < best.score) {
      best = {score, dist2, rdot};
      best_j = j;
      first = false;
    }
  }
  return best_j;
}

inline double recorded_loss(const AssignScore& s, const AnisotropicWeights& w) {
  if (w.is_isotropic()) return w.h_perpendicular * s.dist2;
  return s.score > 0.0 ? s.score : 0.0;
}

}  // namespace detail

// Index of the codeword minimizing the anisotropic loss, ties to the lowest
// index. Zero-norm datapoints are accepted only under isotropic weights
// (where the loss degenerates to squared distance).
inline std::size_t assign_point(std::span<const double> x, const Codebook& cb,
                                const AnisotropicWeights& w) {
  if (cb.k == 0) throw InvalidArgument("empty codebook");
  if (x.size() != cb.d)
    throw DimensionMismatch("datapoint dimension does not match codebook");
  double inv_norm2 = 0.0;
  if (!w.is_isotropic()) {
    const double n2 = detail::norm2(x);
    if (n2 == 0.0)
      throw ZeroNormDatapoint("anisotropic assignment undefined at |x| = 0");
    inv_norm2 = 1.0 / n2;
  }
  detail::AssignScore best{};
  return detail::assign_scan(x, cb, w, inv_norm2, best);
}

// Closed-form minimizer of sum_i h_par_i |r_par(x_i, c)|^2 +
// h_perp_i |r_perp(x_i, c)|^2 over c:
//
//   c* = (sum_i h_perp_i I + sum_i (h_par_i - h_perp_i)/|x_i|^2 x_i x_i^T
//         + ridge I)^(-1) (sum_i h_par_i x_i)
//
// With isotropic weights the system is diagonal and the solution reduces to
// the weighted mean, computed directly (and exactly) without a solve; the
// ridge is not applied on that path since the system cannot be singular.
// `points` is row-major with one weight per row; ridge < 0 selects the
// default 1e-10 x mean h_perp.
inline std::vector<double> update_codeword(
    std::size_t d, std::span<const double> points,
    std::span<const AnisotropicWeights> weights, double ridge = -1.0) {
  if (d == 0 || points.empty() || points.size() % d != 0)
    throw InvalidArgument("points must be a non-empty multiple of d");
  const std::size_t m = points.size() / d;
  if (weights.size() != m)
    throw InvalidArgument("need one weight per point");

  bool all_iso = true;
  for (const auto& w : weights) all_iso &= w.is_isotropic();

  if (all_iso) {
    std::vector<double> mean(d, 0.0);
    double den = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double hp = weights[i].h_parallel;
      for (std::size_t j = 0; j < d; ++j) mean[j] += hp * points[i * d + j];
      den += weights[i].h_perpendicular;
    }
    if (den <= 0.0) throw SingularSystem("all h_perp weights are zero");
    for (double& v : mean) v /= den;
    return mean;
  }

  double mean_hperp = 0.0;
  for (const auto& w : weights) mean_hperp += w.h_perpendicular;
  mean_hperp /= static_cast<double>(m);
  const double ridge_eff = ridge < 0.0 ? 1e-10 * mean_hperp : ridge;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d),
                                            static_cast<Eigen::Index>(d));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  double diag = ridge_eff;
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::Map<const Eigen::VectorXd> x(points.data() + i * d,
                                              static_cast<Eigen::Index>(d));
    const double n2 = x.squaredNorm();
    if (n2 == 0.0)
      throw ZeroNormDatapoint("anisotropic update undefined at |x| = 0");
    const double coef =
        (weights[i].h_parallel - weights[i].h_perpendicular) / n2;
    a.selfadjointView<Eigen::Lower>().rankUpdate(x, coef);
    b += weights[i].h_parallel * x;
    diag += weights[i].h_perpendicular;
  }
  a.diagonal().array() += diag;

  Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(a);
  if (llt.info() != Eigen::Success)
    throw SingularSystem("codeword system is not positive definite");
  const Eigen::VectorXd c = llt.solve(b);
  return std::vector<double>(c.data(), c.data() + d);
}

namespace detail {

inline void vq_assign_pass(const Dataset& data, const Codebook& cb,
                           std::span<const AnisotropicWeights> weights,
                           int threads, std::span<std::uint32_t> codes,
                           std::span<double> losses) {
  parallel_for(data.n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& w = weights[i];
      double inv_norm2 = 0.0;
      if (!w.is_isotropic()) {
        const double n2 = data.norms[i] * data.norms[i];
        if (n2 == 0.0)
          throw ZeroNormDatapoint("anisotropic assignment undefined at |x|=0");
        inv_norm2 = 1.0 / n2;
      }
      AssignScore best{};
      codes[i] =
          static_cast<std::uint32_t>(assign_scan(data.row(i), cb, w,
                                                 inv_norm2, best));
      losses[i] = recorded_loss(best, w);
    }
  });
}

// Points ordered by loss descending (index ascending on ties), used to
// reseed empty partitions / unused codewords deterministically.
inline std::vector<std::size_t> loss_ranking(std::span<const double> losses) {
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return losses[a] > losses[b];
                   });
  return order;
}

}  // namespace detail

// Lloyd-style alternation for the anisotropic vector quantization problem.
// Schedule (all consumers of the seed contract rely on this exact order):
//   1. codewords = rows sampled by Rng(seed).sample_distinct(n, k)
//   2. assignment pass; total loss recorded as loss_history[0]
//   3. up to max_iterations rounds: per-partition codeword update (empty
//      partitions handled per policy), assignment pass, loss recorded.
//      Stops early when a pass changes no assignment, or when
//      relative_tolerance > 0 and the relative loss drop falls below it.
// Both alternation steps are exact minimizations, so the recorded loss is
// non-increasing. Deterministic for a fixed seed, independent of `threads`.
inline std::pair<Codebook, VqAssignment> train_avq(
    const Dataset& data, std::size_t k,
    std::span<const AnisotropicWeights> weights, const TrainConfig& config) {
  if (data.n == 0) throw EmptyDataset("cannot train on an empty dataset");
  if (k == 0 || k > data.n)
    throw InvalidArgument("need 1 <= k <= n (codewords come from datapoints)");
  if (weights.size() != data.n)
    throw InvalidArgument("need one AnisotropicWeights per datapoint");

  Codebook cb;
  cb.k = k;
  cb.d = data.d;
  cb.codewords.resize(k * data.d);
  {
    Rng rng(config.seed);
    const auto idx = rng.sample_distinct(data.n, k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto row = data.row(idx[j]);
      std::copy(row.begin(), row.end(), cb.mutable_row(j).begin());
    }
  }

  VqAssignment out;
  out.assignments.assign(data.n, 0);
  std::vector<double> losses(data.n, 0.0);
  detail::vq_assign_pass(data, cb, weights, config.threads, out.assignments,
                         losses);
  double total = std::accumulate(losses.begin(), losses.end(), 0.0);
  out.loss_history.push_back(total);

  std::vector<std::uint32_t> counts(k, 0);
  std::vector<double> member_buf;
  std::vector<AnisotropicWeights> weight_buf;

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    // Codebook update per partition, members in ascending point order.
    std::fill(counts.begin(), counts.end(), 0u);
    for (std::uint32_t a : out.assignments) ++counts[a];
    std::vector<std::vector<std::uint32_t>> members(k);
    for (std::size_t j = 0; j < k; ++j) members[j].reserve(counts[j]);
    for (std::size_t i = 0; i < data.n; ++i)
      members[out.assignments[i]].push_back(static_cast<std::uint32_t>(i));

    std::vector<std::size_t> reseed_order;
    std::size_t reseed_cursor = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (members[j].empty()) {
        if (config.empty_partition_policy == EmptyPartitionPolicy::keep_previous)
          continue;
        if (reseed_order.empty()) reseed_order = detail::loss_ranking(losses);
        // Reseeding an unreferenced codeword leaves the current loss intact;
        // the next pass can only improve on it.
        const std::size_t p = reseed_order[reseed_cursor++];
        const auto row = data.row(p);
        std::copy(row.begin(), row.end(), cb.mutable_row(j).begin());
        continue;
      }
      member_buf.resize(members[j].size() * data.d);
      weight_buf.resize(members[j].size());
      for (std::size_t t = 0; t < members[j].size(); ++t) {
        const auto row = data.row(members[j][t]);
        std::copy(row.begin(), row.end(), member_buf.begin() + t * data.d);
        weight_buf[t] = weights[members[j][t]];
      }
      const auto updated =
          update_codeword(data.d, member_buf, weight_buf, config.ridge);
      std::copy(updated.begin(), updated.end(), cb.mutable_row(j).begin());
    }

    std::vector<std::uint32_t> prev = out.assignments;
    detail::vq_assign_pass(data, cb, weights, config.threads, out.assignments,
                           losses);
    const double prev_total = total;
    total = std::accumulate(losses.begin(), losses.end(), 0.0);
    out.loss_history.push_back(total);

    std::size_t changes = 0;
    for (std::size_t i = 0; i < data.n; ++i)
      changes += out.assignments[i] != prev[i];
    if (changes == 0) break;
    if (config.relative_tolerance > 0.0 &&
        (prev_total == 0.0 ||
         prev_total - total <= config.relative_tolerance * prev_total))
      break;
  }
  return {std::move(cb), std::move(out)};
}

// One assignment pass against a fixed codebook.
inline std::vector<std::uint32_t> vq_quantize(
    const Dataset& data, const Codebook& cb,
    std::span<const AnisotropicWeights> weights, int threads = 1) {
  if (data.d != cb.d)
    throw DimensionMismatch("dataset dimension does not match codebook");
  if (weights.size() != data.n)
    throw InvalidArgument("need one AnisotropicWeights per datapoint");
  std::vector<std::uint32_t> codes(data.n, 0);
  std::vector<double> losses(data.n, 0.0);
  detail::vq_assign_pass(data, cb, weights, threads, codes, losses);
  return codes;
}

}  // namespace anisoq
