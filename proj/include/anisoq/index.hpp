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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "anisoq/dataset.hpp"
#include "anisoq/error.hpp"
#include "anisoq/parallel.hpp"
#include "anisoq/pq.hpp"

namespace anisoq {

// Partial dot products of the query subvectors against every sub-codeword.
// Kept in doubles (wider than codebook storage) so that summing M entries
// reproduces the reconstructed dot product to tight relative tolerance.
struct LookupTable {
  std::size_t M = 0;
  std::size_t k = 0;
  std::vector<double> partials;  // (m*k + j)

  double at(std::size_t m, std::size_t j) const { return partials[m * k + j]; }
};

struct Hit {
  std::uint32_t index = 0;
  double score = 0.0;
};

// Hits ordered by score descending, index ascending on ties.
struct SearchResult {
  std::vector<Hit> hits;
};

inline LookupTable build_lut(std::span<const double> q,
                             const ProductCodebook& cb) {
  if (q.size() != cb.dim())
    throw DimensionMismatch("query dimension does not match codebook");
  LookupTable lut;
  lut.M = cb.M;
  lut.k = cb.k;
  lut.partials.resize(cb.M * cb.k);
  for (std::size_t m = 0; m < cb.M; ++m) {
    const auto qs = q.subspan(m * cb.sub_dimension, cb.sub_dimension);
    for (std::size_t j = 0; j < cb.k; ++j)
      lut.partials[m * cb.k + j] = detail::dot(qs, cb.codeword(m, j));
  }
  return lut;
}

inline double adc_score(std::span<const std::uint32_t> codes_row,
                        const LookupTable& lut) {
  if (codes_row.size() != lut.M)
    throw DimensionMismatch("need one code per subspace");
  double score = 0.0;
  for (std::size_t m = 0; m < lut.M; ++m) {
    if (codes_row[m] >= lut.k) throw CodeOutOfRange("code out of range");
    score += lut.at(m, codes_row[m]);
  }
  return score;
}

namespace detail {

// Bounded top-N selection; `score(i)` is evaluated once per candidate.
// Output order is fully specified: score descending, index ascending.
template <class ScoreFn>
SearchResult select_top(std::size_t n, std::size_t topn, ScoreFn&& score) {
  const auto worse = [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.index > b.index;
  };
  std::vector<Hit> heap;  // min-heap on `worse`: heap.front() is the worst
  heap.reserve(topn + 1);
  const auto cmp = [&](const Hit& a, const Hit& b) { return worse(b, a); };
  for (std::size_t i = 0; i < n; ++i) {
    Hit h{static_cast<std::uint32_t>(i), score(i)};
    if (heap.size() < topn) {
      heap.push_back(h);
      std::push_heap(heap.begin(), heap.end(), cmp);
    } else if (worse(heap.front(), h)) {
      std::pop_heap(heap.begin(), heap.end(), cmp);
      heap.back() = h;
      std::push_heap(heap.begin(), heap.end(), cmp);
    }
  }
  std::sort(heap.begin(), heap.end(), [&](const Hit& a, const Hit& b) {
    return worse(b, a);
  });
  return SearchResult{std::move(heap)};
}

}  // namespace detail

// Top-N by lookup-table score: one table build in O(k d), then M lookups
// per datapoint.
inline SearchResult adc_search(std::span<const double> q,
                               const CodeMatrix& codes,
                               const ProductCodebook& cb, std::size_t topn) {
  if (codes.n == 0) throw EmptyIndex("no quantized datapoints");
  if (topn < 1) throw InvalidArgument("topn must be >= 1");
  if (codes.M != cb.M || codes.k > cb.k)
    throw DimensionMismatch("code matrix does not match codebook");
  const LookupTable lut = build_lut(q, cb);
  return detail::select_top(codes.n, std::min(topn, codes.n),
                            [&](std::size_t i) {
                              double s = 0.0;
                              const auto row = codes.row(i);
                              for (std::size_t m = 0; m < lut.M; ++m)
                                s += lut.at(m, row[m]);
                              return s;
                            });
}

// Exhaustive exact top-N by true inner product; the ground-truth oracle.
inline SearchResult exact_search(std::span<const double> q,
                                 const Dataset& data, std::size_t topn) {
  if (data.n == 0) throw EmptyDataset("empty dataset");
  if (topn < 1) throw InvalidArgument("topn must be >= 1");
  if (q.size() != data.d)
    throw DimensionMismatch("query dimension does not match dataset");
  return detail::select_top(data.n, std::min(topn, data.n),
                            [&](std::size_t i) {
                              return detail::dot(q, data.row(i));
                            });
}

// Exact top-G indices for every query, parallelized over queries.
inline std::vector<std::vector<std::int32_t>> exact_ground_truth(
    const Dataset& queries, const Dataset& data, std::size_t depth,
    int threads = 1) {
  std::vector<std::vector<std::int32_t>> gt(queries.n);
  parallel_for(queries.n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const SearchResult res = exact_search(queries.row(i), data, depth);
      gt[i].reserve(res.hits.size());
      for (const Hit& h : res.hits) gt[i].push_back(static_cast<std::int32_t>(h.index));
    }
  }, 4);
  return gt;
}

struct LatencySummary {
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p99_us = 0.0;
};

struct EvalReport {
  std::size_t num_queries = 0;
  std::size_t num_datapoints = 0;
  std::map<std::size_t, double> recall_1_at_n;
  std::size_t kk = 10;
  double recall_k_at_k = 0.0;
  double relative_error_mean = 0.0;
  double relative_error_p50 = 0.0;
  double relative_error_p90 = 0.0;
  double relative_error_p99 = 0.0;
  double relative_error_max = 0.0;
  LatencySummary latency;

  void write_text(std::ostream& out) const {
    out << "num_queries " << num_queries << "\n";
    out << "num_datapoints " << num_datapoints << "\n";
    for (const auto& [n, r] : recall_1_at_n)
      out << "recall_1@" << n << " " << r << "\n";
    out << "recall_" << kk << "@" << kk << " " << recall_k_at_k << "\n";
    out << "relative_error_top1_mean " << relative_error_mean << "\n";
    out << "relative_error_top1_p50 " << relative_error_p50 << "\n";
    out << "relative_error_top1_p90 " << relative_error_p90 << "\n";
    out << "relative_error_top1_p99 " << relative_error_p99 << "\n";
    out << "relative_error_top1_max " << relative_error_max << "\n";
    out << "latency_mean_us " << latency.mean_us << "\n";
    out << "latency_p50_us " << latency.p50_us << "\n";
    out << "latency_p99_us " << latency.p99_us << "\n";
  }
};

struct EvalOptions {
  std::vector<std::size_t> recall_ns{1, 10, 100};
  std::size_t kk = 10;  // overlap depth for recall k@k
  int threads = 1;
  // Optional precomputed exact neighbor lists (one per query, at least
  // max(recall_ns, kk) entries each).
  const std::vector<std::vector<std::int32_t>>* ground_truth = nullptr;
};

// Retrieval and estimation quality of a quantized index against exact
// search: recall 1@N over the requested N, top-k overlap, and the relative
// error of the true top-1 inner product |(<q,x> - <q,x~>)/<q,x>|
// (nearest-rank quantiles over queries).
inline EvalReport evaluate(const Dataset& queries, const Dataset& data,
                           const CodeMatrix& codes, const ProductCodebook& cb,
                           const EvalOptions& options = {}) {
  if (queries.n == 0) throw EmptyDataset("no queries");
  if (data.n == 0) throw EmptyDataset("empty dataset");
  if (codes.n != data.n)
    throw DimensionMismatch("code matrix does not match dataset");
  if (queries.d != data.d || data.d != cb.dim())
    throw DimensionMismatch("query/dataset/codebook dimensions differ");
  if (options.recall_ns.empty()) throw InvalidArgument("need at least one N");

  std::size_t depth = options.kk;
  for (std::size_t n : options.recall_ns) depth = std::max(depth, n);
  depth = std::min(depth, data.n);

  std::vector<std::vector<std::int32_t>> computed_gt;
  const std::vector<std::vector<std::int32_t>>* gt = options.ground_truth;
  if (gt != nullptr) {
    if (gt->size() != queries.n)
      throw GroundTruthMismatch("ground truth has " +
                                std::to_string(gt->size()) + " rows, need " +
                                std::to_string(queries.n));
    for (const auto& row : *gt)
      if (row.size() < depth)
        throw GroundTruthMismatch("ground truth rows need at least " +
                                  std::to_string(depth) + " entries");
  } else {
    computed_gt = exact_ground_truth(queries, data, depth, options.threads);
    gt = &computed_gt;
  }

  const std::size_t kk = std::min(options.kk, data.n);
  std::vector<double> rel_errors(queries.n, 0.0);
  std::vector<double> latencies(queries.n, 0.0);
  std::vector<double> overlap(queries.n, 0.0);
  std::vector<std::vector<std::uint8_t>> found(
      options.recall_ns.size(), std::vector<std::uint8_t>(queries.n, 0));

  parallel_for(queries.n, options.threads, [&](std::size_t begin,
                                               std::size_t end) {
    for (std::size_t qi = begin; qi < end; ++qi) {
      const auto q = queries.row(qi);
      const auto t0 = std::chrono::steady_clock::now();
      const SearchResult res = adc_search(q, codes, cb, depth);
      const auto t1 = std::chrono::steady_clock::now();
      latencies[qi] =
          std::chrono::duration<double, std::micro>(t1 - t0).count();

      const auto& truth = (*gt)[qi];
      const std::int32_t top1 = truth[0];
      for (std::size_t a = 0; a < options.recall_ns.size(); ++a) {
        const std::size_t n = std::min(options.recall_ns[a], res.hits.size());
        for (std::size_t r = 0; r < n; ++r) {
          if (static_cast<std::int32_t>(res.hits[r].index) == top1) {
            found[a][qi] = 1;
            break;
          }
        }
      }

      std::vector<std::int32_t> retrieved(kk);
      for (std::size_t r = 0; r < kk; ++r)
        retrieved[r] = static_cast<std::int32_t>(res.hits[r].index);
      std::vector<std::int32_t> expected(truth.begin(), truth.begin() + kk);
      std::sort(retrieved.begin(), retrieved.end());
      std::sort(expected.begin(), expected.end());
      std::vector<std::int32_t> inter;
      std::set_intersection(retrieved.begin(), retrieved.end(),
                            expected.begin(), expected.end(),
                            std::back_inserter(inter));
      overlap[qi] =
          static_cast<double>(inter.size()) / static_cast<double>(kk);

      const double exact =
          detail::dot(q, data.row(static_cast<std::size_t>(top1)));
      const double approx = detail::dot(
          q, reconstruct(codes.row(static_cast<std::size_t>(top1)), cb));
      rel_errors[qi] =
          exact != 0.0 ? std::abs((exact - approx) / exact)
                       : std::abs(exact - approx);
    }
  }, 16);

  EvalReport report;
  report.num_queries = queries.n;
  report.num_datapoints = data.n;
  report.kk = kk;
  const double nq = static_cast<double>(queries.n);
  for (std::size_t a = 0; a < options.recall_ns.size(); ++a) {
    double hits = 0.0;
    for (std::uint8_t f : found[a]) hits += f;
    report.recall_1_at_n[options.recall_ns[a]] = hits / nq;
  }
  report.recall_k_at_k =
      std::accumulate(overlap.begin(), overlap.end(), 0.0) / nq;

  std::vector<double> sorted = rel_errors;
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double p) {
    const std::size_t idx = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(sorted.size())));
    return sorted[std::min(sorted.size() - 1, idx == 0 ? 0 : idx - 1)];
  };
  report.relative_error_mean =
      std::accumulate(sorted.begin(), sorted.end(), 0.0) / nq;
  report.relative_error_p50 = quantile(0.50);
  report.relative_error_p90 = quantile(0.90);
  report.relative_error_p99 = quantile(0.99);
  report.relative_error_max = sorted.back();

  std::vector<double> lat = latencies;
  std::sort(lat.begin(), lat.end());
  report.latency.mean_us =
      std::accumulate(lat.begin(), lat.end(), 0.0) / nq;
  report.latency.p50_us = lat[std::min(lat.size() - 1,
                                       static_cast<std::size_t>(0.50 * nq))];
  report.latency.p99_us = lat[std::min(lat.size() - 1,
                                       static_cast<std::size_t>(0.99 * nq))];
  return report;
}

}  // namespace anisoq
