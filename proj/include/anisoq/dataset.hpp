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
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "anisoq/error.hpp"
#include "anisoq/rng.hpp"

namespace anisoq {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

// Dense in-memory database. Values are held as doubles for numerical
// headroom; the on-disk fvecs format is 32-bit floats, so everything read
// from disk is exactly representable and round-trips bit-identically.
// Rows with zero norm or non-finite entries are rejected at ingestion.
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> values;  // row-major n*d
  std::vector<double> norms;   // cached Euclidean norms, one per row
  bool normalized = false;

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * d, d};
  }
};

namespace detail {

inline double row_norm(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v * v;
  return std::sqrt(s);
}

// FNV-1a over raw bytes; used to key ground-truth caches and manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline Dataset make_dataset_unchecked(std::size_t n, std::size_t d,
                                      std::vector<double> values,
                                      bool normalized = false) {
  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.values = std::move(values);
  ds.normalized = normalized;
  ds.norms.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.norms[i] = row_norm(ds.row(i));
  return ds;
}

// Extracts subspace m (of M equal splits) as its own dataset. Subvectors may
// legitimately have zero norm, so no rejection happens here; only isotropic
// (reconstruction-loss) training may consume such rows.
inline Dataset subspace_view(const Dataset& data, std::size_t m,
                             std::size_t M) {
  const std::size_t sub_d = data.d / M;
  std::vector<double> values(data.n * sub_d);
  for (std::size_t i = 0; i < data.n; ++i) {
    const double* src = data.values.data() + i * data.d + m * sub_d;
    std::copy(src, src + sub_d, values.data() + i * sub_d);
  }
  return make_dataset_unchecked(data.n, sub_d, std::move(values));
}

}  // namespace detail

inline Dataset make_dataset(std::size_t n, std::size_t d,
                            std::vector<double> values,
                            bool normalized = false) {
  if (values.size() != n * d)
    throw InvalidArgument("dataset buffer size does not match n*d");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw MalformedFile("non-finite value at row " + std::to_string(i / d));
  }
  Dataset ds = detail::make_dataset_unchecked(n, d, std::move(values),
                                              normalized);
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.norms[i] == 0.0)
      throw ZeroNormDatapoint("row " + std::to_string(i) + " has zero norm");
  }
  return ds;
}

// fvecs: per vector, a little-endian int32 dimension followed by that many
// little-endian float32 components. The dimension must be constant across
// records. An empty file yields an empty dataset.
inline Dataset read_fvecs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedFile("cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::size_t d = 0, n = 0;
  std::vector<double> values;
  while (pos < bytes.size()) {
    if (pos + 4 > bytes.size())
      throw MalformedFile(path + ": truncated record header");
    std::int32_t di = 0;
    std::memcpy(&di, bytes.data() + pos, 4);
    pos += 4;
    if (di <= 0) throw MalformedFile(path + ": non-positive dimension");
    if (n == 0) {
      d = static_cast<std::size_t>(di);
    } else if (static_cast<std::size_t>(di) != d) {
      throw MalformedFile(path + ": inconsistent dimension at record " +
                          std::to_string(n));
    }
    if (pos + 4 * d > bytes.size())
      throw MalformedFile(path + ": truncated record " + std::to_string(n));
    for (std::size_t j = 0; j < d; ++j) {
      float f = 0.0f;
      std::memcpy(&f, bytes.data() + pos + 4 * j, 4);
      if (!std::isfinite(f))
        throw MalformedFile(path + ": non-finite value in record " +
                            std::to_string(n));
      values.push_back(static_cast<double>(f));
    }
    pos += 4 * d;
    ++n;
  }
  Dataset ds = detail::make_dataset_unchecked(n, d, std::move(values));
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.norms[i] == 0.0)
      throw ZeroNormDatapoint(path + ": row " + std::to_string(i) +
                              " has zero norm");
  }
  return ds;
}

inline void write_fvecs(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MalformedFile("cannot open " + path + " for writing");
  const std::int32_t di = static_cast<std::int32_t>(ds.d);
  std::vector<char> rec(4 + 4 * ds.d);
  for (std::size_t i = 0; i < ds.n; ++i) {
    std::memcpy(rec.data(), &di, 4);
    for (std::size_t j = 0; j < ds.d; ++j) {
      const float f = static_cast<float>(ds.values[i * ds.d + j]);
      std::memcpy(rec.data() + 4 + 4 * j, &f, 4);
    }
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw MalformedFile("short write to " + path);
}

// ivecs: per record, a little-endian int32 count followed by that many
// little-endian int32 values. Used for ground-truth neighbor lists.
inline std::vector<std::vector<std::int32_t>> read_ivecs(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedFile("cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  std::vector<std::vector<std::int32_t>> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (pos + 4 > bytes.size()) throw MalformedFile(path + ": truncated header");
    std::int32_t count = 0;
    std::memcpy(&count, bytes.data() + pos, 4);
    pos += 4;
    if (count < 0) throw MalformedFile(path + ": negative count");
    if (pos + 4 * static_cast<std::size_t>(count) > bytes.size())
      throw MalformedFile(path + ": truncated record " +
                          std::to_string(out.size()));
    std::vector<std::int32_t> rec(static_cast<std::size_t>(count));
    std::memcpy(rec.data(), bytes.data() + pos, 4 * rec.size());
    pos += 4 * rec.size();
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_ivecs(const std::vector<std::vector<std::int32_t>>& rows,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MalformedFile("cannot open " + path + " for writing");
  for (const auto& rec : rows) {
    const std::int32_t count = static_cast<std::int32_t>(rec.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    out.write(reinterpret_cast<const char*>(rec.data()),
              static_cast<std::streamsize>(4 * rec.size()));
  }
  if (!out) throw MalformedFile("short write to " + path);
}

// Scales every row to unit norm. Idempotent up to rounding.
inline Dataset unit_normalize(const Dataset& ds) {
  std::vector<double> values(ds.values.size());
  for (std::size_t i = 0; i < ds.n; ++i) {
    const double norm = ds.norms[i];
    if (norm == 0.0)
      throw ZeroNormDatapoint("row " + std::to_string(i) + " has zero norm");
    for (std::size_t j = 0; j < ds.d; ++j)
      values[i * ds.d + j] = ds.values[i * ds.d + j] / norm;
  }
  return detail::make_dataset_unchecked(ds.n, ds.d, std::move(values), true);
}

enum class SyntheticKind { uniform_sphere, gaussian_mixture };

struct SyntheticParams {
  std::size_t centers = 16;  // gaussian_mixture only
  double spread = 0.25;      // per-coordinate sigma around a center
  bool normalize = false;    // project mixture samples onto the unit sphere
};

// Deterministic synthetic data. Components are rounded to float32 before
// storage so that memory contents and the fvecs serialization agree exactly.
inline Dataset generate_synthetic(SyntheticKind kind, std::size_t n,
                                  std::size_t d, std::uint64_t seed,
                                  const SyntheticParams& params = {}) {
  if (n < 1 || d < 2) throw InvalidArgument("need n >= 1 and d >= 2");
  Rng rng(seed);
  std::vector<double> values(n * d);
  auto fill_unit = [&](double* row) {
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = rng.next_gaussian();
        norm2 += row[j] * row[j];
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < d; ++j) row[j] *= inv;
  };

  bool normalized = false;
  if (kind == SyntheticKind::uniform_sphere) {
    for (std::size_t i = 0; i < n; ++i) fill_unit(values.data() + i * d);
    normalized = true;
  } else {
    if (params.centers < 1) throw InvalidArgument("need at least one center");
    std::vector<double> centers(params.centers * d);
    for (std::size_t c = 0; c < params.centers; ++c)
      fill_unit(centers.data() + c * d);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = rng.next_below(params.centers);
      double* row = values.data() + i * d;
      double norm2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = centers[c * d + j] + params.spread * rng.next_gaussian();
        norm2 += row[j] * row[j];
      }
      if (params.normalize) {
        if (norm2 == 0.0) throw ZeroNormDatapoint("degenerate mixture sample");
        const double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t j = 0; j < d; ++j) row[j] *= inv;
      }
    }
    normalized = params.normalize;
  }
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
  return make_dataset(n, d, std::move(values), normalized);
}

struct DiagnosticsReport {
  std::vector<double> per_dimension_variance;
  double max_abs_offdiagonal_correlation = 0.0;
  double variance_ratio = 0.0;  // max/min per-dimension variance
};

// Per-dimension sample variance and extreme off-diagonal Pearson
// correlation. Embedding-style data should show a ratio near 1 and
// correlations near 0.
inline DiagnosticsReport diagnose(const Dataset& ds) {
  if (ds.n < 2) throw InsufficientData("need at least two rows");
  const std::size_t d = ds.d;
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < ds.n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += ds.values[i * d + j];
  for (double& m : mean) m /= static_cast<double>(ds.n);

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const double* row = ds.values.data() + i * d;
    for (std::size_t a = 0; a < d; ++a) {
      const double da = row[a] - mean[a];
      for (std::size_t b = a; b < d; ++b)
        cov[a * d + b] += da * (row[b] - mean[b]);
    }
  }
  const double denom = static_cast<double>(ds.n - 1);
  DiagnosticsReport report;
  report.per_dimension_variance.resize(d);
  for (std::size_t a = 0; a < d; ++a)
    report.per_dimension_variance[a] = cov[a * d + a] / denom;

  double vmax = report.per_dimension_variance[0];
  double vmin = vmax;
  for (double v : report.per_dimension_variance) {
    vmax = std::max(vmax, v);
    vmin = std::min(vmin, v);
  }
  report.variance_ratio =
      vmin > 0.0 ? vmax / vmin : std::numeric_limits<double>::infinity();

  double max_corr = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a + 1; b < d; ++b) {
      const double va = cov[a * d + a];
      const double vb = cov[b * d + b];
      if (va <= 0.0 || vb <= 0.0) continue;
      max_corr = std::max(max_corr,
                          std::abs(cov[a * d + b]) / std::sqrt(va * vb));
    }
  }
  report.max_abs_offdiagonal_correlation = max_corr;
  return report;
}

}  // namespace anisoq
