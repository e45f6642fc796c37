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

// Command-line surface: data generation and conversion, codebook training,
// encoding, search, eta tables, dataset diagnostics, and evaluation
// reports. Every artifact-producing command writes a manifest (resolved
// options plus input digests) so runs are reproducible byte for byte.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "anisoq/anisoq.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw anisoq::MalformedFile("cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    anisoq::detail::fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

void write_json(const json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw anisoq::MalformedFile("cannot open " + path + " for writing");
  out << doc.dump(2) << "\n";
}

// Values a config document may inject under an option's long name when the
// flag was not passed explicitly; flags always win.
struct JsonBind {
  CLI::Option* opt;
  std::string key;
  std::function<void(const json&)> set;
};

template <class T>
void bind_option(std::vector<JsonBind>& binds, CLI::Option* opt,
                 const std::string& key, T& target) {
  binds.push_back(
      {opt, key, [&target](const json& v) { target = v.get<T>(); }});
}

void apply_config(const std::string& config_path, const std::string& section,
                  std::vector<JsonBind>& binds) {
  if (config_path.empty()) return;
  std::ifstream in(config_path);
  if (!in)
    throw anisoq::MalformedFile("cannot open config " + config_path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw anisoq::MalformedFile("config " + config_path + ": " + e.what());
  }
  const json* sub =
      root.contains(section) && root[section].is_object() ? &root[section]
                                                          : nullptr;
  for (auto& b : binds) {
    if (b.opt->count() > 0) continue;
    if (sub != nullptr && sub->contains(b.key)) {
      b.set((*sub)[b.key]);
    } else if (root.contains(b.key) && !root[b.key].is_object()) {
      b.set(root[b.key]);
    }
  }
}

struct LossSpec {
  std::string loss = "score_aware";  // or "reconstruction"
  double threshold = 0.2;
  double explicit_eta = -1.0;  // >= 0 overrides the threshold-derived proxy
};

// Per-point coefficients: h_perp = 1 and h_par = eta, with eta either given
// explicitly or derived per datapoint norm from the large-d indicator proxy.
std::vector<anisoq::AnisotropicWeights> resolve_weights(
    const LossSpec& spec, const anisoq::Dataset& data, json* manifest) {
  using anisoq::AnisotropicWeights;
  std::vector<AnisotropicWeights> w;
  w.reserve(data.n);
  if (spec.loss == "reconstruction") {
    w.assign(data.n, AnisotropicWeights::isotropic());
    if (manifest) (*manifest)["loss"] = "reconstruction";
    return w;
  }
  if (spec.loss != "score_aware")
    throw anisoq::InvalidArgument("loss must be reconstruction or score_aware");
  if (manifest) (*manifest)["loss"] = "score_aware";
  if (spec.explicit_eta >= 0.0) {
    w.assign(data.n, AnisotropicWeights::from_eta(spec.explicit_eta));
    if (manifest) (*manifest)["eta"] = spec.explicit_eta;
    return w;
  }
  double eta_min = 0.0, eta_max = 0.0, eta_sum = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const double eta = anisoq::eta_limit(spec.threshold, data.norms[i],
                                         static_cast<int>(data.d));
    w.push_back(AnisotropicWeights::from_eta(eta));
    eta_min = i == 0 ? eta : std::min(eta_min, eta);
    eta_max = i == 0 ? eta : std::max(eta_max, eta);
    eta_sum += eta;
  }
  if (manifest) {
    (*manifest)["threshold"] = spec.threshold;
    (*manifest)["derived_eta_min"] = eta_min;
    (*manifest)["derived_eta_mean"] = eta_sum / static_cast<double>(data.n);
    (*manifest)["derived_eta_max"] = eta_max;
  }
  return w;
}

json policy_defaults() {
  return json{
      {"tie_break", "lowest_index"},
      {"empty_partition_policy", "reseed_highest_loss"},
      {"ridge_vq_default", "1e-10 * mean h_perp"},
      {"ridge_pq_default", "1e-6 * trace / unknowns"},
      {"assignment_sweeps", "one fixed-order pass per iteration"},
      {"eta_derivation", "large-d limit proxy of the indicator weight"},
      {"quadrature", {{"abs_tol", 1e-10}, {"rel_tol", 1e-12}, {"max_depth", 40}}},
  };
}

anisoq::Dataset load_dataset(const std::string& path, bool normalize) {
  anisoq::Dataset ds = anisoq::read_fvecs(path);
  if (normalize) ds = anisoq::unit_normalize(ds);
  return ds;
}

std::vector<std::size_t> parse_ns(const std::string& text) {
  std::vector<std::size_t> ns;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    ns.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  if (ns.empty()) throw anisoq::InvalidArgument("empty N list");
  return ns;
}

// --- subcommand state -------------------------------------------------------

struct GenArgs {
  std::string out, kind = "uniform_sphere", config;
  std::size_t n = 1000, d = 16, centers = 16;
  std::uint64_t seed = 0;
  double spread = 0.25;
  bool normalize = false;
};

struct ConvertArgs {
  std::string input, output, from = "auto", config;
  bool normalize = false;
};

struct DiagnoseArgs {
  std::string data, json_out, config;
  bool normalize = false;
};

struct TrainArgs {
  std::string data, out, quantizer = "pq", config;
  std::size_t k = 16, M = 8;
  LossSpec loss;
  int iters = 100, threads = 1;
  double tol = 1e-6, ridge = -1.0;
  std::uint64_t seed = 0;
  bool normalize = false, warm_start = true, sweep_fixed = false;
};

struct EncodeArgs {
  std::string data, codebook, out, config;
  LossSpec loss;
  int passes = 1, threads = 1;
  bool normalize = false;
};

struct SearchArgs {
  std::string codebook, codes, queries, config;
  std::size_t topn = 10;
  long query_index = -1;
  bool normalize = false;
};

struct EvalArgs {
  std::string data, queries, codebook, codes, out, ns = "1,10,100";
  std::string ground_truth, config;
  std::size_t kk = 10;
  int threads = 1;
  bool normalize = false;
};

struct EtaArgs {
  double threshold = 0.2, norm = 1.0;
  int dmin = 3, dmax = 512, stride = 1;
  std::string config;
};

int run_gen(const GenArgs& a) {
  anisoq::SyntheticParams params;
  params.centers = a.centers;
  params.spread = a.spread;
  params.normalize = a.normalize;
  const anisoq::SyntheticKind kind =
      a.kind == "uniform_sphere" ? anisoq::SyntheticKind::uniform_sphere
      : a.kind == "gaussian_mixture"
          ? anisoq::SyntheticKind::gaussian_mixture
          : throw anisoq::InvalidArgument("unknown kind " + a.kind);
  const anisoq::Dataset ds =
      anisoq::generate_synthetic(kind, a.n, a.d, a.seed, params);
  anisoq::write_fvecs(ds, a.out);

  json manifest{{"command", "gen"},
                {"options",
                 {{"out", a.out},
                  {"kind", a.kind},
                  {"n", a.n},
                  {"d", a.d},
                  {"seed", a.seed},
                  {"centers", a.centers},
                  {"spread", a.spread},
                  {"normalize", a.normalize}}},
                {"outputs", {a.out}},
                {"output_digest", file_digest(a.out)}};
  write_json(manifest, a.out + ".meta.json");
  std::cout << "wrote " << ds.n << " x " << ds.d << " to " << a.out << "\n";
  return 0;
}

anisoq::Dataset read_glove_txt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw anisoq::MalformedFile("cannot open " + path);
  std::vector<double> values;
  std::size_t n = 0, d = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string token;
    ss >> token;  // vocabulary entry
    std::vector<double> row;
    double v = 0.0;
    while (ss >> v) row.push_back(v);
    if (row.empty())
      throw anisoq::MalformedFile(path + ": no values in line " +
                                  std::to_string(n + 1));
    if (n == 0) {
      d = row.size();
    } else if (row.size() != d) {
      throw anisoq::MalformedFile(path + ": inconsistent dimension at line " +
                                  std::to_string(n + 1));
    }
    for (double x : row)
      values.push_back(static_cast<double>(static_cast<float>(x)));
    ++n;
  }
  return anisoq::make_dataset(n, d, std::move(values));
}

int run_convert(const ConvertArgs& a) {
  std::string from = a.from;
  if (from == "auto")
    from = a.input.size() > 4 && a.input.substr(a.input.size() - 4) == ".txt"
               ? "glove-txt"
               : "fvecs";
  anisoq::Dataset ds;
  if (from == "glove-txt") {
    ds = read_glove_txt(a.input);
  } else if (from == "fvecs") {
    ds = anisoq::read_fvecs(a.input);
  } else {
    throw anisoq::InvalidArgument("unknown input format " + from);
  }
  if (a.normalize) ds = anisoq::unit_normalize(ds);
  anisoq::write_fvecs(ds, a.output);

  json manifest{{"command", "convert"},
                {"options",
                 {{"input", a.input},
                  {"output", a.output},
                  {"from", from},
                  {"normalize", a.normalize}}},
                {"inputs", {{"input", {{"path", a.input}, {"fnv1a64", file_digest(a.input)}}}}},
                {"outputs", {a.output}}};
  write_json(manifest, a.output + ".meta.json");
  std::cout << "converted " << ds.n << " x " << ds.d << " to " << a.output
            << "\n";
  return 0;
}

int run_diagnose(const DiagnoseArgs& a) {
  const anisoq::Dataset ds = load_dataset(a.data, a.normalize);
  const auto report = anisoq::diagnose(ds);
  std::cout << "n " << ds.n << "\n";
  std::cout << "d " << ds.d << "\n";
  std::cout << "variance_ratio " << report.variance_ratio << "\n";
  std::cout << "max_abs_offdiagonal_correlation "
            << report.max_abs_offdiagonal_correlation << "\n";
  if (!a.json_out.empty()) {
    json doc{{"n", ds.n},
             {"d", ds.d},
             {"variance_ratio", report.variance_ratio},
             {"max_abs_offdiagonal_correlation",
              report.max_abs_offdiagonal_correlation},
             {"per_dimension_variance", report.per_dimension_variance}};
    write_json(doc, a.json_out);
  }
  return 0;
}

void write_train_log(const std::string& path,
                     const std::vector<double>& history, const json& meta) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw anisoq::MalformedFile("cannot open " + path + " for writing");
  for (const auto& [key, value] : meta.items())
    out << "# " << key << "=" << value.dump() << "\n";
  out << "iteration,total_loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, history[i]);
    out << buf;
  }
}

int run_train(const TrainArgs& a) {
  if (a.quantizer != "vq" && a.quantizer != "pq")
    throw anisoq::InvalidArgument("quantizer must be vq or pq");
  const anisoq::Dataset data = load_dataset(a.data, a.normalize);
  fs::create_directories(a.out);

  json loss_meta;
  const auto weights = resolve_weights(a.loss, data, &loss_meta);

  anisoq::TrainConfig cfg;
  cfg.max_iterations = a.iters;
  cfg.relative_tolerance = a.tol;
  cfg.seed = a.seed;
  cfg.ridge = a.ridge;
  cfg.threads = a.threads;
  cfg.sweep_to_fixed_point = a.sweep_fixed;

  anisoq::ProductCodebook cb;
  anisoq::CodeMatrix codes;
  std::vector<double> history;
  if (a.quantizer == "vq") {
    auto [vq_cb, assignment] = anisoq::train_avq(data, a.k, weights, cfg);
    cb = anisoq::to_product(vq_cb);
    codes.n = data.n;
    codes.M = 1;
    codes.k = a.k;
    codes.codes = assignment.assignments;
    history = assignment.loss_history;
  } else {
    std::tie(cb, codes) =
        anisoq::train_apq(data, a.M, a.k, weights, cfg, a.warm_start, &history);
  }

  const std::string cb_path = (fs::path(a.out) / "codebook.bin").string();
  const std::string codes_path = (fs::path(a.out) / "codes.bin").string();
  const std::string log_path = (fs::path(a.out) / "train_log.csv").string();
  anisoq::save_codebook(cb, cb_path);
  anisoq::save_codes(codes, codes_path);
  write_train_log(log_path, history, loss_meta);

  json manifest{
      {"command", "train"},
      {"options",
       {{"data", a.data},
        {"quantizer", a.quantizer},
        {"k", a.k},
        {"M", a.quantizer == "pq" ? a.M : 1},
        {"iters", a.iters},
        {"tol", a.tol},
        {"seed", a.seed},
        {"ridge", a.ridge},
        {"threads", a.threads},
        {"normalize", a.normalize},
        {"warm_start", a.warm_start},
        {"sweep_to_fixed_point", a.sweep_fixed}}},
      {"loss", loss_meta},
      {"inputs", {{"data", {{"path", a.data}, {"fnv1a64", file_digest(a.data)}}}}},
      {"outputs", {"codebook.bin", "codes.bin", "train_log.csv"}},
      {"policies", policy_defaults()},
      {"final_loss", history.empty() ? 0.0 : history.back()},
      {"iterations_run", history.empty() ? 0 : history.size() - 1}};
  write_json(manifest, (fs::path(a.out) / "manifest.json").string());
  std::cout << "trained " << a.quantizer << " codebook: k=" << a.k
            << (a.quantizer == "pq" ? " M=" + std::to_string(a.M) : "")
            << " final_loss=" << (history.empty() ? 0.0 : history.back())
            << "\n";
  return 0;
}

int run_encode(const EncodeArgs& a) {
  const anisoq::Dataset data = load_dataset(a.data, a.normalize);
  const auto cb = anisoq::load_codebook(a.codebook);
  json loss_meta;
  const auto weights = resolve_weights(a.loss, data, &loss_meta);
  const auto codes =
      anisoq::pq_quantize(data, cb, weights, a.passes, a.threads);
  anisoq::save_codes(codes, a.out);

  json manifest{
      {"command", "encode"},
      {"options",
       {{"data", a.data},
        {"codebook", a.codebook},
        {"out", a.out},
        {"passes", a.passes},
        {"threads", a.threads},
        {"normalize", a.normalize}}},
      {"loss", loss_meta},
      {"inputs",
       {{"data", {{"path", a.data}, {"fnv1a64", file_digest(a.data)}}},
        {"codebook",
         {{"path", a.codebook}, {"fnv1a64", file_digest(a.codebook)}}}}},
      {"outputs", {a.out}}};
  write_json(manifest, a.out + ".meta.json");
  std::cout << "encoded " << codes.n << " datapoints\n";
  return 0;
}

int run_search(const SearchArgs& a) {
  const auto cb = anisoq::load_codebook(a.codebook);
  const auto codes = anisoq::load_codes(a.codes);
  const anisoq::Dataset queries = load_dataset(a.queries, a.normalize);
  if (queries.n == 0) throw anisoq::EmptyDataset("no queries in " + a.queries);
  const std::size_t begin =
      a.query_index >= 0 ? static_cast<std::size_t>(a.query_index) : 0;
  const std::size_t end =
      a.query_index >= 0 ? begin + 1 : queries.n;
  if (begin >= queries.n)
    throw anisoq::InvalidArgument("query index out of range");
  std::cout << "# query rank index score\n";
  char buf[96];
  for (std::size_t qi = begin; qi < end; ++qi) {
    const auto res = anisoq::adc_search(queries.row(qi), codes, cb, a.topn);
    for (std::size_t r = 0; r < res.hits.size(); ++r) {
      std::snprintf(buf, sizeof(buf), "%zu %zu %u %.9g\n", qi, r,
                    res.hits[r].index, res.hits[r].score);
      std::cout << buf;
    }
  }
  return 0;
}

int run_eval(const EvalArgs& a) {
  const anisoq::Dataset data = load_dataset(a.data, a.normalize);
  const anisoq::Dataset queries = load_dataset(a.queries, a.normalize);
  if (queries.n == 0) throw anisoq::EmptyDataset("no queries in " + a.queries);
  const auto cb = anisoq::load_codebook(a.codebook);
  const auto codes = anisoq::load_codes(a.codes);
  fs::create_directories(a.out);

  anisoq::EvalOptions opt;
  opt.recall_ns = parse_ns(a.ns);
  opt.kk = a.kk;
  opt.threads = a.threads;

  std::size_t depth = opt.kk;
  for (auto n : opt.recall_ns) depth = std::max(depth, n);
  depth = std::min(depth, data.n);

  const std::string data_digest = file_digest(a.data);
  const std::string query_digest = file_digest(a.queries);
  std::string gt_path = a.ground_truth;
  std::string gt_source;
  std::vector<std::vector<std::int32_t>> gt;
  if (gt_path.empty()) {
    gt_path = (fs::path(a.out) /
               ("gt-" + data_digest.substr(0, 12) + "-" +
                query_digest.substr(0, 12) + "-g" + std::to_string(depth) +
                ".ivecs"))
                  .string();
    if (fs::exists(gt_path)) {
      gt = anisoq::read_ivecs(gt_path);
      gt_source = "cache";
      if (gt.size() != queries.n ||
          (depth > 0 && (gt.empty() || gt[0].size() < depth))) {
        gt.clear();  // stale cache, recompute below
      }
    }
    if (gt.empty()) {
      gt = anisoq::exact_ground_truth(queries, data, depth, a.threads);
      anisoq::write_ivecs(gt, gt_path);
      gt_source = "computed";
    }
  } else if (fs::exists(gt_path)) {
    gt = anisoq::read_ivecs(gt_path);  // user-supplied, validated by evaluate
    gt_source = "supplied";
  } else {
    gt = anisoq::exact_ground_truth(queries, data, depth, a.threads);
    anisoq::write_ivecs(gt, gt_path);
    gt_source = "computed";
  }
  opt.ground_truth = &gt;

  const auto report = anisoq::evaluate(queries, data, codes, cb, opt);
  const std::string txt_path = (fs::path(a.out) / "eval_report.txt").string();
  {
    std::ofstream out(txt_path, std::ios::trunc);
    report.write_text(out);
  }
  report.write_text(std::cout);

  json doc{{"num_queries", report.num_queries},
           {"num_datapoints", report.num_datapoints},
           {"recall_kk", report.recall_k_at_k},
           {"kk", report.kk},
           {"relative_error_top1",
            {{"mean", report.relative_error_mean},
             {"p50", report.relative_error_p50},
             {"p90", report.relative_error_p90},
             {"p99", report.relative_error_p99},
             {"max", report.relative_error_max}}},
           {"latency_us",
            {{"mean", report.latency.mean_us},
             {"p50", report.latency.p50_us},
             {"p99", report.latency.p99_us}}}};
  for (const auto& [n, r] : report.recall_1_at_n)
    doc["recall_1_at_n"][std::to_string(n)] = r;
  const std::string json_path = (fs::path(a.out) / "eval_report.json").string();
  write_json(doc, json_path);

  json manifest{
      {"command", "eval"},
      {"options",
       {{"data", a.data},
        {"queries", a.queries},
        {"codebook", a.codebook},
        {"codes", a.codes},
        {"Ns", a.ns},
        {"kk", a.kk},
        {"threads", a.threads},
        {"normalize", a.normalize}}},
      {"inputs",
       {{"data", {{"path", a.data}, {"fnv1a64", data_digest}}},
        {"queries", {{"path", a.queries}, {"fnv1a64", query_digest}}},
        {"codebook",
         {{"path", a.codebook}, {"fnv1a64", file_digest(a.codebook)}}},
        {"codes", {{"path", a.codes}, {"fnv1a64", file_digest(a.codes)}}}}},
      {"ground_truth", {{"path", gt_path}, {"source", gt_source}}},
      {"outputs", {"eval_report.txt", "eval_report.json"}}};
  write_json(manifest, (fs::path(a.out) / "manifest.json").string());
  return 0;
}

int run_eta(const EtaArgs& a) {
  if (a.dmin < 3) throw anisoq::InvalidArgument("dmin must be >= 3");
  if (a.dmax < a.dmin) throw anisoq::InvalidArgument("dmax must be >= dmin");
  if (a.stride < 1) throw anisoq::InvalidArgument("stride must be >= 1");
  std::printf("# d eta_exact eta_exact_over_dm1 eta_limit eta_limit_over_dm1\n");
  for (int d = a.dmin; d <= a.dmax; d += a.stride) {
    const double exact = anisoq::eta_exact(a.threshold, a.norm, d);
    const double limit = anisoq::eta_limit(a.threshold, a.norm, d);
    std::printf("%d %.10g %.10g %.10g %.10g\n", d, exact, exact / (d - 1),
                limit, limit / (d - 1));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anisotropic (score-aware) quantization toolkit for maximum "
               "inner product search"};
  app.require_subcommand(1);

  GenArgs gen;
  ConvertArgs convert;
  DiagnoseArgs diagnose;
  TrainArgs train;
  EncodeArgs encode;
  SearchArgs search;
  EvalArgs eval;
  EtaArgs eta;

  std::vector<JsonBind> gen_binds, convert_binds, diagnose_binds, train_binds,
      encode_binds, search_binds, eval_binds, eta_binds;

  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset");
  bind_option(gen_binds, gen_cmd->add_option("--out", gen.out)->required(),
              "out", gen.out);
  bind_option(gen_binds,
              gen_cmd->add_option("--kind", gen.kind)
                  ->check(CLI::IsMember({"uniform_sphere", "gaussian_mixture"})),
              "kind", gen.kind);
  bind_option(gen_binds, gen_cmd->add_option("--n", gen.n), "n", gen.n);
  bind_option(gen_binds, gen_cmd->add_option("--d", gen.d), "d", gen.d);
  bind_option(gen_binds, gen_cmd->add_option("--seed", gen.seed), "seed",
              gen.seed);
  bind_option(gen_binds, gen_cmd->add_option("--centers", gen.centers),
              "centers", gen.centers);
  bind_option(gen_binds, gen_cmd->add_option("--spread", gen.spread), "spread",
              gen.spread);
  bind_option(gen_binds, gen_cmd->add_flag("--normalize", gen.normalize),
              "normalize", gen.normalize);
  gen_cmd->add_option("--config", gen.config, "JSON config document");

  auto* convert_cmd =
      app.add_subcommand("convert", "convert embeddings to fvecs");
  bind_option(convert_binds,
              convert_cmd->add_option("--input", convert.input)->required(),
              "input", convert.input);
  bind_option(convert_binds,
              convert_cmd->add_option("--output", convert.output)->required(),
              "output", convert.output);
  bind_option(convert_binds,
              convert_cmd->add_option("--from", convert.from)
                  ->check(CLI::IsMember({"auto", "glove-txt", "fvecs"})),
              "from", convert.from);
  bind_option(convert_binds,
              convert_cmd->add_flag("--normalize", convert.normalize),
              "normalize", convert.normalize);
  convert_cmd->add_option("--config", convert.config, "JSON config document");

  auto* diagnose_cmd =
      app.add_subcommand("diagnose", "per-dimension variance and correlation");
  bind_option(diagnose_binds,
              diagnose_cmd->add_option("--data", diagnose.data)->required(),
              "data", diagnose.data);
  bind_option(diagnose_binds,
              diagnose_cmd->add_option("--json", diagnose.json_out), "json",
              diagnose.json_out);
  bind_option(diagnose_binds,
              diagnose_cmd->add_flag("--normalize", diagnose.normalize),
              "normalize", diagnose.normalize);
  diagnose_cmd->add_option("--config", diagnose.config, "JSON config document");

  auto* train_cmd = app.add_subcommand("train", "train a codebook and encode");
  bind_option(train_binds,
              train_cmd->add_option("--data", train.data)->required(), "data",
              train.data);
  bind_option(train_binds, train_cmd->add_option("--out", train.out)->required(),
              "out", train.out);
  bind_option(train_binds,
              train_cmd->add_option("--quantizer", train.quantizer)
                  ->check(CLI::IsMember({"vq", "pq"})),
              "quantizer", train.quantizer);
  bind_option(train_binds, train_cmd->add_option("--k", train.k), "k", train.k);
  bind_option(train_binds, train_cmd->add_option("--M", train.M), "M", train.M);
  bind_option(train_binds,
              train_cmd->add_option("--loss", train.loss.loss)
                  ->check(CLI::IsMember({"reconstruction", "score_aware"})),
              "loss", train.loss.loss);
  bind_option(train_binds,
              train_cmd->add_option("--threshold", train.loss.threshold),
              "threshold", train.loss.threshold);
  bind_option(train_binds, train_cmd->add_option("--eta", train.loss.explicit_eta),
              "eta", train.loss.explicit_eta);
  bind_option(train_binds, train_cmd->add_option("--iters", train.iters),
              "iters", train.iters);
  bind_option(train_binds, train_cmd->add_option("--tol", train.tol), "tol",
              train.tol);
  bind_option(train_binds, train_cmd->add_option("--seed", train.seed), "seed",
              train.seed);
  bind_option(train_binds, train_cmd->add_option("--ridge", train.ridge),
              "ridge", train.ridge);
  bind_option(train_binds, train_cmd->add_option("--threads", train.threads),
              "threads", train.threads);
  bind_option(train_binds, train_cmd->add_flag("--normalize", train.normalize),
              "normalize", train.normalize);
  bind_option(train_binds,
              train_cmd->add_flag("--warm-start,!--no-warm-start",
                                  train.warm_start),
              "warm_start", train.warm_start);
  bind_option(train_binds,
              train_cmd->add_flag("--sweep-to-fixed-point", train.sweep_fixed),
              "sweep_to_fixed_point", train.sweep_fixed);
  train_cmd->add_option("--config", train.config, "JSON config document");

  auto* encode_cmd =
      app.add_subcommand("encode", "encode a dataset against a codebook");
  bind_option(encode_binds,
              encode_cmd->add_option("--data", encode.data)->required(),
              "data", encode.data);
  bind_option(encode_binds,
              encode_cmd->add_option("--codebook", encode.codebook)->required(),
              "codebook", encode.codebook);
  bind_option(encode_binds,
              encode_cmd->add_option("--out", encode.out)->required(), "out",
              encode.out);
  bind_option(encode_binds,
              encode_cmd->add_option("--loss", encode.loss.loss)
                  ->check(CLI::IsMember({"reconstruction", "score_aware"})),
              "loss", encode.loss.loss);
  bind_option(encode_binds,
              encode_cmd->add_option("--threshold", encode.loss.threshold),
              "threshold", encode.loss.threshold);
  bind_option(encode_binds,
              encode_cmd->add_option("--eta", encode.loss.explicit_eta), "eta",
              encode.loss.explicit_eta);
  bind_option(encode_binds, encode_cmd->add_option("--passes", encode.passes),
              "passes", encode.passes);
  bind_option(encode_binds, encode_cmd->add_option("--threads", encode.threads),
              "threads", encode.threads);
  bind_option(encode_binds,
              encode_cmd->add_flag("--normalize", encode.normalize),
              "normalize", encode.normalize);
  encode_cmd->add_option("--config", encode.config, "JSON config document");

  auto* search_cmd =
      app.add_subcommand("search", "top-N lookup-table search for queries");
  bind_option(search_binds,
              search_cmd->add_option("--codebook", search.codebook)->required(),
              "codebook", search.codebook);
  bind_option(search_binds,
              search_cmd->add_option("--codes", search.codes)->required(),
              "codes", search.codes);
  bind_option(search_binds,
              search_cmd->add_option("--queries", search.queries)->required(),
              "queries", search.queries);
  bind_option(search_binds, search_cmd->add_option("--topn", search.topn),
              "topn", search.topn);
  bind_option(search_binds,
              search_cmd->add_option("--query-index", search.query_index),
              "query_index", search.query_index);
  bind_option(search_binds,
              search_cmd->add_flag("--normalize", search.normalize),
              "normalize", search.normalize);
  search_cmd->add_option("--config", search.config, "JSON config document");

  auto* eval_cmd = app.add_subcommand("eval", "recall and relative-error report");
  bind_option(eval_binds, eval_cmd->add_option("--data", eval.data)->required(),
              "data", eval.data);
  bind_option(eval_binds,
              eval_cmd->add_option("--queries", eval.queries)->required(),
              "queries", eval.queries);
  bind_option(eval_binds,
              eval_cmd->add_option("--codebook", eval.codebook)->required(),
              "codebook", eval.codebook);
  bind_option(eval_binds, eval_cmd->add_option("--codes", eval.codes)->required(),
              "codes", eval.codes);
  bind_option(eval_binds, eval_cmd->add_option("--out", eval.out)->required(),
              "out", eval.out);
  bind_option(eval_binds, eval_cmd->add_option("--Ns", eval.ns), "Ns", eval.ns);
  bind_option(eval_binds, eval_cmd->add_option("--kk", eval.kk), "kk", eval.kk);
  bind_option(eval_binds,
              eval_cmd->add_option("--ground-truth", eval.ground_truth),
              "ground_truth", eval.ground_truth);
  bind_option(eval_binds, eval_cmd->add_option("--threads", eval.threads),
              "threads", eval.threads);
  bind_option(eval_binds, eval_cmd->add_flag("--normalize", eval.normalize),
              "normalize", eval.normalize);
  eval_cmd->add_option("--config", eval.config, "JSON config document");

  auto* eta_cmd =
      app.add_subcommand("eta", "table of exact and limit eta by dimension");
  bind_option(eta_binds, eta_cmd->add_option("--threshold,-T", eta.threshold),
              "threshold", eta.threshold);
  bind_option(eta_binds, eta_cmd->add_option("--norm", eta.norm), "norm",
              eta.norm);
  bind_option(eta_binds, eta_cmd->add_option("--dmin", eta.dmin), "dmin",
              eta.dmin);
  bind_option(eta_binds, eta_cmd->add_option("--dmax", eta.dmax), "dmax",
              eta.dmax);
  bind_option(eta_binds, eta_cmd->add_option("--stride", eta.stride), "stride",
              eta.stride);
  eta_cmd->add_option("--config", eta.config, "JSON config document");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (gen_cmd->parsed()) {
      apply_config(gen.config, "gen", gen_binds);
      return run_gen(gen);
    }
    if (convert_cmd->parsed()) {
      apply_config(convert.config, "convert", convert_binds);
      return run_convert(convert);
    }
    if (diagnose_cmd->parsed()) {
      apply_config(diagnose.config, "diagnose", diagnose_binds);
      return run_diagnose(diagnose);
    }
    if (train_cmd->parsed()) {
      apply_config(train.config, "train", train_binds);
      return run_train(train);
    }
    if (encode_cmd->parsed()) {
      apply_config(encode.config, "encode", encode_binds);
      return run_encode(encode);
    }
    if (search_cmd->parsed()) {
      apply_config(search.config, "search", search_binds);
      return run_search(search);
    }
    if (eval_cmd->parsed()) {
      apply_config(eval.config, "eval", eval_binds);
      return run_eval(eval);
    }
    if (eta_cmd->parsed()) {
      apply_config(eta.config, "eta", eta_binds);
      return run_eta(eta);
    }
  } catch (const anisoq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.error_class() == anisoq::ErrorClass::validation ? kExitValidation
                                                             : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
