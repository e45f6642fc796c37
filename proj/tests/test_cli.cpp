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

// End-to-end tests for the command-line binary (path injected by the build).

#include <catch2/catch_amalgamated.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "anisoq/anisoq.hpp"

using Catch::Approx;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "anisoq_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  static int counter = 0;
  const fs::path out_path = work_dir() / ("out_" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(ANISOQ_CLI_PATH) + " " + args + " > " +
                          out_path.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = slurp(out_path);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string path(const std::string& name) {
  return (work_dir() / name).string();
}

}  // namespace

TEST_CASE("cli: gen is deterministic and writes a metadata sidecar") {
  REQUIRE(run_cli("gen --out " + path("a.fvecs") +
                  " --kind gaussian_mixture --n 300 --d 16 --seed 5 "
                  "--centers 8 --spread 0.3 --normalize") == 0);
  REQUIRE(run_cli("gen --out " + path("b.fvecs") +
                  " --kind gaussian_mixture --n 300 --d 16 --seed 5 "
                  "--centers 8 --spread 0.3 --normalize") == 0);
  CHECK(slurp(path("a.fvecs")) == slurp(path("b.fvecs")));
  CHECK_FALSE(slurp(path("a.fvecs")).empty());
  CHECK(fs::exists(path("a.fvecs.meta.json")));
  CHECK(run_cli("gen --out " + path("x.fvecs") + " --kind nope") == 2);
}

TEST_CASE("cli: eta table matches the closed forms") {
  std::string out;
  REQUIRE(run_cli("eta -T 0.2 --dmax 64 --dmin 3", &out) == 0);
  std::stringstream ss(out);
  std::string header;
  std::getline(ss, header);
  double prev_ratio = 1e300;
  int rows = 0;
  int d;
  double exact, exact_ratio, limit, limit_ratio;
  while (ss >> d >> exact >> exact_ratio >> limit >> limit_ratio) {
    CHECK(limit_ratio == Approx(1.0 / 24.0).epsilon(1e-8));
    CHECK(exact_ratio <= prev_ratio + 1e-12);
    CHECK(exact_ratio >= limit_ratio);
    prev_ratio = exact_ratio;
    ++rows;
  }
  CHECK(rows == 62);

  REQUIRE(run_cli("eta -T 0 --dmax 6", &out) == 0);
  std::stringstream ss2(out);
  std::getline(ss2, header);
  while (ss2 >> d >> exact >> exact_ratio >> limit >> limit_ratio) {
    CHECK(exact == 1.0);
    CHECK(limit == 0.0);
  }

  CHECK(run_cli("eta -T 1.0") == 2);  // threshold must stay below the norm
  CHECK(run_cli("eta -T 0.5 --norm 0.2") == 2);
}

TEST_CASE("cli: train artifacts are reproducible byte for byte") {
  REQUIRE(run_cli("gen --out " + path("train.fvecs") +
                  " --kind gaussian_mixture --n 400 --d 16 --seed 9 "
                  "--centers 8 --normalize") == 0);
  const std::string args =
      "train --data " + path("train.fvecs") +
      " --quantizer pq --k 8 --M 4 --loss score_aware --threshold 0.2 "
      "--seed 3 --iters 10";
  REQUIRE(run_cli(args + " --out " + path("run1")) == 0);
  REQUIRE(run_cli(args + " --out " + path("run2")) == 0);
  for (const char* f : {"codebook.bin", "codes.bin", "train_log.csv",
                        "manifest.json"}) {
    INFO(f);
    CHECK(slurp(path("run1/") + f) == slurp(path("run2/") + f));
  }
  const std::string log = slurp(path("run1/train_log.csv"));
  CHECK(log.find("iteration,total_loss") != std::string::npos);
  CHECK(log.find("derived_eta_mean") != std::string::npos);
  const std::string manifest = slurp(path("run1/manifest.json"));
  CHECK(manifest.find("fnv1a64") != std::string::npos);
  // unit-norm data at d=16: the derived proxy is 15/24
  CHECK(manifest.find("derived_eta_mean") != std::string::npos);
  CHECK(slurp(path("run1/manifest.json")).find("0.625") != std::string::npos);
}

TEST_CASE("cli: results are independent of the thread count") {
  const std::string args =
      "train --data " + path("train.fvecs") +
      " --quantizer pq --k 8 --M 4 --loss score_aware --threshold 0.2 "
      "--seed 3 --iters 6";
  REQUIRE(run_cli(args + " --threads 1 --out " + path("thr1")) == 0);
  REQUIRE(run_cli(args + " --threads 2 --out " + path("thr2")) == 0);
  CHECK(slurp(path("thr1/codebook.bin")) == slurp(path("thr2/codebook.bin")));
  CHECK(slurp(path("thr1/codes.bin")) == slurp(path("thr2/codes.bin")));
  CHECK(slurp(path("thr1/train_log.csv")) == slurp(path("thr2/train_log.csv")));
}

TEST_CASE("cli: explicit eta 1 equals reconstruction loss training") {
  REQUIRE(run_cli("gen --out " + path("eq.fvecs") +
                  " --kind uniform_sphere --n 300 --d 8 --seed 4") == 0);
  REQUIRE(run_cli("train --data " + path("eq.fvecs") + " --out " + path("eq_eta") +
                  " --quantizer vq --k 8 --loss score_aware --eta 1.0 "
                  "--seed 6 --iters 12") == 0);
  REQUIRE(run_cli("train --data " + path("eq.fvecs") + " --out " + path("eq_rec") +
                  " --quantizer vq --k 8 --loss reconstruction "
                  "--seed 6 --iters 12") == 0);
  CHECK(slurp(path("eq_eta/codebook.bin")) == slurp(path("eq_rec/codebook.bin")));
  CHECK(slurp(path("eq_eta/codes.bin")) == slurp(path("eq_rec/codes.bin")));
}

TEST_CASE("cli: encode runs and is deterministic") {
  REQUIRE(run_cli("encode --data " + path("train.fvecs") + " --codebook " +
                  path("run1/codebook.bin") + " --out " + path("enc1.bin") +
                  " --loss score_aware --threshold 0.2 --passes 2") == 0);
  REQUIRE(run_cli("encode --data " + path("train.fvecs") + " --codebook " +
                  path("run1/codebook.bin") + " --out " + path("enc2.bin") +
                  " --loss score_aware --threshold 0.2 --passes 2") == 0);
  CHECK(slurp(path("enc1.bin")) == slurp(path("enc2.bin")));
  const auto codes = anisoq::load_codes(path("enc1.bin"));
  CHECK(codes.n == 400);
  CHECK(codes.M == 4);
}

TEST_CASE("cli: search returns the exact top hit on a lossless codebook") {
  REQUIRE(run_cli("gen --out " + path("tiny.fvecs") +
                  " --kind uniform_sphere --n 40 --d 8 --seed 12") == 0);
  // k = n makes every point its own codeword: quantization is exact
  REQUIRE(run_cli("train --data " + path("tiny.fvecs") + " --out " +
                  path("tiny_run") + " --quantizer vq --k 40 "
                  "--loss reconstruction --seed 1 --iters 4") == 0);
  REQUIRE(run_cli("gen --out " + path("tiny_q.fvecs") +
                  " --kind uniform_sphere --n 5 --d 8 --seed 13") == 0);
  std::string out;
  REQUIRE(run_cli("search --codebook " + path("tiny_run/codebook.bin") +
                      " --codes " + path("tiny_run/codes.bin") + " --queries " +
                      path("tiny_q.fvecs") + " --topn 1 --query-index 2",
                  &out) == 0);
  const auto data = anisoq::read_fvecs(path("tiny.fvecs"));
  const auto queries = anisoq::read_fvecs(path("tiny_q.fvecs"));
  const auto expected = anisoq::exact_search(queries.row(2), data, 1);
  std::stringstream ss(out);
  std::string header;
  std::getline(ss, header);
  std::size_t qi, rank;
  unsigned idx;
  double score;
  REQUIRE((ss >> qi >> rank >> idx >> score));
  CHECK(qi == 2);
  CHECK(idx == expected.hits[0].index);
  CHECK(score == Approx(expected.hits[0].score).epsilon(1e-6));
}

TEST_CASE("cli: eval writes reports and caches ground truth") {
  std::string out;
  REQUIRE(run_cli("eval --data " + path("tiny.fvecs") + " --queries " +
                      path("tiny_q.fvecs") + " --codebook " +
                      path("tiny_run/codebook.bin") + " --codes " +
                      path("tiny_run/codes.bin") + " --out " + path("ev1") +
                      " --Ns 1,10 --kk 5",
                  &out) == 0);
  CHECK(out.find("recall_1@1 1") != std::string::npos);
  CHECK(fs::exists(path("ev1/eval_report.txt")));
  CHECK(fs::exists(path("ev1/eval_report.json")));
  bool cache_found = false;
  for (const auto& e : fs::directory_iterator(path("ev1")))
    cache_found |= e.path().extension() == ".ivecs";
  CHECK(cache_found);
  // second run picks the cache up
  REQUIRE(run_cli("eval --data " + path("tiny.fvecs") + " --queries " +
                      path("tiny_q.fvecs") + " --codebook " +
                      path("tiny_run/codebook.bin") + " --codes " +
                      path("tiny_run/codes.bin") + " --out " + path("ev1") +
                      " --Ns 1,10 --kk 5",
                  &out) == 0);
  CHECK(slurp(path("ev1/manifest.json")).find("\"source\": \"cache\"") !=
        std::string::npos);
}

TEST_CASE("cli: validation failures exit with the validation code") {
  // missing input file
  CHECK(run_cli("diagnose --data " + path("missing.fvecs")) == 2);
  // empty query file
  {
    std::ofstream out(path("empty.fvecs"), std::ios::binary | std::ios::trunc);
  }
  CHECK(run_cli("eval --data " + path("tiny.fvecs") + " --queries " +
                path("empty.fvecs") + " --codebook " +
                path("tiny_run/codebook.bin") + " --codes " +
                path("tiny_run/codes.bin") + " --out " + path("ev2")) == 2);
  // unknown flag
  CHECK(run_cli("train --data x --out y --bogus") == 2);
  // threshold above the norm of unit data
  CHECK(run_cli("train --data " + path("tiny.fvecs") + " --out " + path("bad") +
                " --quantizer vq --k 4 --loss score_aware --threshold 1.5") ==
        2);
}

TEST_CASE("cli: config document supplies defaults, flags override") {
  {
    std::ofstream cfg(path("cfg.json"), std::ios::trunc);
    cfg << R"({"train": {"k": 4, "quantizer": "vq", "iters": 5,)"
        << R"( "loss": "reconstruction"}, "seed": 21})";
  }
  REQUIRE(run_cli("train --data " + path("tiny.fvecs") + " --out " +
                  path("cfg_run") + " --config " + path("cfg.json")) == 0);
  const std::string manifest = slurp(path("cfg_run/manifest.json"));
  CHECK(manifest.find("\"k\": 4") != std::string::npos);
  CHECK(manifest.find("\"seed\": 21") != std::string::npos);
  CHECK(manifest.find("\"quantizer\": \"vq\"") != std::string::npos);

  // explicit flag beats the document
  REQUIRE(run_cli("train --data " + path("tiny.fvecs") + " --out " +
                  path("cfg_run2") + " --config " + path("cfg.json") +
                  " --k 8") == 0);
  CHECK(slurp(path("cfg_run2/manifest.json")).find("\"k\": 8") !=
        std::string::npos);

  CHECK(run_cli("train --data " + path("tiny.fvecs") + " --out " +
                path("cfg_run3") + " --config " + path("nope.json")) == 2);
}

TEST_CASE("cli: diagnose prints the report and convert round-trips") {
  std::string out;
  REQUIRE(run_cli("diagnose --data " + path("train.fvecs"), &out) == 0);
  CHECK(out.find("variance_ratio") != std::string::npos);

  {
    std::ofstream txt(path("emb.txt"), std::ios::trunc);
    txt << "apple 1.0 2.0 3.0\n";
    txt << "pear 4.0 5.0 6.0\n";
  }
  REQUIRE(run_cli("convert --input " + path("emb.txt") + " --output " +
                  path("emb.fvecs") + " --from glove-txt --normalize") == 0);
  const auto ds = anisoq::read_fvecs(path("emb.fvecs"));
  CHECK(ds.n == 2);
  CHECK(ds.d == 3);
  CHECK(ds.norms[0] == Approx(1.0).margin(1e-6));
}
