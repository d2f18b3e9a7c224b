// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Each criterion prints one PASS/FAIL line with its
// measurements. Usage: wadcmsn_acceptance [--list] [--criterion NAME]...
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "../support/gradient_suite.hpp"
#include "../support/test_support.hpp"
#include "wadcmsn/cli/commands.hpp"
#include "wadcmsn/data/synthetic.hpp"
#include "wadcmsn/losses/losses.hpp"
#include "wadcmsn/retrieval/retrieval.hpp"
#include "wadcmsn/trainer/trainer.hpp"

namespace {

using namespace wadcmsn;
namespace wt = wadcmsn::testing;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::string summary;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- gradients ---------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kInstances = 100;
  constexpr double kH = 1e-5;
  constexpr double kFloor = 1e-6;
  double worst = 0;
  std::string worst_where;
  std::size_t checked = 0;
  for (int i = 0; i < kInstances; ++i) {
    const auto r = wt::check_objective_gradients(1000 + static_cast<std::uint64_t>(i), kH, kFloor);
    checked += r.dis.checked + r.ps.checked;
    for (const auto* g : {&r.dis, &r.ps}) {
      if (g->max_error > worst) {
        worst = g->max_error;
        worst_where = "instance " + std::to_string(i) + " " + g->worst;
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = sizeof(Real) == 8 && worst < 1e-4 && secs < 60;
  return {pass, std::to_string(kInstances) + " instances, " + std::to_string(checked) +
                    " parameters, max relative error " + fmt("%.3g", worst) + " (< 1e-4), " +
                    fmt("%.1f", secs) + " s (< 60 s)" + (worst_where.empty() ? "" : "; worst: " + worst_where)};
}

// ---- ranking metrics -------------------------------------------------------

// Direct transcription of the AP sum for one relevance pattern.
double oracle_ap(const std::vector<bool>& rel, std::size_t total, std::size_t n) {
  if (total == 0) return 0;
  double sum = 0;
  for (std::size_t s = 1; s <= n; ++s) {
    if (!rel[s - 1]) continue;
    std::size_t hits = 0;
    for (std::size_t t = 0; t < s; ++t) hits += rel[t] ? 1 : 0;
    sum += (static_cast<double>(hits) / static_cast<double>(s)) * (1.0 / static_cast<double>(total));
  }
  return sum;
}

double oracle_precision(const std::vector<bool>& rel, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t t = 0; t < std::min(k, rel.size()); ++t) hits += rel[t] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t cases = 0;
  double worst = 0;
  for (std::size_t len = 1; len <= 8; ++len) {
    for (std::uint32_t mask = 0; mask < (1u << len); ++mask) {
      std::vector<bool> rel(len);
      std::unique_ptr<bool[]> flags(new bool[len]);
      std::size_t in_list = 0;
      for (std::size_t i = 0; i < len; ++i) {
        rel[i] = (mask >> i) & 1u;
        flags[i] = rel[i];
        in_list += rel[i] ? 1 : 0;
      }
      const std::span<const bool> view(flags.get(), len);
      // R counts relevant items in the whole gallery, which may extend past
      // the list: try the list's own count and two larger galleries.
      for (std::size_t extra : {0, 1, 3}) {
        const std::size_t total = in_list + extra;
        for (std::size_t n = 1; n <= len; ++n) {
          const double got = average_precision(view, total, n);
          worst = std::max(worst, std::abs(got - oracle_ap(rel, total, n)));
          ++cases;
        }
      }
      for (std::size_t k = 1; k <= len + 2; ++k) {
        worst = std::max(worst, std::abs(precision_at_k(view, k) - oracle_precision(rel, k)));
        ++cases;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 5,
          std::to_string(cases) + " pattern/cutoff cases over all lengths <= 8, max |diff| " +
              fmt("%.3g", worst) + " (<= 1e-12), " + fmt("%.2f", secs) + " s (< 5 s)"};
}

// ---- 1-D Wasserstein ---------------------------------------------------------

Outcome wasserstein_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  double worst = 0;
  std::size_t draws = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<Real> a(n), b(n);
      for (auto& v : a) v = static_cast<Real>(u(rng));
      for (auto& v : b) v = static_cast<Real>(u(rng));
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      double best = std::numeric_limits<double>::infinity();
      do {
        double cost = 0;
        for (std::size_t i = 0; i < n; ++i) cost += std::abs(static_cast<double>(a[i]) - b[perm[i]]);
        best = std::min(best, cost / static_cast<double>(n));
      } while (std::next_permutation(perm.begin(), perm.end()));
      worst = std::max(worst, std::abs(static_cast<double>(wasserstein_1d(a, b)) - best));
      ++draws;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 10,
          std::to_string(draws) + " draws (n = 1..6, 1000 each), max |diff| vs permutation brute force " +
              fmt("%.3g", worst) + " (<= 1e-12), " + fmt("%.2f", secs) + " s (< 10 s)"};
}

// ---- loss identities ---------------------------------------------------------

Mlp linear_map(const Matrix& w) {
  DenseLayer layer{w, std::vector<Real>(w.rows(), Real{0}), Activation::identity()};
  return Mlp({layer});
}

Outcome loss_identities() {
  std::mt19937_64 rng(5);
  const std::size_t d = 6, m = 6, classes = 4, rows = 5;
  // Encoders and decoders are identity maps, so F(G(v)) = v, G(F(s)) = s and
  // both branches send the same input to the same code.
  Networks nets;
  nets.sketch_encoder = linear_map(Matrix::identity(d));
  nets.image_encoder = linear_map(Matrix::identity(d));
  nets.sketch_decoder = linear_map(Matrix::identity(m));
  nets.image_decoder = linear_map(Matrix::identity(m));
  Architecture arch;
  arch.feature_dim = d;
  arch.code_dim = m;
  arch.critic_hidden = {5};
  nets.semantic_critic = wt::random_mlp(critic_shape(arch, m), rng);
  nets.sketch_critic = wt::random_mlp(critic_shape(arch, d), rng);
  nets.image_critic = wt::random_mlp(critic_shape(arch, d), rng);
  nets.head = ClassifierHead::from_parameters(Matrix(classes, m), std::vector<Real>(classes, Real{0}));

  Batch b;
  b.s = wt::random_matrix(rows, m, rng);
  b.x = b.s;
  b.y = b.s;
  for (std::size_t i = 0; i < rows; ++i) b.labels.push_back(i % classes);

  const auto iml = identity_matching_loss(b, nets.sketch_encoder, nets.image_encoder, nets.sketch_decoder,
                                           nets.image_decoder);
  const auto cyc_sk = cycle_loss(b.x, b.s, nets.sketch_encoder, nets.sketch_decoder);
  const auto cyc_im = cycle_loss(b.y, b.s, nets.image_encoder, nets.image_decoder);
  const auto cls = classification_loss(b.s, b.labels, nets.head);
  // x = y = s and identity generators: every critic compares a sample set with itself.
  const auto se = wadv_semantic(b, nets.sketch_encoder, nets.image_encoder, nets.semantic_critic);
  const auto sk = wadv_branch(b.x, b.s, nets.sketch_critic);
  const auto im = wadv_branch(b.y, b.s, nets.image_critic);

  const double ln_c = std::log(static_cast<double>(classes));
  struct Check {
    const char* name;
    double value;
    double expected;
  };
  const std::vector<Check> checks{{"iml", iml.value, 0.0},         {"cyc_sk", cyc_sk.value, 0.0},
                                  {"cyc_im", cyc_im.value, 0.0},   {"cls", cls.value, ln_c},
                                  {"wadv_se", se.value, 0.0},      {"wadv_sk", sk.value, 0.0},
                                  {"wadv_im", im.value, 0.0}};
  bool pass = true;
  std::string detail;
  for (const auto& c : checks) {
    const double err = std::abs(c.value - c.expected);
    pass = pass && err <= 1e-10;
    detail += std::string(detail.empty() ? "" : ", ") + c.name + " |err| " + fmt("%.2g", err);
  }
  return {pass, detail + " (all <= 1e-10)"};
}

// ---- shared synthetic fixture -----------------------------------------------

constexpr std::uint64_t kFixtureSeed = 1;

struct Fixture {
  ZeroShotSplit split;
  SemanticTable semantic;
  Validation test;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const SyntheticSpec spec;  // 14 classes, 10 seen, 40 per class-modality, 512-D
    const SyntheticData data = gen_synthetic(spec, kFixtureSeed);
    const std::set<std::string> unseen(data.unseen_classes.begin(), data.unseen_classes.end());
    ZeroShotSplit split = make_split(data.records, unseen);
    CombinerConfig cc;
    cc.seed = kFixtureSeed;
    SemanticBuild build = build_semantic_table(data.classes, split.seen_classes, data.text, "a", data.taxonomy,
                                               HierarchyMeasure::path, cc);
    Validation test{filter_modality(split.test, Modality::sketch), filter_modality(split.test, Modality::image), {}};
    return Fixture{std::move(split), std::move(build.table), std::move(test)};
  }();
  return f;
}

Outcome lipschitz() {
  const Fixture& f = fixture();
  TrainConfig tc;
  tc.seed = kFixtureSeed;
  tc.max_iterations = 500;
  std::size_t steps = 0, violations = 0;
  Real worst = 0;
  TrainHooks hooks;
  hooks.after_critic_step = [&](std::uint64_t, std::size_t, const ModelBundle& b) {
    ++steps;
    const Real m = std::max({max_abs_parameter(b.nets.semantic_critic), max_abs_parameter(b.nets.sketch_critic),
                             max_abs_parameter(b.nets.image_critic)});
    worst = std::max(worst, m);
    if (m > tc.clip_c) ++violations;
  };
  train(f.split, f.semantic, tc, std::nullopt, hooks);
  return {steps == 500 && violations == 0,
          std::to_string(steps) + " critic steps checked, " + std::to_string(violations) +
              " violations, max |critic parameter| " + fmt("%.6g", worst) + " (<= clip_c 0.01)"};
}

struct RunScore {
  double map = 0;
  double chance = 0;
  double seconds = 0;
};

RunScore train_and_score(const TrainConfig& tc) {
  const Fixture& f = fixture();
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(f.split, f.semantic, tc);
  const EvalResult ev = evaluate(r.bundle.nets, f.test.queries, f.test.gallery, f.test.options);
  return {ev.map, ev.chance_map, seconds_since(t0)};
}

Outcome synthetic_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig tc;
  tc.seed = kFixtureSeed;
  tc.max_iterations = 2000;
  const RunScore s = train_and_score(tc);
  const double secs = seconds_since(t0);
  const Fixture& f = fixture();
  const double prior = 1.0 / static_cast<double>(f.split.unseen_classes.size());
  const bool map_ok = s.map >= 0.75;
  // Chance is the per-class gallery fraction; the expected AP of a random
  // ranking is reported alongside.
  const bool chance_ok = s.map >= 5 * prior;
  const bool time_ok = secs < 300;
  return {map_ok && chance_ok && time_ok,
          "unseen mAP " + fmt("%.4f", s.map) + (map_ok ? " >= 0.75 ok" : " < 0.75 FAIL") + "; chance (class prior) " +
              fmt("%.4f", prior) + ", ratio " + fmt("%.2f", s.map / prior) + (chance_ok ? " >= 5 ok" : " < 5 FAIL") +
              " (5x chance = " + fmt("%.2f", 5 * prior) + " exceeds the maximum mAP of 1); random-ranking mAP " +
              fmt("%.4f", s.chance) + "; " +
              fmt("%.1f", secs) + " s" + (time_ok ? " < 300 s ok" : " >= 300 s FAIL")};
}

Outcome ablation_ordering() {
  std::vector<double> full, adversarial_only;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    TrainConfig tc;
    tc.seed = seed;
    tc.max_iterations = 2000;
    full.push_back(train_and_score(tc).map);
    // Equivalent of --no-wd --no-cyc --no-cls --no-iml.
    tc.weights.branch_adversarial = 0;
    tc.weights.cycle = 0;
    tc.weights.classification = 0;
    tc.weights.identity = 0;
    adversarial_only.push_back(train_and_score(tc).map);
    detail += " seed " + std::to_string(seed) + ": " + fmt("%.4f", full.back()) + " vs " +
              fmt("%.4f", adversarial_only.back()) + ";";
  }
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double mf = median(full), ma = median(adversarial_only);
  return {mf > ma, "median unseen mAP full " + fmt("%.4f", mf) + " vs adversarial-only " + fmt("%.4f", ma) +
                       (mf > ma ? " (strictly greater)" : " (NOT greater)") + ";" + detail};
}

Outcome determinism() {
  wt::TempDir dir;
  const auto out = dir / "run";
  RunConfig config;
  config.seed = 11;
  config.paths.out = out;
  config.train.max_iterations = 200;
  config.validate = true;
  config.eval.dump_rankings = true;
  const std::vector<std::string> names{"train_log.json", "checkpoint.bin", "report.json", "rankings.csv"};
  std::vector<std::vector<std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    std::filesystem::remove_all(out);
    cmd_gen_synth(config);
    cmd_embed(config);
    cmd_train(config);
    cmd_eval(config);
    std::vector<std::string> bytes;
    for (const auto& n : names) bytes.push_back(wt::read_bytes(out / n));
    runs.push_back(std::move(bytes));
  }
  bool same = true;
  std::string detail;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const bool eq = !runs[0][i].empty() && runs[0][i] == runs[1][i];
    same = same && eq;
    detail += std::string(detail.empty() ? "" : ", ") + names[i] + (eq ? " identical" : " DIFFERENT") + " (" +
              std::to_string(runs[0][i].size()) + " bytes)";
  }
  return {same, "two gen-synth/embed/train/eval runs, 200 iterations: " + detail};
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"gradients", "analytic vs central-difference gradients of dis_total and ps_total", gradient_suite},
      {"metric-oracle", "AP and precision@k vs exhaustive direct evaluation", metric_oracle},
      {"wasserstein-oracle", "1-D W1 vs permutation-coupling brute force", wasserstein_oracle},
      {"loss-identities", "exact zeros and ln C on constructed models", loss_identities},
      {"lipschitz", "critic weights within clip_c after every critic step (500 iterations)", lipschitz},
      {"synthetic-e2e", "unseen-class mAP on the synthetic fixture after 2000 iterations", synthetic_end_to_end},
      {"ablation", "median unseen mAP: full model vs adversarial-only over 5 seeds", ablation_ordering},
      {"determinism", "byte-identical logs, checkpoints and reports across two runs", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--list") {
      for (const auto& c : criteria()) std::printf("%-20s %s\n", c.name.c_str(), c.summary.c_str());
      return 0;
    }
    if (arg == "--criterion" && i + 1 < argc) {
      selected.push_back(argv[++i]);
      continue;
    }
    std::fprintf(stderr, "usage: %s [--list] [--criterion NAME]...\n", argv[0]);
    return 2;
  }
  for (const auto& name : selected) {
    const auto& all = criteria();
    if (std::none_of(all.begin(), all.end(), [&](const Criterion& c) { return c.name == name; })) {
      std::fprintf(stderr, "unknown criterion '%s' (see --list)\n", name.c_str());
      return 2;
    }
  }
  int failures = 0;
  for (const auto& c : criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.name) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("[%s] %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), seconds_since(t0),
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
