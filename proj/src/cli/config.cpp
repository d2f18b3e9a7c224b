// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/cli/config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

#include "wadcmsn/error.hpp"

namespace wadcmsn {

RunPaths RunPaths::resolved() const {
  RunPaths p = *this;
  const auto fill = [&](std::filesystem::path& target, const char* name) {
    if (target.empty()) target = out / name;
  };
  fill(p.features, "features.csv");
  fill(p.taxonomy, "taxonomy.json");
  fill(p.embeddings, "embeddings.txt");
  fill(p.embeddings_b, "embeddings_b.txt");
  fill(p.semantic, "semantic.json");
  fill(p.checkpoint, "checkpoint.bin");
  fill(p.log, "train_log.json");
  fill(p.report, "report.json");
  fill(p.rankings, "rankings.csv");
  fill(p.codes, "codes.csv");
  fill(p.retrievals, "retrievals.csv");
  return p;
}

namespace {

using nlohmann::json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed keys are read as size_t");

// Reads keys from one JSON object and rejects any key nobody asked for.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  void read(const char* key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) fail(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void read(const char* key, Real& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<Real>();
    }
  }
  void read(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "true or false");
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  void read(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    read(key, s);
    out = s;
  }
  void read(const char* key, std::vector<std::size_t>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "an array of non-negative integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer() || e.get<long long>() < 0) fail(key, "an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  void read(const char* key, std::vector<std::string>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "an array of strings");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) fail(key, "an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }
  template <typename Parse, typename T>
  void read_enum(const char* key, T& out, Parse parse) {
    std::string s;
    if (take_peek(key)) {
      read(key, s);
      out = parse(s);
    }
  }
  template <typename Fn>
  void section(const char* key, Fn fn) {
    if (const json* v = take(key)) {
      Section sub(*v, where_ + "." + key);
      fn(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown configuration key '" + where_ + "." + key + "'");
    }
  }

 private:
  const json* take(const char* key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  bool take_peek(const char* key) const { return j_.contains(key); }
  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw ConfigError("configuration key '" + where_ + "." + key + "' must be " + expected);
  }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Section root(j, "config");
  root.read("seed", c.seed);
  root.section("paths", [&](Section& s) {
    auto& p = c.paths;
    s.read("out", p.out);
    s.read("features", p.features);
    s.read("taxonomy", p.taxonomy);
    s.read("embeddings", p.embeddings);
    s.read("embeddings_b", p.embeddings_b);
    s.read("semantic", p.semantic);
    s.read("checkpoint", p.checkpoint);
    s.read("log", p.log);
    s.read("report", p.report);
    s.read("rankings", p.rankings);
    s.read("codes", p.codes);
    s.read("retrievals", p.retrievals);
  });
  root.section("synthetic", [&](Section& s) {
    auto& y = c.synthetic;
    s.read("n_classes", y.n_classes);
    s.read("n_seen", y.n_seen);
    s.read("sketches_per_class", y.sketches_per_class);
    s.read("images_per_class", y.images_per_class);
    s.read("feature_dim", y.feature_dim);
    s.read("text_dim", y.text_dim);
    s.read("latent_dim", y.latent_dim);
    s.read("cluster_spread", y.cluster_spread);
    s.read("text_spread", y.text_spread);
    s.read("modality_transform_seed", y.modality_transform_seed);
    s.read("taxonomy_depth", y.taxonomy_depth);
    s.read("text_sources", y.text_sources);
  });
  root.section("embed", [&](Section& s) {
    auto& e = c.embed;
    s.read_enum("measure", e.measure, parse_measure);
    s.read("text_source", e.text_source);
    s.read("grid", e.grid);
    s.read("code_dim", e.combiner.code_dim);
    s.read("epochs", e.combiner.epochs);
    s.read("learning_rate", e.combiner.learning_rate);
    s.read("l1_penalty", e.combiner.l1_penalty);
    s.read_enum("code_activation", e.combiner.code_activation, [](const std::string& t) {
      try {
        return parse_activation(t);
      } catch (const Error& err) {
        throw ConfigError(err.what());
      }
    });
  });
  root.section("train", [&](Section& s) {
    auto& t = c.train;
    s.read("learning_rate", t.optimizer.learning_rate);
    s.read("decay", t.optimizer.decay);
    s.read("epsilon", t.optimizer.epsilon);
    s.read("clip_c", t.clip_c);
    s.read("batch_size", t.batch_size);
    s.read("max_iterations", t.max_iterations);
    s.read("n_critic", t.n_critic);
    s.read("feature_dim", t.architecture.feature_dim);
    s.read("code_dim", t.architecture.code_dim);
    s.read("encoder_hidden", t.architecture.encoder_hidden);
    s.read("decoder_hidden", t.architecture.decoder_hidden);
    s.read("critic_hidden", t.architecture.critic_hidden);
    s.read("leaky_slope", t.architecture.leaky_slope);
    s.read("per_branch_head", t.architecture.per_branch_head);
    s.read("validate", c.validate);
    s.section("weights", [&](Section& w) {
      w.read("adversarial", t.weights.adversarial);
      w.read("branch_adversarial", t.weights.branch_adversarial);
      w.read("cycle", t.weights.cycle);
      w.read("classification", t.weights.classification);
      w.read("identity", t.weights.identity);
    });
  });
  root.section("eval", [&](Section& s) {
    auto& e = c.eval;
    s.read_enum("metric", e.options.metric, parse_metric);
    s.read_enum("map_mode", e.options.map_mode, parse_map_mode);
    s.read("k", e.options.precision_k);
    s.read("ap_cutoff", e.options.ap_cutoff);
    s.read("dump_rankings", e.dump_rankings);
    s.read("dump_codes", e.dump_codes);
  });
  root.section("retrieve", [&](Section& s) {
    s.read("queries", c.retrieve.queries);
    s.read("k", c.retrieve.k);
  });
  root.section("ablation", [&](Section& s) {
    s.read("no_wd", c.ablation.no_wd);
    s.read("no_cyc", c.ablation.no_cyc);
    s.read("no_cls", c.ablation.no_cls);
    s.read("no_iml", c.ablation.no_iml);
  });
  root.finish();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  const auto& p = paths;
  const auto& y = synthetic;
  const auto& e = embed;
  const auto& t = train;
  const auto& a = t.architecture;
  return {
      {"seed", seed},
      {"paths",
       {{"out", p.out.string()},
        {"features", p.features.string()},
        {"taxonomy", p.taxonomy.string()},
        {"embeddings", p.embeddings.string()},
        {"embeddings_b", p.embeddings_b.string()},
        {"semantic", p.semantic.string()},
        {"checkpoint", p.checkpoint.string()},
        {"log", p.log.string()},
        {"report", p.report.string()},
        {"rankings", p.rankings.string()},
        {"codes", p.codes.string()},
        {"retrievals", p.retrievals.string()}}},
      {"synthetic",
       {{"n_classes", y.n_classes},
        {"n_seen", y.n_seen},
        {"sketches_per_class", y.sketches_per_class},
        {"images_per_class", y.images_per_class},
        {"feature_dim", y.feature_dim},
        {"text_dim", y.text_dim},
        {"latent_dim", y.latent_dim},
        {"cluster_spread", y.cluster_spread},
        {"text_spread", y.text_spread},
        {"modality_transform_seed", y.modality_transform_seed},
        {"taxonomy_depth", y.taxonomy_depth},
        {"text_sources", y.text_sources}}},
      {"embed",
       {{"measure", to_string(e.measure)},
        {"text_source", e.text_source},
        {"grid", e.grid},
        {"code_dim", e.combiner.code_dim},
        {"epochs", e.combiner.epochs},
        {"learning_rate", e.combiner.learning_rate},
        {"l1_penalty", e.combiner.l1_penalty},
        {"code_activation", to_string(e.combiner.code_activation)}}},
      {"train",
       {{"learning_rate", t.optimizer.learning_rate},
        {"decay", t.optimizer.decay},
        {"epsilon", t.optimizer.epsilon},
        {"clip_c", t.clip_c},
        {"batch_size", t.batch_size},
        {"max_iterations", t.max_iterations},
        {"n_critic", t.n_critic},
        {"feature_dim", a.feature_dim},
        {"code_dim", a.code_dim},
        {"encoder_hidden", a.encoder_hidden},
        {"decoder_hidden", a.decoder_hidden},
        {"critic_hidden", a.critic_hidden},
        {"leaky_slope", a.leaky_slope},
        {"per_branch_head", a.per_branch_head},
        {"validate", validate},
        {"weights",
         {{"adversarial", t.weights.adversarial},
          {"branch_adversarial", t.weights.branch_adversarial},
          {"cycle", t.weights.cycle},
          {"classification", t.weights.classification},
          {"identity", t.weights.identity}}}}},
      {"eval",
       {{"metric", to_string(eval.options.metric)},
        {"map_mode", to_string(eval.options.map_mode)},
        {"k", eval.options.precision_k},
        {"ap_cutoff", eval.options.ap_cutoff},
        {"dump_rankings", eval.dump_rankings},
        {"dump_codes", eval.dump_codes}}},
      {"retrieve", {{"queries", retrieve.queries}, {"k", retrieve.k}}},
      {"ablation",
       {{"no_wd", ablation.no_wd},
        {"no_cyc", ablation.no_cyc},
        {"no_cls", ablation.no_cls},
        {"no_iml", ablation.no_iml}}},
  };
}

TrainConfig RunConfig::effective_train() const {
  TrainConfig t = train;
  t.seed = seed;
  if (ablation.no_wd) t.weights.branch_adversarial = 0;
  if (ablation.no_cyc) t.weights.cycle = 0;
  if (ablation.no_cls) t.weights.classification = 0;
  if (ablation.no_iml) t.weights.identity = 0;
  return t;
}

CombinerConfig RunConfig::effective_combiner() const {
  CombinerConfig cc = embed.combiner;
  cc.seed = seed;
  return cc;
}

}  // namespace wadcmsn
