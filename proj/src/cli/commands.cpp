// SPDX-License-Identifier: Apache-2.0
#include "wadcmsn/cli/commands.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>

#include "wadcmsn/data/features.hpp"
#include "wadcmsn/data/synthetic.hpp"
#include "wadcmsn/error.hpp"
#include "wadcmsn/retrieval/retrieval.hpp"
#include "wadcmsn/semantics/semantic_table.hpp"
#include "wadcmsn/semantics/taxonomy.hpp"
#include "wadcmsn/trainer/trainer.hpp"

namespace wadcmsn {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const LookupError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const IncompatibleError*>(&e)) {
    return kExitData;
  }
  return kExitOther;
}

std::string grid_semantic_name(const std::string& text_source, HierarchyMeasure measure) {
  return "semantic_" + text_source + "_" + to_string(measure) + ".json";
}

namespace {

void require_inputs(std::initializer_list<std::pair<const char*, std::filesystem::path>> inputs) {
  std::string missing;
  for (const auto& [what, path] : inputs) {
    if (!std::filesystem::is_regular_file(path)) missing += std::string("\n  ") + what + ": " + path.string();
  }
  if (!missing.empty()) throw ConfigError("missing input files:" + missing);
}

void prepare_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  prepare_output(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

std::vector<std::string> class_list(const std::vector<FeatureRecord>& records) {
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.class_name);
  return {names.begin(), names.end()};
}

std::filesystem::path text_path(const RunPaths& p, const std::string& source) {
  if (source == "a") return p.embeddings;
  if (source == "b") return p.embeddings_b;
  throw ConfigError("unknown text source '" + source + "' (expected a or b)");
}

}  // namespace

std::vector<std::filesystem::path> cmd_gen_synth(const RunConfig& config) {
  const RunPaths p = config.paths.resolved();
  config.synthetic.validate();
  const SyntheticData data = gen_synthetic(config.synthetic, config.seed);
  std::vector<std::filesystem::path> written{p.features, p.taxonomy, p.embeddings};
  for (const auto& path : written) prepare_output(path);
  save_features(p.features, data.records);
  data.taxonomy.save(p.taxonomy);
  data.text.save(p.embeddings, true);
  if (data.text_b) {
    prepare_output(p.embeddings_b);
    data.text_b->save(p.embeddings_b, false);
    written.push_back(p.embeddings_b);
  }
  return written;
}

std::vector<std::filesystem::path> cmd_embed(const RunConfig& config) {
  const RunPaths p = config.paths.resolved();
  const auto& e = config.embed;
  std::vector<std::string> sources = e.grid ? std::vector<std::string>{"a", "b"}
                                            : std::vector<std::string>{e.text_source};
  std::vector<HierarchyMeasure> measures =
      e.grid ? std::vector<HierarchyMeasure>{HierarchyMeasure::path, HierarchyMeasure::jiang_conrath}
             : std::vector<HierarchyMeasure>{e.measure};
  std::map<std::string, std::filesystem::path> text_files;
  for (const auto& s : sources) text_files[s] = text_path(p, s);
  require_inputs({{"features", p.features}, {"taxonomy", p.taxonomy}});
  for (const auto& [source, path] : text_files) require_inputs({{"text embeddings", path}});

  const auto records = load_features(p.features);
  const ZeroShotSplit split = split_from_records(records);
  const auto classes = class_list(records);
  const Taxonomy tax = Taxonomy::load(p.taxonomy);
  const CombinerConfig combiner = config.effective_combiner();

  std::vector<std::filesystem::path> written;
  for (const auto& source : sources) {
    const TextEmbeddingTable text = TextEmbeddingTable::load(text_files.at(source));
    for (const auto measure : measures) {
      const std::string provenance = source + ":" + text_files.at(source).filename().string();
      const SemanticBuild build =
          build_semantic_table(classes, split.seen_classes, text, provenance, tax, measure, combiner);
      const std::filesystem::path out =
          e.grid ? p.semantic.parent_path() / grid_semantic_name(source, measure) : p.semantic;
      prepare_output(out);
      build.table.save(out);
      written.push_back(out);
    }
  }
  return written;
}

std::vector<std::filesystem::path> cmd_train(const RunConfig& config) {
  const RunPaths p = config.paths.resolved();
  const TrainConfig tc = config.effective_train();
  tc.validate();
  require_inputs({{"features", p.features}, {"semantic table", p.semantic}});
  const auto records = load_features(p.features);
  const SemanticTable semantic = SemanticTable::load(p.semantic);
  const ZeroShotSplit split = split_from_records(records);
  for (const auto& r : records) {
    if (r.feature.size() != tc.architecture.feature_dim) {
      throw ShapeError("features have dimension " + std::to_string(r.feature.size()) +
                       ", configuration expects " + std::to_string(tc.architecture.feature_dim));
    }
    break;
  }
  if (semantic.code_dim() != tc.architecture.code_dim) {
    throw ShapeError("semantic table has code dimension " + std::to_string(semantic.code_dim()) +
                     ", configuration expects " + std::to_string(tc.architecture.code_dim));
  }
  std::optional<Validation> validation;
  if (config.validate) {
    if (split.test.empty()) throw ValidationError("validation requested but the test split is empty");
    validation = Validation{filter_modality(split.test, Modality::sketch),
                            filter_modality(split.test, Modality::image), config.eval.options};
  }
  const TrainResult result = train(split, semantic, tc, validation);
  prepare_output(p.checkpoint);
  checkpoint_save(result.bundle, p.checkpoint);
  nlohmann::json log = result.log.to_json();
  log["config"] = config.to_json();
  write_json(p.log, log);
  return {p.checkpoint, p.log};
}

namespace {

struct LoadedModel {
  ModelBundle bundle;
  std::vector<FeatureRecord> queries;
  std::vector<FeatureRecord> gallery;
};

LoadedModel load_for_retrieval(const RunConfig& config, const RunPaths& p) {
  require_inputs({{"checkpoint", p.checkpoint}, {"features", p.features}});
  LoadedModel m;
  m.bundle = checkpoint_load(p.checkpoint);
  require_architecture(m.bundle, config.effective_train().architecture);
  const auto records = load_features(p.features);
  for (const auto& r : records) {
    if (r.split != Split::test) continue;
    (r.modality == Modality::sketch ? m.queries : m.gallery).push_back(r);
  }
  if (m.queries.empty() || m.gallery.empty()) {
    throw ValidationError("the test split needs at least one sketch and one image");
  }
  return m;
}

}  // namespace

std::vector<std::filesystem::path> cmd_eval(const RunConfig& config) {
  const RunPaths p = config.paths.resolved();
  const LoadedModel m = load_for_retrieval(config, p);
  const auto& opts = config.eval.options;
  const RetrievalIndex index = build_index(m.bundle.nets, m.gallery);
  const Matrix query_codes = encode_queries(m.bundle.nets, m.queries);
  const EvalResult result = evaluate_codes(query_codes, m.queries, index, opts);
  nlohmann::json report = eval_report(result, opts, config.to_json());
  report["checkpoint_iteration"] = m.bundle.iteration;
  write_json(p.report, report);
  std::vector<std::filesystem::path> written{p.report};

  if (config.eval.dump_rankings) {
    std::vector<RankedRetrieval> ranked;
    ranked.reserve(m.queries.size());
    for (std::size_t q = 0; q < m.queries.size(); ++q) {
      ranked.push_back(rank(query_codes.row(q), m.queries[q].id, m.queries[q].class_name, index, 0, opts.metric));
    }
    prepare_output(p.rankings);
    write_rankings_csv(p.rankings, ranked);
    written.push_back(p.rankings);
  }
  if (config.eval.dump_codes) {
    std::vector<std::string> ids, classes;
    for (const auto& r : m.queries) {
      ids.push_back(r.id);
      classes.push_back(r.class_name);
    }
    prepare_output(p.codes);
    write_codes_csv(p.codes, ids, classes, "sketch", query_codes);
    write_codes_csv(p.codes, index.ids, index.classes, "image", index.codes, true);
    written.push_back(p.codes);
  }
  return written;
}

std::vector<std::filesystem::path> cmd_retrieve(const RunConfig& config) {
  const RunPaths p = config.paths.resolved();
  if (config.retrieve.queries.empty()) throw ConfigError("retrieve needs at least one query id");
  if (config.retrieve.k == 0) throw ConfigError("retrieve needs k >= 1");
  const LoadedModel m = load_for_retrieval(config, p);
  std::map<std::string, const FeatureRecord*> by_id;
  for (const auto& r : m.queries) by_id[r.id] = &r;
  std::vector<std::string> unknown;
  for (const auto& id : config.retrieve.queries) {
    if (!by_id.count(id)) unknown.push_back(id);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown query ids:";
    for (const auto& id : unknown) msg += " " + id;
    msg += "\nvalid query ids (test sketches):";
    for (const auto& [id, rec] : by_id) msg += " " + id;
    throw LookupError(msg);
  }
  const RetrievalIndex index = build_index(m.bundle.nets, m.gallery);
  std::vector<RankedRetrieval> ranked;
  for (const auto& id : config.retrieve.queries) {
    ranked.push_back(retrieve(m.bundle.nets, index, *by_id.at(id), config.retrieve.k, config.eval.options.metric));
  }
  prepare_output(p.retrievals);
  write_rankings_csv(p.retrievals, ranked);
  return {p.retrievals};
}

namespace {

// Flag values that override the config file when given.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  // gen-synth
  std::optional<std::size_t> classes, seen, samples, text_sources;
  std::optional<double> spread;
  // embed
  std::optional<std::string> measure, text;
  bool grid = false;
  // train
  std::optional<std::size_t> max_iter, batch_size, n_critic;
  std::optional<double> lr;
  bool no_wd = false, no_cyc = false, no_cls = false, no_iml = false, validate = false;
  // eval / retrieve
  std::optional<std::string> metric, map_mode;
  std::optional<std::size_t> k;
  bool dump_rankings = false, dump_codes = false;
  std::vector<std::string> queries;
};

void apply(const Overrides& o, RunConfig& c) {
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.paths.out = *o.out;
  if (o.classes) c.synthetic.n_classes = *o.classes;
  if (o.seen) c.synthetic.n_seen = *o.seen;
  if (o.samples) c.synthetic.sketches_per_class = c.synthetic.images_per_class = *o.samples;
  if (o.text_sources) c.synthetic.text_sources = *o.text_sources;
  if (o.spread) c.synthetic.cluster_spread = static_cast<Real>(*o.spread);
  if (o.measure) c.embed.measure = parse_measure(*o.measure);
  if (o.text) c.embed.text_source = *o.text;
  if (o.grid) c.embed.grid = true;
  if (o.max_iter) c.train.max_iterations = *o.max_iter;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.n_critic) c.train.n_critic = *o.n_critic;
  if (o.lr) c.train.optimizer.learning_rate = static_cast<Real>(*o.lr);
  if (o.no_wd) c.ablation.no_wd = true;
  if (o.no_cyc) c.ablation.no_cyc = true;
  if (o.no_cls) c.ablation.no_cls = true;
  if (o.no_iml) c.ablation.no_iml = true;
  if (o.validate) c.validate = true;
  if (o.metric) c.eval.options.metric = parse_metric(*o.metric);
  if (o.map_mode) c.eval.options.map_mode = parse_map_mode(*o.map_mode);
  if (o.dump_rankings) c.eval.dump_rankings = true;
  if (o.dump_codes) c.eval.dump_codes = true;
  if (!o.queries.empty()) c.retrieve.queries = o.queries;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-shot sketch-based image retrieval with Wasserstein critics"};
  app.require_subcommand(1, 1);
  std::string config_path;
  Overrides o;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", o.seed, "Random seed (overrides the config)");
  app.add_option("--out", o.out, "Output directory; default file locations live here");

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic zero-shot fixture");
  gen->add_option("--classes", o.classes, "Number of classes");
  gen->add_option("--seen", o.seen, "Number of seen (training) classes");
  gen->add_option("--samples", o.samples, "Samples per class and modality");
  gen->add_option("--spread", o.spread, "Per-coordinate feature noise");
  gen->add_option("--text-sources", o.text_sources, "Word-vector tables to write (1 or 2)");

  auto* embed = app.add_subcommand("embed", "Build per-class semantic codes");
  embed->add_option("--measure", o.measure, "Hierarchy measure: path or jc");
  embed->add_option("--text", o.text, "Text source: a or b");
  embed->add_flag("--grid", o.grid, "Write all text source x measure combinations");

  auto* train_cmd = app.add_subcommand("train", "Train the model");
  train_cmd->add_option("--max-iter", o.max_iter, "Training iterations");
  train_cmd->add_option("--batch-size", o.batch_size, "Batch size");
  train_cmd->add_option("--n-critic", o.n_critic, "Critic steps per iteration");
  train_cmd->add_option("--lr", o.lr, "RMSprop learning rate");
  train_cmd->add_flag("--no-wd", o.no_wd, "Drop the sketch/image critic terms");
  train_cmd->add_flag("--no-cyc", o.no_cyc, "Drop the cycle-consistency terms");
  train_cmd->add_flag("--no-cls", o.no_cls, "Drop the classification terms");
  train_cmd->add_flag("--no-iml", o.no_iml, "Drop the identity-matching term");
  train_cmd->add_flag("--validate", o.validate, "Log test-split mAP after every epoch");

  auto* eval = app.add_subcommand("eval", "Evaluate retrieval on the test split");
  eval->add_option("--metric", o.metric, "euclidean or cosine");
  eval->add_option("--map-mode", o.map_mode, "class or query");
  eval->add_option("--k", o.k, "Cutoff for precision@k");
  eval->add_flag("--dump-rankings", o.dump_rankings, "Write every ranked list as CSV");
  eval->add_flag("--dump-codes", o.dump_codes, "Write query and gallery codes as CSV");

  auto* retrieve_cmd = app.add_subcommand("retrieve", "Top-k gallery items for chosen sketches");
  retrieve_cmd->add_option("--query", o.queries, "Query sketch id (repeatable)");
  retrieve_cmd->add_option("--k", o.k, "Items per query");
  retrieve_cmd->add_option("--metric", o.metric, "euclidean or cosine");

  for (auto* sub : {gen, embed, train_cmd, eval, retrieve_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    apply(o, config);
    std::vector<std::filesystem::path> written;
    if (gen->parsed()) {
      written = cmd_gen_synth(config);
    } else if (embed->parsed()) {
      written = cmd_embed(config);
    } else if (train_cmd->parsed()) {
      written = cmd_train(config);
    } else if (eval->parsed()) {
      if (o.k) config.eval.options.precision_k = *o.k;
      written = cmd_eval(config);
    } else {
      if (o.k) config.retrieve.k = *o.k;
      written = cmd_retrieve(config);
    }
    for (const auto& path : written) out << "wrote " << path.string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"wadcmsn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace wadcmsn
