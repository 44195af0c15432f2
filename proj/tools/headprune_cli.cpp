// headprune: train, score, prune and compare from the command line.
//
// Exit status: 0 on success, 1 for usage, configuration, data and file
// errors, 2 for anything else.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "headprune/headprune.hpp"

namespace fs = std::filesystem;
using namespace headprune;

namespace {

// Everything a run needs, resolved as profile defaults, then the JSON
// config file, then command-line flags.
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 7;
  std::string task = "idiom";
  std::size_t vocab_size = 256;  // vocabulary target size
  std::size_t subset = 0;        // balanced subset of the corpus; 0 keeps every row
  ModelConfig model = ModelConfig::desk(0);
  TrainConfig train = TrainConfig::desk();
  std::string score_split = "train";
  std::string reduction = "mean";
  double threshold = 0.0;
};

RunConfig profile_defaults(const std::string& name) {
  RunConfig c;
  c.profile = name;
  if (name == "desk") return c;
  if (name == "paper") {
    c.model = ModelConfig::paper(0);
    c.train = TrainConfig::paper();
    c.vocab_size = 8192;
    return c;
  }
  throw UsageError("unknown profile '" + name + "' (expected desk or paper)");
}

Json to_json(const RunConfig& c) {
  Json model = headprune::to_json(c.model);
  model.erase("vocab_size");
  Json train = headprune::to_json(c.train);
  train.erase("seed");
  return {{"profile", c.profile},
          {"seed", c.seed},
          {"task", c.task},
          {"vocab_size", c.vocab_size},
          {"subset", c.subset},
          {"model", model},
          {"train", train},
          {"scoring", {{"split", c.score_split}, {"reduction", c.reduction}}},
          {"prune", {{"threshold", c.threshold}}}};
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path + " is not valid JSON: " + e.what());
  }
}

/// Applies a config document. The profile key, if present, is applied first
/// so the rest of the file overrides it.
void apply_config(const Json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.contains("profile")) {
    if (!j["profile"].is_string()) throw ConfigError("field profile must be a string");
    c = profile_defaults(j["profile"].get<std::string>());
  }
  auto string_field = [](std::string& target, const std::string& name) -> detail::FieldReader {
    return [&target, name](const Json& v) {
      if (!v.is_string()) throw ConfigError("field " + name + " must be a string");
      target = v.get<std::string>();
    };
  };
  detail::read_object(
      j, "config",
      {{"profile", [](const Json&) {}},
       {"seed", detail::count_field(c.seed, "seed")},
       {"task", string_field(c.task, "task")},
       {"vocab_size", detail::count_field(c.vocab_size, "vocab_size")},
       {"subset", detail::count_field(c.subset, "subset")},
       {"model",
        [&](const Json& v) {
          if (v.contains("vocab_size")) throw ConfigError("model.vocab_size is derived from the vocabulary; set vocab_size");
          read_json(v, c.model, "model");
        }},
       {"train",
        [&](const Json& v) {
          if (v.contains("seed")) throw ConfigError("train.seed is set by the top-level seed field");
          read_json(v, c.train, "train");
        }},
       {"scoring",
        [&](const Json& v) {
          detail::read_object(v, "scoring",
                              {{"split", string_field(c.score_split, "scoring.split")},
                               {"reduction", string_field(c.reduction, "scoring.reduction")}});
        }},
       {"prune", [&](const Json& v) {
          detail::read_object(v, "prune", {{"threshold", detail::real_field(c.threshold, "prune.threshold")}});
        }}});
}

void validate(const RunConfig& c) {
  TaskSpec::parse(c.task);
  parse_data_split(c.score_split);
  parse_reduction(c.reduction);
  if (!(c.threshold >= 0.0)) throw UsageError("prune.threshold must be >= 0");
  if (c.subset % 2 != 0) throw UsageError("subset must be even");
  c.train.validate();
  ModelConfig probe = c.model;
  probe.vocab_size = 1;
  probe.validate();
}

void write_json(const Json& j, const fs::path& path) { write_text_file(j.dump(2) + "\n", path.string()); }

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

/// Config echo next to an output: <dir>/<command>.config.json.
void echo_config(const std::string& command, const Json& resolved, const fs::path& dir) {
  fs::create_directories(dir.empty() ? fs::path(".") : dir);
  write_json(resolved, (dir.empty() ? fs::path(".") : dir) / (command + ".config.json"));
}

// Shared flags that override the run configuration.
struct Overrides {
  std::string config_path;
  std::string profile = "desk";
  std::uint64_t seed = 7;
  std::string task = "idiom";
  std::size_t vocab_size = 256;
  std::size_t subset = 0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  std::size_t patience = 10;
  std::string split = "train";
  std::string reduction = "mean";
  double threshold = 0.0;
  std::map<std::string, CLI::Option*> opts;

  void add_common(CLI::App* app) {
    opts["config"] = app->add_option("--config", config_path,
                                     "JSON run config (default: $HEADPRUNE_CONFIG if set)");
    opts["profile"] = app->add_option("--profile", profile, "Hyperparameter profile: desk or paper");
    opts["seed"] = app->add_option("--seed", seed, "Run seed (splits, initialization, batch order)");
    opts["task"] = app->add_option("--task", task, "Label column: idiom or metaphor");
    opts["subset"] = app->add_option("--subset", subset, "Draw a balanced subset of this many rows first; 0 keeps all");
  }
  void add_training(CLI::App* app) {
    opts["vocab-size"] = app->add_option("--vocab-size", vocab_size, "Vocabulary target size");
    opts["lr"] = app->add_option("--lr", learning_rate, "Learning rate (paper profile: 2e-5)");
    opts["batch-size"] = app->add_option("--batch-size", batch_size, "Mini-batch size");
    opts["epochs"] = app->add_option("--epochs", epochs, "Maximum epochs");
    opts["patience"] = app->add_option("--patience", patience, "Early-stopping patience in epochs");
  }
  void add_scoring(CLI::App* app) {
    opts["split"] = app->add_option("--split", split, "Split to score on: train, validation or test");
    opts["reduction"] = app->add_option("--reduction", reduction, "Per-example reduction: mean or sum");
  }
  void add_threshold(CLI::App* app) {
    opts["threshold"] = app->add_option("--threshold", threshold, "Prune heads with score <= threshold");
  }

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }

  RunConfig resolve() const {
    RunConfig c = profile_defaults(given("profile") ? profile : "desk");
    std::string path = config_path;
    if (!given("config")) {
      if (const char* env = std::getenv("HEADPRUNE_CONFIG"); env && *env) path = env;
    }
    if (!path.empty()) apply_config(read_json_file(path), c);
    if (given("profile") && c.profile != profile) {
      // An explicit --profile wins over the file's profile, but keeps the file's other fields.
      RunConfig base = profile_defaults(profile);
      Json file = path.empty() ? Json::object() : read_json_file(path);
      file.erase("profile");
      apply_config(file, base);
      c = base;
    }
    if (given("seed")) c.seed = seed;
    if (given("task")) c.task = task;
    if (given("subset")) c.subset = subset;
    if (given("vocab-size")) c.vocab_size = vocab_size;
    if (given("lr")) c.train.learning_rate = learning_rate;
    if (given("batch-size")) c.train.batch_size = batch_size;
    if (given("epochs")) c.train.max_epochs = epochs;
    if (given("patience")) c.train.patience = patience;
    if (given("split")) c.score_split = split;
    if (given("reduction")) c.reduction = reduction;
    if (given("threshold")) c.threshold = threshold;
    c.train.seed = c.seed;
    validate(c);
    return c;
  }
};

std::vector<CorpusRecord> read_corpus(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("corpus file not found: " + path);
  return load_corpus(path);
}

/// Corpus -> optional balanced subset -> train/validation/test.
CorpusSplits prepare_splits(const std::vector<CorpusRecord>& corpus, const RunConfig& c) {
  if (c.subset == 0) return carve_splits(corpus, c.seed);
  return carve_splits(balanced_subset(corpus, TaskSpec::parse(c.task), c.subset, c.seed), c.seed);
}

Checkpoint read_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  return load_checkpoint(path);
}

std::vector<Example> examples_for(const Checkpoint& ckpt, const std::vector<CorpusRecord>& corpus,
                                  const RunConfig& c, DataSplit split) {
  const CorpusSplits splits = prepare_splits(corpus, c);
  const auto& rows = splits.get(split);
  if (rows.empty()) throw DataError(std::string("split '") + to_string(split) + "' is empty");
  return encode_examples(rows, ckpt.vocabulary, ckpt.task, ckpt.model.config().max_len);
}

/// The run config used to read data for an existing checkpoint: the
/// checkpoint's seed and task unless the caller overrides them.
RunConfig config_for_checkpoint(const Overrides& o, const Checkpoint& ckpt) {
  RunConfig c = o.resolve();
  const bool from_file = !o.config_path.empty() || std::getenv("HEADPRUNE_CONFIG") != nullptr;
  if (!o.given("seed") && !from_file) c.seed = ckpt.train_config.seed;
  if (!o.given("task") && !from_file) c.task = ckpt.task.name();
  return c;
}

void warn_if_other_corpus(const Checkpoint& ckpt, const std::vector<CorpusRecord>& corpus) {
  if (ckpt.metadata.corpus_fingerprint != 0 && ckpt.metadata.corpus_fingerprint != corpus_fingerprint(corpus)) {
    std::cerr << "warning: corpus differs from the one this checkpoint was trained on\n";
  }
}

// ---------------------------------------------------------------------------

int cmd_gen_data(std::size_t n, double rate, std::uint64_t seed, const std::string& out) {
  const auto corpus = make_synthetic_corpus(n, rate, seed);
  ensure_parent(out);
  write_corpus(corpus, out);
  echo_config("gen-data", {{"n", n}, {"marker_rate", rate}, {"seed", seed}, {"out", out}},
              fs::path(out).parent_path());
  std::size_t pos = 0;
  for (const auto& r : corpus) pos += r.idiom ? 1 : 0;
  std::printf("wrote %zu rows (%zu positive, %zu negative) to %s\n", corpus.size(), pos, corpus.size() - pos,
              out.c_str());
  return 0;
}

int cmd_train(const Overrides& o, const std::string& corpus_path, const std::string& out_dir, bool quiet) {
  const RunConfig c = o.resolve();
  const auto corpus = read_corpus(corpus_path);
  const TaskSpec task = TaskSpec::parse(c.task);
  const CorpusSplits splits = prepare_splits(corpus, c);
  const Vocabulary vocab = build_vocab(splits.train, c.vocab_size);
  ModelConfig mc = c.model;
  mc.vocab_size = vocab.size();
  auto encode = [&](const std::vector<CorpusRecord>& rows) { return encode_examples(rows, vocab, task, mc.max_len); };
  const auto train_set = encode(splits.train);
  const auto val_set = encode(splits.validation);

  TrainResult result = train(Model(mc, c.seed), train_set, val_set, c.train);
  if (!quiet) {
    for (const auto& r : result.fit.history) {
      std::printf("epoch %2zu  train_loss %.6f  val_loss %.6f  val_acc %.4f\n", r.epoch, r.train_loss, r.val_loss,
                  r.val_accuracy);
    }
  }
  std::printf("best epoch %zu (val_loss %.6f)%s\n", result.fit.best_epoch, result.fit.best_val_loss,
              result.fit.stopped_early ? ", stopped early" : "");

  fs::create_directories(out_dir);
  const Checkpoint ckpt{std::move(result.model), vocab, task, c.train,
                        {result.fit.best_epoch, result.fit.best_val_loss, corpus_fingerprint(corpus)}};
  save_checkpoint(ckpt, (fs::path(out_dir) / "checkpoint.bin").string());
  write_text_file(history_csv(result.fit.history), (fs::path(out_dir) / "history.csv").string());
  Json echo = to_json(c);
  echo["corpus"] = corpus_path;
  write_json(echo, fs::path(out_dir) / "config.json");
  return 0;
}

int cmd_score(const Overrides& o, const std::string& ckpt_path, const std::string& corpus_path,
              const std::string& out) {
  const Checkpoint ckpt = read_checkpoint(ckpt_path);
  const RunConfig c = config_for_checkpoint(o, ckpt);
  const auto corpus = read_corpus(corpus_path);
  warn_if_other_corpus(ckpt, corpus);
  const DataSplit split = parse_data_split(c.score_split);
  const auto examples = examples_for(ckpt, corpus, c, split);
  ScoreOptions opts;
  opts.reduction = parse_reduction(c.reduction);
  opts.source_split = to_string(split);
  const ImportanceGrid grid = score_heads(ckpt.model, examples, ckpt.task, opts);
  ensure_parent(out);
  write_grid_csv(grid, out);
  std::size_t zeros = 0;
  for (double s : grid.scores) zeros += s == 0.0 ? 1 : 0;
  echo_config("score-heads",
              {{"checkpoint", ckpt_path}, {"corpus", corpus_path}, {"out", out}, {"seed", c.seed},
               {"subset", c.subset}, {"split", c.score_split}, {"reduction", c.reduction}},
              fs::path(out).parent_path());
  std::printf("scored %zux%zu heads on %zu %s examples; %zu zero scores\n", grid.layers, grid.heads,
              grid.n_examples, opts.source_split.c_str(), zeros);
  return 0;
}

int cmd_prune(const Overrides& o, const std::string& ckpt_path, const std::string& scores_path,
              const std::string& out, const std::string& report_path) {
  const RunConfig c = o.resolve();
  Checkpoint ckpt = read_checkpoint(ckpt_path);
  if (!fs::exists(scores_path)) throw UsageError("scores file not found: " + scores_path);
  const ImportanceGrid grid = load_grid_csv(scores_path);
  PruneResult result = prune(ckpt.model, grid, c.threshold);
  ckpt.model = std::move(result.model);
  ensure_parent(out);
  save_checkpoint(ckpt, out);
  const std::string report_out = report_path.empty() ? out + ".report.json" : report_path;
  ensure_parent(report_out);
  write_json(to_json(result.report), report_out);
  echo_config("prune",
              {{"checkpoint", ckpt_path}, {"scores", scores_path}, {"threshold", c.threshold}, {"out", out},
               {"report", report_out}},
              fs::path(out).parent_path());
  std::printf("%zu heads pruned at threshold %g; %zu of %zu heads retained\n", result.report.pruned_heads.size(),
              c.threshold, result.report.retained_count, result.report.total_count);
  return 0;
}

int cmd_eval(const Overrides& o, const std::string& ckpt_path, const std::string& corpus_path,
             const std::string& split_name, const std::string& json_out) {
  const Checkpoint ckpt = read_checkpoint(ckpt_path);
  const RunConfig c = config_for_checkpoint(o, ckpt);
  const auto corpus = read_corpus(corpus_path);
  warn_if_other_corpus(ckpt, corpus);
  const auto examples = examples_for(ckpt, corpus, c, parse_data_split(split_name));
  const EvalReport report = evaluate(ckpt.model, examples, ckpt.task.name());
  std::cout << render_metrics_table(report, "Model");
  if (!json_out.empty()) {
    ensure_parent(json_out);
    write_json(to_json(report), json_out);
    echo_config("eval", {{"checkpoint", ckpt_path}, {"corpus", corpus_path}, {"split", split_name}, {"seed", c.seed}},
                fs::path(json_out).parent_path());
  }
  return 0;
}

struct CompareArgs {
  std::string original, pruned, corpus, split = "test", json_out, summary, history, scores, prune_report;
};

int cmd_compare(const Overrides& o, const CompareArgs& a) {
  const Checkpoint original = read_checkpoint(a.original);
  const Checkpoint pruned = read_checkpoint(a.pruned);
  const RunConfig c = config_for_checkpoint(o, original);
  const auto corpus = read_corpus(a.corpus);
  warn_if_other_corpus(original, corpus);
  const auto examples = examples_for(original, corpus, c, parse_data_split(a.split));
  const Comparison cmp = compare(original, pruned, examples, original.task);
  std::cout << render_comparison_table(cmp.original, cmp.pruned);
  std::printf("active heads: %zu -> %zu\n", cmp.original_heads, cmp.pruned_heads);

  if (!a.json_out.empty()) {
    ensure_parent(a.json_out);
    write_json(to_json(cmp), a.json_out);
  }
  if (!a.summary.empty()) {
    RunSummaryInput in;
    // Describe the run that produced the checkpoint, not this command's defaults.
    RunConfig trained = c;
    trained.model = original.model.config();
    trained.train = original.train_config;
    trained.seed = original.train_config.seed;
    trained.task = original.task.name();
    in.config = to_json(trained);
    if (!a.history.empty()) {
      if (!fs::exists(a.history)) throw UsageError("history file not found: " + a.history);
      std::ifstream h(a.history);
      std::string line;
      std::getline(h, line);
      while (std::getline(h, line)) {
        EpochRecord r;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf", &r.epoch, &r.train_loss, &r.val_loss, &r.val_accuracy) != 4) {
          throw DataError("malformed history row: " + line);
        }
        in.history.push_back(r);
      }
    }
    if (!a.scores.empty()) {
      if (!fs::exists(a.scores)) throw UsageError("scores file not found: " + a.scores);
      ImportanceGrid g = load_grid_csv(a.scores);
      g.task = original.task.name();
      in.grids.emplace_back(fs::path(a.scores).filename().string(), g);
    }
    if (!a.prune_report.empty()) in.prune_report = prune_report_from_json(read_json_file(a.prune_report));
    in.comparison = cmp;
    ensure_parent(a.summary);
    write_text_file(write_run_summary(in), a.summary);
  }
  const fs::path dir = !a.summary.empty() ? fs::path(a.summary).parent_path()
                       : !a.json_out.empty() ? fs::path(a.json_out).parent_path()
                                             : fs::path();
  if (!a.summary.empty() || !a.json_out.empty()) {
    echo_config("compare",
                {{"original", a.original}, {"pruned", a.pruned}, {"corpus", a.corpus}, {"split", a.split},
                 {"seed", c.seed}, {"subset", c.subset}},
                dir);
  }
  return 0;
}

int cmd_heatmap(const std::string& scores, const std::string& out, bool no_annotate, const std::string& scale,
                std::optional<double> floor, const std::string& title) {
  if (!fs::exists(scores)) throw UsageError("scores file not found: " + scores);
  HeatmapSpec spec;
  spec.grid = load_grid_csv(scores);
  spec.annotate = !no_annotate;
  spec.color_scale = parse_color_scale(scale);
  spec.log_floor = floor;
  spec.title = title;
  ensure_parent(out);
  render_heatmap(spec, out);
  echo_config("heatmap", {{"scores", scores}, {"out", out}, {"annotate", spec.annotate}, {"color_scale", scale}},
              fs::path(out).parent_path());
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-head importance scoring and pruning for transformer+BiLSTM classifiers", "headprune"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // gen-data
  std::size_t gen_n = 200;
  double gen_rate = 0.5;
  std::uint64_t gen_seed = 7;
  std::string gen_out = "corpus.tsv";
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic marker corpus (TSV)");
  gen->add_option("--n", gen_n, "Number of rows (even)");
  gen->add_option("--marker-rate", gen_rate, "Fraction of rows that contain the marker (positive class)");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output TSV path");

  // train
  Overrides train_o;
  std::string train_corpus, train_out = "run";
  bool train_quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier and write checkpoint.bin, history.csv, config.json");
  train_cmd->add_option("--corpus", train_corpus, "Corpus TSV")->required();
  train_cmd->add_option("--out-dir", train_out, "Output directory");
  train_cmd->add_flag("--quiet", train_quiet, "Only print the final summary line");
  train_o.add_common(train_cmd);
  train_o.add_training(train_cmd);

  // score-heads
  Overrides score_o;
  std::string score_ckpt, score_corpus, score_out = "scores.csv";
  auto* score_cmd = app.add_subcommand("score-heads", "Compute per-head importance and write layer,head,score CSV");
  score_cmd->add_option("--checkpoint", score_ckpt, "Trained checkpoint")->required();
  score_cmd->add_option("--corpus", score_corpus, "Corpus TSV")->required();
  score_cmd->add_option("--out", score_out, "Output CSV path");
  score_o.add_common(score_cmd);
  score_o.add_scoring(score_cmd);

  // prune
  Overrides prune_o;
  std::string prune_ckpt, prune_scores, prune_out = "pruned.bin", prune_report;
  auto* prune_cmd = app.add_subcommand("prune", "Gate off heads whose score is <= threshold");
  prune_cmd->add_option("--checkpoint", prune_ckpt, "Checkpoint to prune")->required();
  prune_cmd->add_option("--scores", prune_scores, "Importance CSV from score-heads")->required();
  prune_cmd->add_option("--out", prune_out, "Pruned checkpoint path");
  prune_cmd->add_option("--report", prune_report, "Prune report JSON path (default: <out>.report.json)");
  prune_o.add_threshold(prune_cmd);
  prune_o.opts["config"] = prune_cmd->add_option("--config", prune_o.config_path, "JSON run config");

  // eval
  Overrides eval_o;
  std::string eval_ckpt, eval_corpus, eval_split = "test", eval_json;
  auto* eval_cmd = app.add_subcommand("eval", "Print precision/recall/F1/accuracy and averages for one checkpoint");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--corpus", eval_corpus, "Corpus TSV")->required();
  eval_cmd->add_option("--eval-split", eval_split, "Split: train, validation or test");
  eval_cmd->add_option("--json", eval_json, "Also write the report as JSON");
  eval_o.add_common(eval_cmd);

  // compare
  Overrides cmp_o;
  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Evaluate original and pruned checkpoints side by side");
  cmp_cmd->add_option("--original", cmp.original, "Original checkpoint")->required();
  cmp_cmd->add_option("--pruned", cmp.pruned, "Pruned checkpoint")->required();
  cmp_cmd->add_option("--corpus", cmp.corpus, "Corpus TSV")->required();
  cmp_cmd->add_option("--eval-split", cmp.split, "Split: train, validation or test");
  cmp_cmd->add_option("--json", cmp.json_out, "Write the comparison as JSON");
  cmp_cmd->add_option("--summary", cmp.summary, "Write a Markdown run summary");
  cmp_cmd->add_option("--history", cmp.history, "history.csv to include in the summary");
  cmp_cmd->add_option("--scores", cmp.scores, "Importance CSV to include in the summary");
  cmp_cmd->add_option("--prune-report", cmp.prune_report, "Prune report JSON to include in the summary");
  cmp_o.add_common(cmp_cmd);

  // heatmap
  std::string heat_scores, heat_out = "heatmap.svg", heat_scale = "linear", heat_title = "Attention head importance";
  bool heat_plain = false;
  double heat_floor = 0.0;
  auto* heat_cmd = app.add_subcommand("heatmap", "Render an importance CSV as an SVG heatmap");
  heat_cmd->add_option("--scores", heat_scores, "Importance CSV")->required();
  heat_cmd->add_option("--out", heat_out, "Output SVG path");
  heat_cmd->add_option("--color-scale", heat_scale, "linear or log");
  auto* floor_opt = heat_cmd->add_option("--log-floor", heat_floor, "Value used for non-positive scores on the log scale");
  heat_cmd->add_option("--title", heat_title, "Chart title");
  heat_cmd->add_flag("--no-annotate", heat_plain, "Omit per-cell values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen) return cmd_gen_data(gen_n, gen_rate, gen_seed, gen_out);
    if (*train_cmd) return cmd_train(train_o, train_corpus, train_out, train_quiet);
    if (*score_cmd) return cmd_score(score_o, score_ckpt, score_corpus, score_out);
    if (*prune_cmd) return cmd_prune(prune_o, prune_ckpt, prune_scores, prune_out, prune_report);
    if (*eval_cmd) return cmd_eval(eval_o, eval_ckpt, eval_corpus, eval_split, eval_json);
    if (*cmp_cmd) return cmd_compare(cmp_o, cmp);
    if (*heat_cmd) {
      return cmd_heatmap(heat_scores, heat_out, heat_plain, heat_scale,
                         floor_opt->count() ? std::optional<double>(heat_floor) : std::nullopt, heat_title);
    }
  } catch (const UsageError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const CheckpointError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
