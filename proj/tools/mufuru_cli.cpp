// Command-line front end: dataset generation, training, gradient checking,
// reduction-equivalence checking, and operation-weight profiling.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mufuru/cells.hpp"
#include "mufuru/checkpoint.hpp"
#include "mufuru/gradcheck.hpp"
#include "mufuru/metrics.hpp"
#include "mufuru/tasks.hpp"
#include "mufuru/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mufuru;

namespace {

// Exit codes per failure class.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;  // config / argument errors
constexpr int kExitData = 3;    // dataset / parse errors
constexpr int kExitIo = 4;
constexpr int kExitCheck = 5;  // verification gate failed

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string task;  // logic | lm | classify
  CellKind cell = CellKind::Mufuru;
  std::vector<CompositionOp> ops;
  int hidden_size = 0;
  int embedding_size = 0;  // 0 = one-hot input
  std::string train_path, dev_path, test_path;
  TrainConfig train;
  int max_vocab = 10000;
  TokenLevel level = TokenLevel::Word;
  std::string out_dir = "out";
  json echo;  // effective configuration, for the summary
};

const std::set<std::string> kKnownKeys = {
    "task",       "cell",          "ops",        "hidden_size",
    "embedding_size", "data",      "epochs",     "batch_size",
    "learning_rate",  "seed",      "eval_every", "clip_norm",
    "truncation", "max_vocab",     "level",      "out_dir"};

template <typename T>
T field_as(const json& j, const std::string& key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + key + "' has the wrong type");
  }
}

RunConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKnownKeys.contains(key)) {
      throw ConfigError("unknown config field '" + key + "'");
    }
  }

  RunConfig cfg;
  cfg.task = field_as<std::string>(j, "task", "");
  if (cfg.task != "logic" && cfg.task != "lm" && cfg.task != "classify") {
    throw ConfigError("config field 'task' must be logic, lm or classify");
  }
  const auto cell_name = field_as<std::string>(j, "cell", "");
  const auto kind = cell_kind_from_name(cell_name);
  if (!kind) {
    throw ConfigError("config field 'cell' must be vanilla, gru or mufuru");
  }
  cfg.cell = *kind;

  if (cfg.cell == CellKind::Mufuru) {
    if (!j.contains("ops")) {
      throw ConfigError("config field 'ops' is required for a mufuru cell");
    }
    for (const auto& name : field_as<std::vector<std::string>>(j, "ops", {})) {
      const auto op = op_from_name(name);
      if (!op) throw ConfigError("config field 'ops' has unknown op '" + name + "'");
      cfg.ops.push_back(*op);
    }
    if (cfg.ops.empty()) {
      throw ConfigError("config field 'ops' must list at least one op");
    }
  } else if (j.contains("ops")) {
    throw ConfigError("config field 'ops' is only valid for a mufuru cell");
  }

  // task-dependent defaults, matching the experiment setups
  int default_hidden = 8, default_batch = 50, default_epochs = 100;
  int default_eval_every = 0;
  if (cfg.task == "lm") {
    default_hidden = 200;
    default_batch = 20;
    default_epochs = 10;
  } else if (cfg.task == "classify") {
    default_hidden = 100;
    default_batch = 25;
    default_epochs = 10;
    default_eval_every = 200;
  }

  cfg.hidden_size = field_as<int>(j, "hidden_size", default_hidden);
  cfg.embedding_size = field_as<int>(
      j, "embedding_size", cfg.task == "classify" ? cfg.hidden_size : 0);
  if (cfg.task == "logic" && cfg.embedding_size != 0) {
    throw ConfigError("config field 'embedding_size' must be 0 for the logic "
                      "task (inputs are one-hot)");
  }
  cfg.train.epochs = field_as<int>(j, "epochs", default_epochs);
  cfg.train.batch_size = field_as<int>(j, "batch_size", default_batch);
  cfg.train.learning_rate = field_as<double>(j, "learning_rate", 1e-3);
  cfg.train.seed = field_as<std::uint64_t>(j, "seed", 1);
  cfg.train.eval_every = field_as<int>(j, "eval_every", default_eval_every);
  cfg.train.clip_norm = field_as<double>(j, "clip_norm", 0.0);
  cfg.train.truncation = field_as<int>(j, "truncation", 32);
  cfg.max_vocab = field_as<int>(j, "max_vocab", 10000);
  const auto level = field_as<std::string>(j, "level", "word");
  if (level == "word") {
    cfg.level = TokenLevel::Word;
  } else if (level == "char") {
    cfg.level = TokenLevel::Char;
  } else {
    throw ConfigError("config field 'level' must be word or char");
  }
  cfg.out_dir = field_as<std::string>(j, "out_dir", "out");

  if (!j.contains("data") || !j.at("data").is_object()) {
    throw ConfigError("config field 'data' must be an object of file paths");
  }
  const json& data = j.at("data");
  for (const auto& [key, _] : data.items()) {
    if (key != "train" && key != "dev" && key != "valid" && key != "test") {
      throw ConfigError("unknown config field 'data." + key + "'");
    }
  }
  cfg.train_path = field_as<std::string>(data, "train", "");
  cfg.dev_path = field_as<std::string>(
      data, cfg.task == "lm" ? "valid" : "dev", "");
  cfg.test_path = field_as<std::string>(data, "test", "");
  if (cfg.train_path.empty()) {
    throw ConfigError("config field 'data.train' is required");
  }
  if (cfg.dev_path.empty()) {
    throw ConfigError(cfg.task == "lm"
                          ? "config field 'data.valid' is required"
                          : "config field 'data.dev' is required");
  }
  if ((cfg.task == "logic" || cfg.task == "lm") && cfg.test_path.empty()) {
    throw ConfigError("config field 'data.test' is required");
  }

  for (const std::string& p : {cfg.train_path, cfg.dev_path, cfg.test_path}) {
    if (!p.empty() && !fs::exists(p)) {
      throw IoError("dataset path does not exist: " + p);
    }
  }

  if (cfg.hidden_size < 1 || cfg.train.epochs < 1 || cfg.train.batch_size < 1 ||
      cfg.train.learning_rate <= 0.0 || cfg.train.truncation < 1 ||
      cfg.max_vocab < 1 || cfg.embedding_size < 0 ||
      cfg.train.eval_every < 0 || cfg.train.clip_norm < 0.0) {
    throw ConfigError("config has a non-positive field where a positive value "
                      "is required");
  }

  cfg.echo = {{"task", cfg.task},
              {"cell", cell_name},
              {"hidden_size", cfg.hidden_size},
              {"embedding_size", cfg.embedding_size},
              {"epochs", cfg.train.epochs},
              {"batch_size", cfg.train.batch_size},
              {"learning_rate", cfg.train.learning_rate},
              {"seed", cfg.train.seed},
              {"eval_every", cfg.train.eval_every},
              {"clip_norm", cfg.train.clip_norm},
              {"truncation", cfg.train.truncation},
              {"max_vocab", cfg.max_vocab},
              {"level", level},
              {"out_dir", cfg.out_dir},
              {"data", data}};
  if (cfg.cell == CellKind::Mufuru) {
    std::vector<std::string> names;
    for (CompositionOp op : cfg.ops) names.emplace_back(op_name(op));
    cfg.echo["ops"] = names;
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

std::int64_t total_parameter_count(const Cell& cell,
                                   std::span<const Tensor> extras) {
  std::int64_t n = cell.parameter_count();
  for (const Tensor& t : extras) n += t.size();
  return n;
}

json run_one_seed(const RunConfig& cfg, std::uint64_t seed,
                  const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto started = std::chrono::steady_clock::now();
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = seed;
  Rng rng(seed);

  json summary;
  summary["seed"] = seed;
  std::vector<MetricRow> history;
  Checkpoint ckpt;

  if (cfg.task == "logic") {
    LogicDatasets data;
    data.train = load_logic_file(cfg.train_path);
    data.dev = load_logic_file(cfg.dev_path);
    data.test = load_logic_file(cfg.test_path);
    Cell cell = make_cell(cfg.cell, {kLogicVocabSize, cfg.hidden_size},
                          cfg.ops, rng);
    ClassifierHead head = init_classifier_head(2, cfg.hidden_size, rng);
    LogicResult res = train_logic(cell, head, data, train_cfg);
    history = std::move(res.history);
    ckpt.cell = cell;
    ckpt.extras.emplace_back("head.w", head.w);
    ckpt.extras.emplace_back("head.b", head.b);
    const Tensor head_params[] = {head.w, head.b};
    summary["test_accuracy"] = res.test_accuracy;
    summary["train_accuracy"] = res.train_accuracy;
    summary["best_dev_accuracy"] = res.best_dev_accuracy;
    summary["steps"] = res.steps;
    summary["cell_parameter_count"] = cell.parameter_count();
    summary["parameter_count"] = total_parameter_count(cell, head_params);
  } else if (cfg.task == "lm") {
    TextCorpus corpus = load_text_corpus(cfg.train_path, cfg.dev_path,
                                         cfg.test_path, cfg.max_vocab,
                                         cfg.level);
    const int vocab = static_cast<int>(corpus.vocab.size());
    const int input = cfg.embedding_size > 0 ? cfg.embedding_size : vocab;
    Cell cell = make_cell(cfg.cell, {input, cfg.hidden_size}, cfg.ops, rng);
    LmHead head = init_lm_head(vocab, cfg.hidden_size, rng);
    std::optional<Embedding> emb;
    if (cfg.embedding_size > 0) {
      emb = init_embedding(vocab, cfg.embedding_size, rng);
    }
    LmResult res =
        train_lm(cell, head, emb ? &*emb : nullptr, corpus, train_cfg);
    NllResult test = lm_nll(cell, head, emb ? &*emb : nullptr, corpus.test,
                            vocab, train_cfg.batch_size, train_cfg.truncation);
    const double test_ppl = perplexity(test.total_nll, test.tokens);
    history = std::move(res.history);
    history.push_back({res.steps, train_cfg.epochs, "test",
                       test.total_nll / static_cast<double>(test.tokens),
                       test_ppl});
    ckpt.cell = cell;
    ckpt.extras.emplace_back("head.w", head.w);
    ckpt.extras.emplace_back("head.b", head.b);
    std::vector<Tensor> extra_params = {head.w, head.b};
    if (emb) {
      ckpt.extras.emplace_back("embedding.table", emb->table);
      extra_params.push_back(emb->table);
    }
    summary["test_perplexity"] = test_ppl;
    summary["best_valid_perplexity"] = res.best_valid_perplexity;
    summary["vocabulary_size"] = vocab;
    summary["steps"] = res.steps;
    summary["cell_parameter_count"] = cell.parameter_count();
    summary["parameter_count"] = total_parameter_count(cell, extra_params);
  } else {  // classify
    SequenceDataset train_ds =
        load_labeled_sequences(cfg.train_path, cfg.max_vocab, cfg.level);
    SequenceDataset dev_ds =
        load_labeled_sequences_with(cfg.dev_path, train_ds, cfg.level);
    const int vocab = static_cast<int>(train_ds.vocab.size());
    const int classes = static_cast<int>(train_ds.label_names.size());
    const int input = cfg.embedding_size > 0 ? cfg.embedding_size : vocab;
    Cell cell = make_cell(cfg.cell, {input, cfg.hidden_size}, cfg.ops, rng);
    ClassifierHead head = init_classifier_head(classes, cfg.hidden_size, rng);
    std::optional<Embedding> emb;
    if (cfg.embedding_size > 0) {
      emb = init_embedding(vocab, cfg.embedding_size, rng);
    }
    ClassifyResult res =
        train_classifier(cell, head, emb ? &*emb : nullptr, train_ds.items,
                         dev_ds.items, vocab, classes, train_cfg);
    history = std::move(res.history);
    summary["best_dev_accuracy"] = res.best_dev_accuracy;
    summary["dev_accuracy"] = res.best_dev_accuracy;
    if (!cfg.test_path.empty()) {
      SequenceDataset test_ds =
          load_labeled_sequences_with(cfg.test_path, train_ds, cfg.level);
      EvalResult ev = evaluate_classifier(cell, head, emb ? &*emb : nullptr,
                                          test_ds.items, vocab);
      history.push_back({res.steps, train_cfg.epochs, "test", ev.loss,
                         ev.accuracy});
      summary["test_accuracy"] = ev.accuracy;
    }
    ckpt.cell = cell;
    ckpt.extras.emplace_back("head.w", head.w);
    ckpt.extras.emplace_back("head.b", head.b);
    std::vector<Tensor> extra_params = {head.w, head.b};
    if (emb) {
      ckpt.extras.emplace_back("embedding.table", emb->table);
      extra_params.push_back(emb->table);
    }
    summary["classes"] = classes;
    summary["vocabulary_size"] = vocab;
    summary["steps"] = res.steps;
    summary["cell_parameter_count"] = ckpt.cell.parameter_count();
    summary["parameter_count"] = total_parameter_count(ckpt.cell, extra_params);
  }

  write_metrics_csv((out_dir / "metrics.csv").string(), history);
  save_checkpoint((out_dir / "checkpoint.bin").string(), ckpt);
  const auto elapsed = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  summary["wall_clock_seconds"] = elapsed;
  return summary;
}

// Lower-is-better for perplexity, higher for accuracy.
double seed_score(const json& summary, const std::string& task) {
  if (task == "lm") return -summary.at("test_perplexity").get<double>();
  if (summary.contains("test_accuracy")) {
    return summary.at("test_accuracy").get<double>();
  }
  return summary.at("dev_accuracy").get<double>();
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              int seeds, std::optional<std::string> out_override) {
  RunConfig cfg = parse_config(config_path);
  if (out_override) cfg.out_dir = *out_override;
  const std::uint64_t base_seed = seed.value_or(cfg.train.seed);
  if (seeds < 1) throw ArgumentError("--seeds must be >= 1");

  fs::create_directories(cfg.out_dir);
  json top;
  top["task"] = cfg.task;
  top["cell"] = std::string(cell_kind_name(cfg.cell));
  top["config"] = cfg.echo;
  top["config"]["seed"] = base_seed;

  std::vector<json> per_seed;
  int best_index = 0;
  for (int i = 0; i < seeds; ++i) {
    const std::uint64_t s = base_seed + static_cast<std::uint64_t>(i);
    const fs::path out = seeds == 1
                             ? fs::path(cfg.out_dir)
                             : fs::path(cfg.out_dir) / ("seed_" + std::to_string(s));
    json summary = run_one_seed(cfg, s, out);
    summary["out_dir"] = out.string();
    std::printf("seed %llu done:", static_cast<unsigned long long>(s));
    for (const char* key : {"test_accuracy", "test_perplexity"}) {
      if (summary.contains(key)) {
        std::printf(" %s=%.4f", key, summary.at(key).get<double>());
      }
    }
    std::printf(" (%.1fs)\n", summary.at("wall_clock_seconds").get<double>());
    per_seed.push_back(std::move(summary));
    if (seed_score(per_seed.back(), cfg.task) >
        seed_score(per_seed[best_index], cfg.task)) {
      best_index = i;
    }
  }

  top["per_seed"] = per_seed;
  top["best_seed"] = per_seed[best_index].at("seed");
  top["best_out_dir"] = per_seed[best_index].at("out_dir");
  for (const char* key :
       {"test_accuracy", "test_perplexity", "dev_accuracy",
        "best_dev_accuracy", "best_valid_perplexity", "train_accuracy",
        "parameter_count", "cell_parameter_count", "steps",
        "wall_clock_seconds", "vocabulary_size", "classes"}) {
    if (per_seed[best_index].contains(key)) {
      top[key] = per_seed[best_index].at(key);
    }
  }

  std::ofstream os(fs::path(cfg.out_dir) / "summary.json");
  if (!os) throw IoError("cannot write summary.json under " + cfg.out_dir);
  os << top.dump(2) << '\n';
  std::printf("summary: %s\n",
              (fs::path(cfg.out_dir) / "summary.json").c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-logic
// ---------------------------------------------------------------------------

int cmd_gen_logic(std::uint64_t seed, const std::string& out_dir) {
  fs::create_directories(out_dir);
  Rng rng(seed);
  LogicDatasets data = generate_logic_datasets(rng);
  save_logic_file((fs::path(out_dir) / "train.txt").string(), data.train);
  save_logic_file((fs::path(out_dir) / "dev.txt").string(), data.dev);
  save_logic_file((fs::path(out_dir) / "test.txt").string(), data.test);
  auto balance = [](const std::vector<LogicFormula>& split) {
    if (split.empty()) return 0.0;
    std::int64_t pos = 0;
    for (const LogicFormula& f : split) pos += f.label;
    return static_cast<double>(pos) / static_cast<double>(split.size());
  };
  std::printf("train: %zu formulae (%.3f true)\n", data.train.size(),
              balance(data.train));
  std::printf("dev:   %zu formulae (%.3f true)\n", data.dev.size(),
              balance(data.dev));
  std::printf("test:  %zu formulae (%.3f true)\n", data.test.size(),
              balance(data.test));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

// Self-test fixture: forward adds sum(t) but records no backward rule, so a
// nonzero weight makes the analytic gradient genuinely wrong.
Tensor broken_sum(Tape& tape, const Tensor& t) {
  Tensor out = tape.alloc({}, t.requires_grad());
  double acc = 0.0;
  for (double v : t.value()) acc += v;
  out.value()[0] = acc;
  tape.touch(out);
  return out;
}

std::vector<std::string> param_group_names(const Cell& cell) {
  switch (cell.kind()) {
    case CellKind::Vanilla:
      return {"w", "b"};
    case CellKind::Gru:
      return {"w_u", "b_u", "w_v", "b_v"};
    case CellKind::Mufuru: {
      std::vector<std::string> names = {"w_r", "b_r", "w_v", "b_v"};
      for (CompositionOp op : cell.ops()) {
        names.push_back("w_p[" + std::string(op_name(op)) + "]");
        names.push_back("b_p[" + std::string(op_name(op)) + "]");
      }
      return names;
    }
  }
  return {};
}

int cmd_gradcheck(const std::string& cell_choice, int input_size,
                  int state_size, std::uint64_t seed, int seeds,
                  double threshold, double inject_error) {
  std::vector<CellKind> kinds;
  if (cell_choice == "all") {
    kinds = {CellKind::Vanilla, CellKind::Gru, CellKind::Mufuru};
  } else {
    const auto kind = cell_kind_from_name(cell_choice);
    if (!kind) throw ArgumentError("unknown cell '" + cell_choice + "'");
    kinds = {*kind};
  }
  constexpr int kSteps = 5;
  double global_worst = 0.0;
  for (CellKind kind : kinds) {
    for (int i = 0; i < seeds; ++i) {
      const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
      Rng rng(s);
      Cell cell = make_cell(kind, {input_size, state_size},
                            kAllCompositionOps, rng);
      ClassifierHead head = init_classifier_head(2, state_size, rng);
      std::vector<Tensor> xs;
      for (int t = 0; t < kSteps; ++t) {
        xs.push_back(Tensor::uniform({input_size}, -1, 1, rng, false));
      }
      const int target = static_cast<int>(rng.below(2));
      std::vector<Tensor> params = cell.parameters();
      params.push_back(head.w);
      params.push_back(head.b);

      auto loss_fn = [&](Tape& tape) {
        Unrolled u = unroll(tape, cell, xs);
        Tensor logits = tape.linear(u.outputs.back(), head.w, head.b);
        Tensor loss = cross_entropy(tape, logits, target);
        if (inject_error != 0.0) {
          Tensor bad = tape.scale(broken_sum(tape, params[0]), inject_error);
          loss = tape.add(loss, bad);
        }
        return loss;
      };
      const auto errors = grad_check_per_param(loss_fn, params, 1e-5);

      std::vector<std::string> names = param_group_names(cell);
      names.push_back("head.w");
      names.push_back("head.b");
      double worst = 0.0;
      std::printf("gradcheck cell=%s seed=%llu\n",
                  std::string(cell_kind_name(kind)).c_str(),
                  static_cast<unsigned long long>(s));
      for (std::size_t p = 0; p < errors.size(); ++p) {
        std::printf("  %-18s %.3e\n", names[p].c_str(), errors[p]);
        worst = std::fmax(worst, errors[p]);
      }
      global_worst = std::fmax(global_worst, worst);
    }
  }
  std::printf("max relative error: %.3e (threshold %.1e)\n", global_worst,
              threshold);
  if (!(global_worst <= threshold)) {
    std::printf("FAIL: gradient check exceeded the threshold\n");
    return kExitCheck;
  }
  std::printf("OK\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// equivalence
// ---------------------------------------------------------------------------

void randomize_values(Tensor t, Rng& rng, double lo, double hi) {
  for (double& v : t.value()) v = rng.uniform(lo, hi);
}

int cmd_equivalence(std::uint64_t seed, int trials, int steps,
                    double threshold) {
  if (trials < 1) throw ArgumentError("--trials must be >= 1");
  Rng rng(seed);
  double worst_gru = 0.0, worst_vanilla = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(6));
    const int m = 1 + static_cast<int>(rng.below(6));
    CellShape shape{n, m};
    std::vector<Tensor> xs;
    for (int t = 0; t < steps; ++t) {
      xs.push_back(Tensor::uniform({n}, -2, 2, rng, false));
    }
    Tensor s0 = Tensor::uniform({m}, -1, 1, rng, false);
    {
      GRUParams g = init_gru(shape, rng);
      randomize_values(g.b_u, rng, -1, 1);
      randomize_values(g.b_v, rng, -1, 1);
      Cell gru_cell{shape, g};
      Cell mapped{shape, map_gru_to_mufuru(g)};
      Tape tape(false);
      Unrolled a = unroll(tape, gru_cell, xs, s0);
      Unrolled b = unroll(tape, mapped, xs, s0);
      for (int t = 0; t < steps; ++t) {
        for (std::int64_t d = 0; d < a.states[t].size(); ++d) {
          worst_gru = std::fmax(
              worst_gru, std::fabs(a.states[t].at(d) - b.states[t].at(d)));
        }
      }
    }
    {
      VanillaParams vp = init_vanilla(shape, rng);
      randomize_values(vp.b, rng, -1, 1);
      Cell vanilla_cell{shape, vp};
      Cell mapped{shape, map_vanilla_to_mufuru(vp)};
      Tape tape(false);
      Unrolled a = unroll(tape, vanilla_cell, xs, s0);
      UnrollOptions opts;
      opts.force_reset_one = true;
      Unrolled b = unroll(tape, mapped, xs, s0, opts);
      for (int t = 0; t < steps; ++t) {
        for (std::int64_t d = 0; d < a.states[t].size(); ++d) {
          worst_vanilla = std::fmax(
              worst_vanilla, std::fabs(a.states[t].at(d) - b.states[t].at(d)));
        }
      }
    }
  }
  std::printf("gru->mufuru{keep,replace}:        max deviation %.3e over %d "
              "trials x %d steps\n",
              worst_gru, trials, steps);
  std::printf("vanilla->mufuru{replace}+reset1:  max deviation %.3e over %d "
              "trials x %d steps\n",
              worst_vanilla, trials, steps);
  if (!(worst_gru <= threshold) || !(worst_vanilla <= threshold)) {
    std::printf("FAIL: reduction deviation exceeded %.1e\n", threshold);
    return kExitCheck;
  }
  std::printf("OK\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// op-weights
// ---------------------------------------------------------------------------

int cmd_op_weights(const std::string& checkpoint_path,
                   const std::string& data_path, const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.cell.kind() != CellKind::Mufuru) {
    throw ArgumentError("op-weights requires a mufuru checkpoint, got " +
                        std::string(cell_kind_name(ckpt.cell.kind())));
  }
  const auto formulae = load_logic_file(data_path);
  const auto sequences = logic_to_sequences(formulae);
  std::vector<std::string> names;
  for (int i = 0; i < kLogicVocabSize; ++i) {
    names.emplace_back(1, logic_symbol(static_cast<LogicToken>(i)));
  }
  OpWeightProfile profile = op_weight_profile(ckpt.cell, sequences, names);
  write_profile_csv(out_path, profile);
  std::printf("wrote %s (%zu tokens x %zu ops)\n", out_path.c_str(),
              profile.tokens.size(), profile.ops.size());
  return kExitOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const ArgumentError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const ParseError*>(&e)) return kExitData;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const CheckError*>(&e)) return kExitCheck;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-Function Recurrent Unit toolkit"};
  app.require_subcommand(1);

  // gen-logic
  auto* gen = app.add_subcommand(
      "gen-logic", "Generate the propositional-logic datasets");
  std::uint64_t gen_seed = 1;
  std::string gen_out = ".";
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory");

  // train
  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  std::string config_path;
  train->add_option("--config", config_path, "Config JSON path")->required();
  std::uint64_t train_seed = 0;
  bool has_seed = false;
  train->add_option_function<std::uint64_t>(
      "--seed",
      [&](const std::uint64_t& v) {
        train_seed = v;
        has_seed = true;
      },
      "Override the config seed");
  int train_seeds = 1;
  train->add_option("--seeds", train_seeds,
                    "Run this many consecutive seeds and report the best");
  std::string train_out;
  train->add_option("--out", train_out, "Override the config output directory");

  // gradcheck
  auto* gc = app.add_subcommand(
      "gradcheck", "Check analytic gradients against finite differences");
  std::string gc_cell = "all";
  int gc_n = 4, gc_m = 4, gc_seeds = 1;
  std::uint64_t gc_seed = 1;
  double gc_threshold = 1e-4, gc_inject = 0.0;
  gc->add_option("--cell", gc_cell, "vanilla|gru|mufuru|all");
  gc->add_option("--input-size", gc_n, "Input size N");
  gc->add_option("--state-size", gc_m, "State size M");
  gc->add_option("--seed", gc_seed, "Base seed");
  gc->add_option("--seeds", gc_seeds, "Number of consecutive seeds");
  gc->add_option("--threshold", gc_threshold, "Maximum relative error");
  gc->add_option("--inject-error", gc_inject,
                 "Self-test fixture: corrupt the backward pass by this weight");

  // equivalence
  auto* eq = app.add_subcommand(
      "equivalence", "Verify the GRU and tanh-cell reduction mappings");
  std::uint64_t eq_seed = 1;
  int eq_trials = 100, eq_steps = 20;
  double eq_threshold = 1e-10;
  eq->add_option("--seed", eq_seed, "Base seed");
  eq->add_option("--trials", eq_trials, "Random instances per reduction");
  eq->add_option("--steps", eq_steps, "Trajectory length");
  eq->add_option("--threshold", eq_threshold, "Maximum absolute deviation");

  // op-weights
  auto* ow = app.add_subcommand(
      "op-weights", "Average operation weights per input token");
  std::string ow_ckpt, ow_data, ow_out = "op_weights.csv";
  ow->add_option("--checkpoint", ow_ckpt, "MuFuRU checkpoint")->required();
  ow->add_option("--data", ow_data, "Logic dataset file")->required();
  ow->add_option("--out", ow_out, "Output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_logic(gen_seed, gen_out);
    if (train->parsed()) {
      return cmd_train(config_path,
                       has_seed ? std::optional<std::uint64_t>(train_seed)
                                : std::nullopt,
                       train_seeds,
                       train_out.empty() ? std::nullopt
                                         : std::optional<std::string>(train_out));
    }
    if (gc->parsed()) {
      return cmd_gradcheck(gc_cell, gc_n, gc_m, gc_seed, gc_seeds, gc_threshold,
                           gc_inject);
    }
    if (eq->parsed()) {
      return cmd_equivalence(eq_seed, eq_trials, eq_steps, eq_threshold);
    }
    if (ow->parsed()) return cmd_op_weights(ow_ckpt, ow_data, ow_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  }
  return kExitOk;
}
