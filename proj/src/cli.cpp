#include "sgn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>

#include "sgn/config.hpp"
#include "sgn/data.hpp"
#include "sgn/errors.hpp"
#include "sgn/inference.hpp"
#include "sgn/metrics.hpp"
#include "sgn/training.hpp"

namespace sgn {

namespace {

const std::vector<std::string> kModelKeys = {
    "regions",   "feature_dim", "hidden_dim", "guide_dim",      "embed_dim",    "attr_dim",
    "input_dim", "vocab_size",  "variant",    "candidate_tanh", "dropout_rate", "max_decode_len"};
const std::vector<std::string> kTrainKeys = {
    "learning_rate", "batch_size", "epochs",   "optimizer",          "grad_clip_norm",
    "seed",          "max_steps",  "dropout_rate", "captions_per_record"};

std::vector<std::string> concat_keys(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& part : parts) {
    for (const auto& k : part) {
      if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    }
  }
  return out;
}

// One subcommand: every key is a `--key` flag and may also come from --config.
struct Command {
  CLI::App* app = nullptr;
  std::vector<std::string> keys;
  std::map<std::string, std::string> flags;
  std::string config_path;
  std::function<int(const RunConfig&, std::ostream&)> run;

  RunConfig resolve() const {
    RunConfig rc(keys);
    for (const auto& [k, v] : flags) {
      if (app->count("--" + k) > 0) rc.set(k, v);
    }
    if (!config_path.empty()) rc.merge_file(config_path);
    return rc;
  }
};

std::string require(const RunConfig& rc, const std::string& key) {
  auto v = rc.get(key);
  if (!v || v->empty()) throw ContractError("missing required setting '" + key + "'");
  return *v;
}

std::uint64_t seed_of(const RunConfig& rc) {
  const int s = rc.get_int("seed", 1);
  if (s < 0) throw ContractError("seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

ModelConfig model_config_from(const RunConfig& rc) {
  std::map<std::string, std::string> kv;
  for (const auto& k : kModelKeys) {
    if (auto v = rc.get(k)) kv[k] = *v;
  }
  return ModelConfig::from_key_values(kv);
}

TrainConfig train_config_from(const RunConfig& rc) {
  TrainConfig t;
  t.learning_rate = rc.get_double("learning_rate", t.learning_rate);
  t.batch_size = rc.get_int("batch_size", t.batch_size);
  t.epochs = rc.get_int("epochs", t.epochs);
  if (auto o = rc.get("optimizer")) t.optimizer = parse_optimizer(*o);
  t.grad_clip_norm = rc.get_double("grad_clip_norm", t.grad_clip_norm);
  t.seed = seed_of(rc);
  t.dropout_rate = rc.get_double("dropout_rate", t.dropout_rate);
  t.max_steps = rc.get_int("max_steps", t.max_steps);
  t.captions_per_record = rc.get_int("captions_per_record", t.captions_per_record);
  t.validate();
  return t;
}

// A dimension fixed by the dataset; an explicit setting must agree with it.
void pin_dim(const RunConfig& rc, const std::string& key, int& field, int actual) {
  if (rc.has(key) && field != actual) {
    throw ContractError("setting '" + key + "' = " + std::to_string(field) +
                        " disagrees with the dataset value " + std::to_string(actual));
  }
  field = actual;
}

const std::vector<SceneRecord>& split_of(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  if (split == "test") return ds.test;
  throw ContractError("split must be train, val or test; got '" + split + "'");
}

void check_compatible(const Checkpoint& ckpt, const Dataset& ds) {
  if (ckpt.config.vocab_size != ds.vocab.size()) {
    throw ContractError("checkpoint vocab_size " + std::to_string(ckpt.config.vocab_size) +
                        " does not match the dataset vocabulary (" +
                        std::to_string(ds.vocab.size()) + ")");
  }
}

std::string ids_to_sentence(const TokenSequence& ids, const Vocabulary& vocab) {
  return join(vocab.decode(ids));
}

int cmd_generate_data(const RunConfig& rc, std::ostream& out) {
  DatasetOptions o;
  o.n_train = rc.get_int("n_train", o.n_train);
  o.n_val = rc.get_int("n_val", o.n_val);
  o.n_test = rc.get_int("n_test", o.n_test);
  o.grid_rows = rc.get_int("grid_rows", o.grid_rows);
  o.grid_cols = rc.get_int("grid_cols", o.grid_cols);
  o.feature_dim = rc.get_int("feature_dim", o.feature_dim);
  o.attr_dim = rc.get_int("attr_dim", o.attr_dim);
  o.min_count = rc.get_int("min_count", o.min_count);
  o.noise_sigma = rc.get_double("noise_sigma", o.noise_sigma);
  o.seed = seed_of(rc);
  const std::string dir = require(rc, "out");
  Dataset ds = generate_dataset(o);
  write_dataset(ds, dir);
  out << "wrote " << ds.train.size() << " train, " << ds.val.size() << " val, " << ds.test.size()
      << " test records to " << dir << " (vocab " << ds.vocab.size() << ", attributes "
      << ds.attributes.words.size() << ")\n";
  return 0;
}

int cmd_train(const RunConfig& rc, std::ostream& out) {
  const Dataset ds = read_dataset(require(rc, "data"));
  const std::string ckpt_path = require(rc, "out");
  ModelConfig mc = model_config_from(rc);
  if (ds.train.empty()) throw ContractError("training split is empty");
  pin_dim(rc, "regions", mc.regions, static_cast<int>(ds.train.front().annotations.regions()));
  pin_dim(rc, "feature_dim", mc.feature_dim,
          static_cast<int>(ds.train.front().annotations.feature_dim()));
  pin_dim(rc, "attr_dim", mc.attr_dim, static_cast<int>(ds.attributes.words.size()));
  pin_dim(rc, "vocab_size", mc.vocab_size, ds.vocab.size());
  mc.validate();
  const TrainConfig tc = train_config_from(rc);

  std::ofstream log;
  if (auto path = rc.get("log")) {
    log.open(*path);
    if (!log) throw IoError("cannot write log: " + *path);
  }
  const std::vector<Example> examples = make_examples(ds.train, ds.vocab, tc.captions_per_record);
  ModelParams params = init_params(mc, tc.seed);
  TrainCallbacks cb;
  cb.on_step = [&](const LossLogEntry& e) {
    const std::string line = format_log_line(e);
    out << line << '\n';
    if (log.is_open()) log << line << '\n';
  };
  cb.on_epoch_end = [&](int, const ModelParams& p) { save_checkpoint(ckpt_path, mc, p); };
  train(examples, params, mc, tc, cb);
  return 0;
}

int cmd_evaluate(const RunConfig& rc, std::ostream& out) {
  const std::string cand_path = require(rc, "candidates");
  std::ifstream is(cand_path);
  if (!is) throw IoError("cannot open candidates: " + cand_path);
  std::vector<Tokens> candidates;
  for (std::string line; std::getline(is, line);) candidates.push_back(preprocess(line));
  const auto refs = read_references(require(rc, "references"));
  if (candidates.size() != refs.size()) {
    throw ContractError("candidates file has " + std::to_string(candidates.size()) +
                        " lines but references list " + std::to_string(refs.size()) + " images");
  }
  EvalCorpus corpus;
  for (std::size_t i = 0; i < refs.size(); ++i) corpus.push_back({candidates[i], refs[i]});
  out << kMetricHeader << '\n' << format_metric_row(evaluate_corpus(corpus)) << '\n';
  return 0;
}

int cmd_caption(const RunConfig& rc, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(require(rc, "checkpoint"));
  const Dataset ds = read_dataset(require(rc, "data"));
  check_compatible(ckpt, ds);
  const auto& records = split_of(ds, rc.get_or("split", "test"));
  const int beam = rc.get_int("beam", 0);
  const int max_len = rc.get_int("max_decode_len", ckpt.config.max_decode_len);
  if (max_len < 1) throw ContractError("max_decode_len must be >= 1");

  std::ofstream file;
  if (auto path = rc.get("out")) {
    file.open(*path);
    if (!file) throw IoError("cannot write captions: " + *path);
  }
  std::ostream& sink = file.is_open() ? static_cast<std::ostream&>(file) : out;
  for (const SceneRecord& r : records) {
    TokenSequence ids;
    if (beam > 0) {
      BeamOptions opt{beam, max_len, rc.get_bool("length_normalize", false)};
      ids = beam_search(r.annotations, r.attributes, ckpt.params, ckpt.config, opt).front().tokens;
    } else {
      ids = greedy_decode(r.annotations, r.attributes, ckpt.params, ckpt.config, max_len)
                .hypothesis.tokens;
    }
    sink << ids_to_sentence(ids, ds.vocab) << '\n';
  }
  return 0;
}

int cmd_gradcheck(const RunConfig& rc, std::ostream& out) {
  constexpr double kTolerance = 1e-5;
  const Variant variant = parse_variant(rc.get_or("variant", "sgn"));
  GradCheckInstance inst = make_gradcheck_instance(variant, seed_of(rc));
  inst.config.candidate_tanh = rc.get_bool("candidate_tanh", false);
  const double eps = rc.get_double("epsilon", 1e-5);
  const GradCheckReport report = grad_check(inst.params, inst.config, inst.example, eps);
  if (rc.get_bool("verbose", false)) {
    for (const BlockCheck& b : report.blocks) {
      out << b.name << " max_rel_err " << format_double(b.max_rel_err) << " entries " << b.checked
          << '\n';
    }
  }
  const bool ok = report.passed(kTolerance);
  out << (ok ? "PASS" : "FAIL") << " max_rel_err " << format_double(report.max_rel_err)
      << (ok ? " < " : " >= ") << "1e-5\n";
  return ok ? 0 : 1;
}

int cmd_inspect_attention(const RunConfig& rc, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(require(rc, "checkpoint"));
  const Dataset ds = read_dataset(require(rc, "data"));
  check_compatible(ckpt, ds);
  const auto& records = split_of(ds, rc.get_or("split", "test"));
  const int id = rc.get_int("record", records.empty() ? 0 : records.front().id);
  auto it = std::find_if(records.begin(), records.end(),
                         [&](const SceneRecord& r) { return r.id == id; });
  if (it == records.end()) throw ContractError("no record with id " + std::to_string(id));
  const int max_len = rc.get_int("max_decode_len", ckpt.config.max_decode_len);
  const GreedyResult g =
      greedy_decode(it->annotations, it->attributes, ckpt.params, ckpt.config, max_len);
  out << 't';
  for (int k = 0; k < ckpt.config.regions; ++k) out << ",k" << k;
  out << '\n';
  for (std::size_t t = 0; t < g.alphas.size(); ++t) {
    out << t;
    for (Eigen::Index k = 0; k < g.alphas[t].size(); ++k) out << ',' << format_double(g.alphas[t](k));
    out << '\n';
  }
  return 0;
}

Command& add_command(CLI::App& app, std::vector<std::unique_ptr<Command>>& commands,
                     const std::string& name, const std::string& description,
                     std::vector<std::string> keys,
                     std::function<int(const RunConfig&, std::ostream&)> run) {
  auto cmd = std::make_unique<Command>();
  cmd->app = app.add_subcommand(name, description);
  cmd->keys = std::move(keys);
  cmd->run = std::move(run);
  cmd->app->add_option("--config", cmd->config_path, "key=value file; flags override it");
  for (const auto& k : cmd->keys) {
    cmd->flags[k];
    cmd->app->add_option("--" + k, cmd->flags[k]);
  }
  commands.push_back(std::move(cmd));
  return *commands.back();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Guided attention captioning toolkit", "sgncap"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;

  add_command(app, commands, "generate-data", "write a synthetic scene/caption dataset",
              {"out", "n_train", "n_val", "n_test", "grid_rows", "grid_cols", "feature_dim",
               "attr_dim", "min_count", "noise_sigma", "seed"},
              cmd_generate_data);
  add_command(app, commands, "train", "train a model and checkpoint it every epoch",
              concat_keys({{"data", "out", "log"}, kModelKeys, kTrainKeys}), cmd_train);
  add_command(app, commands, "evaluate", "score candidate captions against references",
              {"candidates", "references", "seed"}, cmd_evaluate);
  add_command(app, commands, "caption", "caption every record of a split",
              {"checkpoint", "data", "split", "beam", "max_decode_len", "length_normalize", "out",
               "seed"},
              cmd_caption);
  add_command(app, commands, "gradcheck", "compare backward() with finite differences",
              {"variant", "seed", "candidate_tanh", "epsilon", "verbose"}, cmd_gradcheck);
  add_command(app, commands, "inspect-attention", "per-step attention weights as CSV",
              {"checkpoint", "data", "split", "record", "max_decode_len", "seed"},
              cmd_inspect_attention);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  for (const auto& cmd : commands) {
    if (!cmd->app->parsed()) continue;
    try {
      return cmd->run(cmd->resolve(), out);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return 2;
    }
  }
  return 1;
}

}  // namespace sgn
