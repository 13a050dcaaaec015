#include "sgn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sgn/config.hpp"

namespace sgn {

std::string to_string(OptimizerKind o) { return o == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ContractError("optimizer must be sgd or adam; got '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ContractError("learning_rate must be a finite value >= 0");
  }
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (max_steps < 0) throw ContractError("max_steps must be >= 0");
  if (captions_per_record < 0) throw ContractError("captions_per_record must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ContractError("dropout_rate must lie in [0, 1)");
  }
}

namespace {

template <typename T>
std::vector<T*> blocks_of(ModelParamsT<T>& p) {
  std::vector<T*> out;
  for_each_param(p, [&](const std::string&, T& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> blocks_of(const ModelParams& p) {
  std::vector<const Matrix*> out;
  for_each_param(p, [&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

}  // namespace

NllSum nll_sum(const std::vector<Tensor>& logits, const TokenSequence& targets) {
  if (logits.size() != targets.size()) {
    throw ContractError("nll: " + std::to_string(logits.size()) + " logit vectors for " +
                        std::to_string(targets.size()) + " targets");
  }
  NllSum out;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (targets[t] == kPadId) continue;
    Tensor term = entry(log_softmax(logits[t]), targets[t]);
    out.total = out.tokens == 0 ? term : add(out.total, term);
    ++out.tokens;
  }
  if (out.tokens == 0) throw ContractError("nll: every target is padding");
  out.total = scale(out.total, -1.0);
  return out;
}

Tensor nll_loss(const std::vector<Tensor>& logits, const TokenSequence& targets) {
  NllSum s = nll_sum(logits, targets);
  return scale(s.total, 1.0 / s.tokens);
}

double example_loss(const ModelParams& params, const ModelConfig& config, const Example& example) {
  Tape tape;
  tape.set_recording(false);
  BoundParams bound = bind(tape, params);
  ImageInputs image = place_inputs(tape, example.annotations, example.attributes, config);
  SequenceOutput seq = forward_sequence(image, example.caption, bound, config);
  return nll_loss(seq.logits, seq.targets).scalar();
}

double mean_loss(const ModelParams& params, const ModelConfig& config,
                 std::span<const Example> examples) {
  double total = 0.0;
  long tokens = 0;
  for (const Example& ex : examples) {
    const long n = static_cast<long>(ex.caption.size()) + 1;
    total += example_loss(params, config, ex) * static_cast<double>(n);
    tokens += n;
  }
  return tokens > 0 ? total / static_cast<double>(tokens) : 0.0;
}

double accumulate_gradients(const ModelParams& params, const ModelConfig& config,
                            std::span<const Example> batch, ModelParams& grads,
                            const Dropout* dropout) {
  long total_tokens = 0;
  for (const Example& ex : batch) total_tokens += static_cast<long>(ex.caption.size()) + 1;
  if (total_tokens == 0) throw ContractError("accumulate_gradients: empty batch");
  const double inv = 1.0 / static_cast<double>(total_tokens);

  std::vector<Matrix*> grad_blocks = blocks_of(grads);
  double loss = 0.0;
  for (const Example& ex : batch) {
    Tape tape;
    BoundParams bound = bind(tape, params);
    ImageInputs image = place_inputs(tape, ex.annotations, ex.attributes, config);
    SequenceOutput seq = forward_sequence(image, ex.caption, bound, config, dropout);
    NllSum s = nll_sum(seq.logits, seq.targets);
    Tensor scaled = scale(s.total, inv);
    loss += scaled.scalar();
    tape.backward(scaled);
    std::vector<Tensor*> bound_blocks = blocks_of(bound);
    if (bound_blocks.size() != grad_blocks.size()) {
      throw ContractError("gradient buffer does not match the parameter layout");
    }
    for (std::size_t b = 0; b < bound_blocks.size(); ++b) {
      *grad_blocks[b] += tape.grad(*bound_blocks[b]);
    }
  }
  return loss;
}

double global_norm(const ModelParams& grads) {
  double sq = 0.0;
  for_each_param(grads, [&](const std::string&, const Matrix& m) { sq += m.squaredNorm(); });
  return std::sqrt(sq);
}

Optimizer::Optimizer(const TrainConfig& config, const ModelParams& params) : config_(config) {
  if (config_.optimizer == OptimizerKind::kAdam) {
    first_moment_ = zeros_like(params);
    second_moment_ = zeros_like(params);
  }
}

void Optimizer::step(ModelParams& params, ModelParams& grads) {
  if (config_.grad_clip_norm > 0.0) {
    const double norm = global_norm(grads);
    if (norm > config_.grad_clip_norm) {
      const double s = config_.grad_clip_norm / norm;
      for_each_param(grads, [&](const std::string&, Matrix& m) { m *= s; });
    }
  }
  ++steps_;
  std::vector<Matrix*> p = blocks_of(params);
  std::vector<Matrix*> g = blocks_of(grads);
  const double lr = config_.learning_rate;
  if (config_.optimizer == OptimizerKind::kSgd) {
    for (std::size_t b = 0; b < p.size(); ++b) *p[b] -= lr * *g[b];
    return;
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Matrix*> m1 = blocks_of(first_moment_);
  std::vector<Matrix*> m2 = blocks_of(second_moment_);
  const double c1 = 1.0 - std::pow(beta1, steps_);
  const double c2 = 1.0 - std::pow(beta2, steps_);
  for (std::size_t b = 0; b < p.size(); ++b) {
    *m1[b] = beta1 * *m1[b] + (1.0 - beta1) * *g[b];
    *m2[b] = beta2 * *m2[b] + (1.0 - beta2) * g[b]->cwiseAbs2();
    const auto m_hat = m1[b]->array() / c1;
    const auto v_hat = m2[b]->array() / c2;
    p[b]->array() -= lr * m_hat / (v_hat.sqrt() + eps);
  }
}

std::string format_log_line(const LossLogEntry& entry) {
  std::ostringstream os;
  os << "epoch " << entry.epoch << " step " << entry.step << " loss " << format_double(entry.loss);
  return os.str();
}

TrainResult train(std::span<const Example> examples, ModelParams& params,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainCallbacks& callbacks) {
  model_config.validate();
  train_config.validate();
  validate_params(params, model_config);
  if (examples.empty()) throw ContractError("train: empty dataset");

  std::mt19937_64 order_rng(train_config.seed);
  std::mt19937_64 dropout_rng(train_config.seed ^ 0x9e3779b97f4a7c15ULL);
  Dropout dropout{train_config.dropout_rate, &dropout_rng};

  Optimizer optimizer(train_config, params);
  ModelParams grads = zeros_like(params);
  std::vector<std::size_t> order(examples.size());
  std::vector<Example> batch;

  TrainResult result;
  int step = 0;
  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_loss = 0.0;
    int epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
      if (train_config.max_steps > 0 && step >= train_config.max_steps) break;
      const std::size_t end = std::min(order.size(), start + train_config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);

      for_each_param(grads, [](const std::string&, Matrix& m) { m.setZero(); });
      double loss = 0.0;
      try {
        loss = accumulate_gradients(params, model_config, batch, grads, &dropout);
      } catch (const NumericError& e) {
        std::string ids;
        for (const Example& ex : batch) ids += (ids.empty() ? "" : ",") + std::to_string(ex.record_id);
        throw NumericError("epoch " + std::to_string(epoch) + " step " + std::to_string(step + 1) +
                           ": " + e.what() + " (batch records " + ids + ")");
      }
      optimizer.step(params, grads);
      ++step;
      LossLogEntry entry{epoch, step, loss};
      result.steps.push_back(entry);
      if (callbacks.on_step) callbacks.on_step(entry);
      epoch_loss += loss;
      ++epoch_batches;
    }
    if (epoch_batches == 0) break;
    result.epoch_mean_loss.push_back(epoch_loss / epoch_batches);
    if (callbacks.on_epoch_end) callbacks.on_epoch_end(epoch, params);
    if (train_config.max_steps > 0 && step >= train_config.max_steps) break;
  }
  return result;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelErrFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const ModelParams& params, const ModelConfig& config,
                           const Example& example, double epsilon,
                           std::size_t max_entries_per_block, std::uint64_t sample_seed) {
  validate_params(params, config);
  ModelParams grads = zeros_like(params);
  accumulate_gradients(params, config, std::span<const Example>(&example, 1), grads);

  ModelParams probe = params;
  std::vector<Matrix*> probe_blocks = blocks_of(probe);
  std::vector<const Matrix*> grad_blocks = blocks_of(static_cast<const ModelParams&>(grads));
  std::vector<std::string> names;
  for_each_param(params, [&](const std::string& name, const Matrix&) { names.push_back(name); });

  std::mt19937_64 rng(sample_seed);
  GradCheckReport report;
  for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
    Matrix& block = *probe_blocks[b];
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(block.size()));
    std::iota(entries.begin(), entries.end(), 0);
    if (max_entries_per_block > 0 && entries.size() > max_entries_per_block) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(max_entries_per_block);
      std::sort(entries.begin(), entries.end());
    }
    BlockCheck check;
    check.name = names[b];
    for (Eigen::Index idx : entries) {
      const double saved = block(idx);
      block(idx) = saved + epsilon;
      const double up = example_loss(probe, config, example);
      block(idx) = saved - epsilon;
      const double down = example_loss(probe, config, example);
      block(idx) = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = (*grad_blocks[b])(idx);
      check.max_abs_err = std::max(check.max_abs_err, std::abs(analytic - numeric));
      check.max_rel_err = std::max(check.max_rel_err, relative_error(analytic, numeric));
      ++check.checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, check.max_rel_err);
    report.blocks.push_back(std::move(check));
  }
  return report;
}

GradCheckInstance make_gradcheck_instance(Variant variant, std::uint64_t seed) {
  GradCheckInstance inst;
  ModelConfig& c = inst.config;
  c.regions = 4;
  c.feature_dim = 6;
  c.hidden_dim = 8;
  c.guide_dim = 5;
  c.embed_dim = 7;
  c.attr_dim = 5;
  c.input_dim = 7;
  c.vocab_size = 12;
  c.variant = variant;
  c.dropout_rate = 0.0;
  c.max_decode_len = 3;
  inst.params = init_params(c, seed);

  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::uniform_int_distribution<int> word(kNumReserved, c.vocab_size - 1);
  inst.example.annotations.annotations = Matrix::NullaryExpr(c.regions, c.feature_dim, [&] {
    return normal(rng);
  });
  inst.example.attributes = Vector::NullaryExpr(c.attr_dim, [&] { return uniform(rng); });
  inst.example.attributes /= inst.example.attributes.sum();
  for (int t = 0; t < 3; ++t) inst.example.caption.push_back(word(rng));
  inst.example.record_id = 0;
  return inst;
}

}  // namespace sgn
