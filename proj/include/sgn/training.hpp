#pragma once

// Maximum-likelihood training with teacher forcing, and the finite-difference
// gradient checker used as the correctness gate for backward().

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sgn/model.hpp"

namespace sgn {

enum class OptimizerKind { kSgd, kAdam };
std::string to_string(OptimizerKind o);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  double learning_rate = 0.1;
  int batch_size = 16;
  int epochs = 10;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double grad_clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 1;
  double dropout_rate = 0.3;
  int max_steps = 0;            // 0: no cap
  int captions_per_record = 0;  // 0: every caption of a record is an example

  void validate() const;
};

struct Example {
  AnnotationSet annotations;
  Vector attributes;
  TokenSequence caption;  // word ids without <sos>/<eos>
  int record_id = -1;
};

struct NllSum {
  Tensor total;  // sum of -log p over non-pad targets
  int tokens = 0;
};

NllSum nll_sum(const std::vector<Tensor>& logits, const TokenSequence& targets);
// Mean negative log-likelihood per non-pad target token.
Tensor nll_loss(const std::vector<Tensor>& logits, const TokenSequence& targets);

// Mean token NLL of one example with dropout disabled.
double example_loss(const ModelParams& params, const ModelConfig& config, const Example& example);
double mean_loss(const ModelParams& params, const ModelConfig& config,
                 std::span<const Example> examples);

// Adds d(batch mean NLL)/d(params) into `grads` and returns the batch mean NLL.
// Examples are processed in order so the reduction is deterministic.
double accumulate_gradients(const ModelParams& params, const ModelConfig& config,
                            std::span<const Example> batch, ModelParams& grads,
                            const Dropout* dropout = nullptr);

double global_norm(const ModelParams& grads);

class Optimizer {
 public:
  Optimizer(const TrainConfig& config, const ModelParams& params);
  // Clips `grads` in place (if enabled) and applies one update.
  void step(ModelParams& params, ModelParams& grads);

 private:
  TrainConfig config_;
  ModelParams first_moment_;
  ModelParams second_moment_;
  int steps_ = 0;
};

struct LossLogEntry {
  int epoch = 0;
  int step = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<LossLogEntry> steps;
  std::vector<double> epoch_mean_loss;
};

struct TrainCallbacks {
  std::function<void(const LossLogEntry&)> on_step;
  std::function<void(int epoch, const ModelParams&)> on_epoch_end;
};

// Trains `params` in place. Fully determined by train_config.seed.
TrainResult train(std::span<const Example> examples, ModelParams& params,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainCallbacks& callbacks = {});

std::string format_log_line(const LossLogEntry& entry);

struct BlockCheck {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<BlockCheck> blocks;
  double max_rel_err = 0.0;

  [[nodiscard]] bool passed(double tolerance) const { return max_rel_err < tolerance; }
};

// Relative error used by the checker: |a - n| / max(|a|, |n|, floor).
inline constexpr double kRelErrFloor = 1e-5;
double relative_error(double analytic, double numeric);

// Compares backward() against central differences (L(p+e) - L(p-e)) / 2e for
// every entry, or a seeded sample of `max_entries_per_block` entries per block.
GradCheckReport grad_check(const ModelParams& params, const ModelConfig& config,
                           const Example& example, double epsilon = 1e-5,
                           std::size_t max_entries_per_block = 0, std::uint64_t sample_seed = 0);

// The small fixed configuration used to gate backward(): K=4, D=6, H=8,
// D_g=5, D_w=7, D_a=5, V=12, a 3-word caption, dropout off.
struct GradCheckInstance {
  ModelConfig config;
  ModelParams params;
  Example example;
};
GradCheckInstance make_gradcheck_instance(Variant variant, std::uint64_t seed);

}  // namespace sgn
