#pragma once

// Attention captioner with an optional sequential guiding network.
//
// Three variants share one decoder:
//   SGN   x^t = W_wx emb(w_t) + W_gx G^t, with G^t the LSTM-g hidden state
//   ATT   x^t = W_wx emb(w_t) + W_gx A   (attributes replace the guide)
//   PLAIN x^t = W_wx emb(w_t)
// Before the first word, one decoder step consumes x^{-1} = W_ax A.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sgn/attention.hpp"
#include "sgn/numerics.hpp"
#include "sgn/recurrent.hpp"
#include "sgn/tokens.hpp"

namespace sgn {

enum class Variant { kSgn, kAtt, kPlain };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  int regions = 16;       // K
  int feature_dim = 16;   // D
  int hidden_dim = 64;    // H
  int guide_dim = 32;     // D_g; also the LSTM-g input size
  int embed_dim = 32;     // D_w
  int attr_dim = 16;      // D_a
  int input_dim = 32;     // D_x
  int vocab_size = 32;
  Variant variant = Variant::kSgn;
  bool candidate_tanh = false;
  double dropout_rate = 0.3;
  int max_decode_len = 16;

  void validate() const;
  [[nodiscard]] std::map<std::string, std::string> to_key_values() const;
  static ModelConfig from_key_values(const std::map<std::string, std::string>& kv);
};

template <typename T>
struct ModelParamsT {
  T embedding;  // V x D_w
  T W_ax;       // D_x x D_a
  T W_wx;       // D_x x D_w
  std::optional<T> W_gx;  // D_x x D_g (SGN) or D_x x D_a (ATT)
  std::optional<T> W_z;   // D_g x (H + D_a), SGN only
  T W_c;        // H x (D + H)
  T W_s;        // V x H
  AttentionParamsT<T> attention;
  LstmDParamsT<T> lstm_d;
  std::optional<LstmGParamsT<T>> lstm_g;
};

using ModelParams = ModelParamsT<Matrix>;
using BoundParams = ModelParamsT<Tensor>;

// Calls f(name, block) for every allocated block, always in the same order.
template <typename P, typename F>
void for_each_param(P& p, F&& f) {
  f(std::string("embedding"), p.embedding);
  f(std::string("W_ax"), p.W_ax);
  f(std::string("W_wx"), p.W_wx);
  if (p.W_gx) f(std::string("W_gx"), *p.W_gx);
  if (p.W_z) f(std::string("W_z"), *p.W_z);
  f(std::string("W_c"), p.W_c);
  f(std::string("W_s"), p.W_s);
  f(std::string("attention.W_a"), p.attention.W_a);
  for (int z = 0; z < 4; ++z) {
    const std::string g = kGateNames[z];
    f("lstm_d.W_xh." + g, p.lstm_d.W_xh[z]);
    f("lstm_d.W_hh." + g, p.lstm_d.W_hh[z]);
    f("lstm_d.W_th." + g, p.lstm_d.W_th[z]);
    f("lstm_d.b." + g, p.lstm_d.b[z]);
  }
  if (p.lstm_g) {
    for (int z = 0; z < 4; ++z) {
      const std::string g = kGateNames[z];
      f("lstm_g.W_ih." + g, p.lstm_g->W_ih[z]);
      f("lstm_g.W_hh." + g, p.lstm_g->W_hh[z]);
      f("lstm_g.b." + g, p.lstm_g->b[z]);
    }
  }
}

// Builds a ModelParamsT<U> with the same block layout, mapping each block.
template <typename U, typename T, typename F>
ModelParamsT<U> map_params(const ModelParamsT<T>& p, F&& f) {
  ModelParamsT<U> out;
  out.embedding = f(p.embedding);
  out.W_ax = f(p.W_ax);
  out.W_wx = f(p.W_wx);
  if (p.W_gx) out.W_gx = f(*p.W_gx);
  if (p.W_z) out.W_z = f(*p.W_z);
  out.W_c = f(p.W_c);
  out.W_s = f(p.W_s);
  out.attention.W_a = f(p.attention.W_a);
  for (int z = 0; z < 4; ++z) {
    out.lstm_d.W_xh[z] = f(p.lstm_d.W_xh[z]);
    out.lstm_d.W_hh[z] = f(p.lstm_d.W_hh[z]);
    out.lstm_d.W_th[z] = f(p.lstm_d.W_th[z]);
    out.lstm_d.b[z] = f(p.lstm_d.b[z]);
  }
  if (p.lstm_g) {
    LstmGParamsT<U> g;
    for (int z = 0; z < 4; ++z) {
      g.W_ih[z] = f(p.lstm_g->W_ih[z]);
      g.W_hh[z] = f(p.lstm_g->W_hh[z]);
      g.b[z] = f(p.lstm_g->b[z]);
    }
    out.lstm_g = std::move(g);
  }
  return out;
}

// Every entry i.i.d. uniform in [-0.1, 0.1]; reproducible from seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);
std::size_t parameter_count(const ModelParams& params);
// Checks that every block exists with the shape `config` implies.
void validate_params(const ModelParams& params, const ModelConfig& config);

BoundParams bind(Tape& tape, const ModelParams& params);

// Inverted dropout on cell outputs. A null Dropout* means disabled.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  Tensor apply(const Tensor& t) const;
};

struct DecodeState {
  LstmDState decoder;
  std::optional<LstmGState> guide;
  // h^{-1} before the first word, h~^{t-1} afterwards: the first half of the
  // LSTM-g input at the next step.
  Tensor guide_feed;
};

struct ImageStepOutput {
  DecodeState state;
  Tensor h_minus1;
  Tensor alpha;
};

struct GuideStepOutput {
  Tensor guide;  // G^t
  LstmGState state;
};

struct StepOutput {
  Tensor logits;  // V x 1
  Tensor alpha;   // K x 1
  std::optional<Tensor> guide;
  DecodeState state;
};

// Image inputs placed on a tape.
struct ImageInputs {
  Tensor annotations;  // K x D
  Tensor attributes;   // D_a x 1
};

ImageInputs place_inputs(Tape& tape, const AnnotationSet& annotations, const Vector& attributes,
                         const ModelConfig& config);

ImageStepOutput image_step(const ImageInputs& image, const BoundParams& params,
                           const ModelConfig& config, const Dropout* dropout = nullptr);

GuideStepOutput guider_step(int t, const Tensor& feed, const Tensor& attributes,
                            const LstmGState& state, const BoundParams& params,
                            const ModelConfig& config, const Dropout* dropout = nullptr);

// `guide_input` is G^t for SGN, the attributes for ATT and ignored for PLAIN.
StepOutput decode_step(int t, int word_id, const std::optional<Tensor>& guide_input,
                       const DecodeState& state, const ImageInputs& image,
                       const BoundParams& params, const ModelConfig& config,
                       const Dropout* dropout = nullptr);

// Guide update (SGN) followed by decode_step, feeding the right guide input
// for the configured variant.
StepOutput advance(int t, int word_id, const DecodeState& state, const ImageInputs& image,
                   const BoundParams& params, const ModelConfig& config,
                   const Dropout* dropout = nullptr);

struct SequenceOutput {
  std::vector<Tensor> logits;  // one per target
  std::vector<Tensor> alphas;
  std::vector<Tensor> guides;  // SGN only
  TokenSequence targets;       // caption + <eos>, then <pad> up to pad_to
};

// Teacher-forced unroll. Inputs are <sos>, w_1..w_N; targets are
// w_1..w_N, <eos>. With pad_to > N + 1 the targets are extended with <pad>.
SequenceOutput forward_sequence(const ImageInputs& image, const TokenSequence& caption,
                                const BoundParams& params, const ModelConfig& config,
                                const Dropout* dropout = nullptr, std::size_t pad_to = 0);

// Checkpoint: "SGNCKPT v1" header, manifest, little-endian float64 payload.
// The config is written next to it as key=value text in `<path>.cfg`.
void save_checkpoint(const std::string& path, const ModelConfig& config, const ModelParams& params);
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sgn
