#include "sgn/model.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sgn/config.hpp"

namespace sgn {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSgn:
      return "sgn";
    case Variant::kAtt:
      return "att";
    case Variant::kPlain:
      return "plain";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "sgn") return Variant::kSgn;
  if (name == "att") return Variant::kAtt;
  if (name == "plain") return Variant::kPlain;
  throw ContractError("variant must be one of sgn, att, plain; got '" + name + "'");
}

void ModelConfig::validate() const {
  const std::array<std::pair<const char*, int>, 9> dims = {{{"regions", regions},
                                                           {"feature_dim", feature_dim},
                                                           {"hidden_dim", hidden_dim},
                                                           {"guide_dim", guide_dim},
                                                           {"embed_dim", embed_dim},
                                                           {"attr_dim", attr_dim},
                                                           {"input_dim", input_dim},
                                                           {"vocab_size", vocab_size},
                                                           {"max_decode_len", max_decode_len}}};
  for (const auto& [name, value] : dims) {
    if (value < 1) throw ContractError(std::string(name) + " must be >= 1");
  }
  if (vocab_size <= kNumReserved) {
    throw ContractError("vocab_size must exceed the " + std::to_string(kNumReserved) +
                        " reserved tokens");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ContractError("dropout_rate must lie in [0, 1)");
  }
}

std::map<std::string, std::string> ModelConfig::to_key_values() const {
  std::map<std::string, std::string> kv;
  kv["regions"] = std::to_string(regions);
  kv["feature_dim"] = std::to_string(feature_dim);
  kv["hidden_dim"] = std::to_string(hidden_dim);
  kv["guide_dim"] = std::to_string(guide_dim);
  kv["embed_dim"] = std::to_string(embed_dim);
  kv["attr_dim"] = std::to_string(attr_dim);
  kv["input_dim"] = std::to_string(input_dim);
  kv["vocab_size"] = std::to_string(vocab_size);
  kv["variant"] = to_string(variant);
  kv["candidate_tanh"] = candidate_tanh ? "true" : "false";
  kv["dropout_rate"] = format_double(dropout_rate);
  kv["max_decode_len"] = std::to_string(max_decode_len);
  return kv;
}

ModelConfig ModelConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "regions") c.regions = parse_int(key, value);
    else if (key == "feature_dim") c.feature_dim = parse_int(key, value);
    else if (key == "hidden_dim") c.hidden_dim = parse_int(key, value);
    else if (key == "guide_dim") c.guide_dim = parse_int(key, value);
    else if (key == "embed_dim") c.embed_dim = parse_int(key, value);
    else if (key == "attr_dim") c.attr_dim = parse_int(key, value);
    else if (key == "input_dim") c.input_dim = parse_int(key, value);
    else if (key == "vocab_size") c.vocab_size = parse_int(key, value);
    else if (key == "variant") c.variant = parse_variant(value);
    else if (key == "candidate_tanh") c.candidate_tanh = parse_bool(key, value);
    else if (key == "dropout_rate") c.dropout_rate = parse_double(key, value);
    else if (key == "max_decode_len") c.max_decode_len = parse_int(key, value);
    else throw ContractError("unknown model config key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

ModelParams shaped_zeros(const ModelConfig& c) {
  const int H = c.hidden_dim;
  ModelParams p;
  p.embedding = Matrix::Zero(c.vocab_size, c.embed_dim);
  p.W_ax = Matrix::Zero(c.input_dim, c.attr_dim);
  p.W_wx = Matrix::Zero(c.input_dim, c.embed_dim);
  if (c.variant == Variant::kSgn) p.W_gx = Matrix::Zero(c.input_dim, c.guide_dim);
  if (c.variant == Variant::kAtt) p.W_gx = Matrix::Zero(c.input_dim, c.attr_dim);
  if (c.variant == Variant::kSgn) p.W_z = Matrix::Zero(c.guide_dim, H + c.attr_dim);
  p.W_c = Matrix::Zero(H, c.feature_dim + H);
  p.W_s = Matrix::Zero(c.vocab_size, H);
  p.attention.W_a = Matrix::Zero(H, c.feature_dim);
  for (int z = 0; z < 4; ++z) {
    p.lstm_d.W_xh[z] = Matrix::Zero(H, c.input_dim);
    p.lstm_d.W_hh[z] = Matrix::Zero(H, H);
    p.lstm_d.W_th[z] = Matrix::Zero(H, H);
    p.lstm_d.b[z] = Matrix::Zero(H, 1);
  }
  if (c.variant == Variant::kSgn) {
    LstmGParamsT<Matrix> g;
    for (int z = 0; z < 4; ++z) {
      g.W_ih[z] = Matrix::Zero(c.guide_dim, c.guide_dim);
      g.W_hh[z] = Matrix::Zero(c.guide_dim, c.guide_dim);
      g.b[z] = Matrix::Zero(c.guide_dim, 1);
    }
    p.lstm_g = std::move(g);
  }
  return p;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p = shaped_zeros(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.1, 0.1);
  for_each_param(p, [&](const std::string&, Matrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = uniform(rng);
  });
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  return map_params<Matrix>(params, [](const Matrix& m) -> Matrix {
    return Matrix::Zero(m.rows(), m.cols());
  });
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for_each_param(params, [&](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

void validate_params(const ModelParams& params, const ModelConfig& config) {
  std::vector<std::pair<std::string, Matrix*>> expected;
  ModelParams shapes = shaped_zeros(config);
  for_each_param(shapes, [&](const std::string& name, Matrix& m) { expected.emplace_back(name, &m); });
  std::size_t i = 0;
  for_each_param(params, [&](const std::string& name, const Matrix& m) {
    if (i >= expected.size() || expected[i].first != name) {
      throw ContractError("parameter block '" + name + "' does not belong to variant " +
                          to_string(config.variant));
    }
    if (expected[i].second->rows() != m.rows() || expected[i].second->cols() != m.cols()) {
      throw ShapeError("parameter block '" + name + "' has shape " +
                       detail::shape_str(m.rows(), m.cols()) + ", expected " +
                       detail::shape_str(expected[i].second->rows(), expected[i].second->cols()));
    }
    if (!m.allFinite()) throw NumericError("parameter block '" + name + "' is not finite");
    ++i;
  });
  if (i != expected.size()) throw ContractError("parameter set is missing blocks");
}

BoundParams bind(Tape& tape, const ModelParams& params) {
  return map_params<Tensor>(params, [&](const Matrix& m) { return tape.parameter(m); });
}

Tensor Dropout::apply(const Tensor& t) const {
  if (rate <= 0.0 || rng == nullptr) return t;
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(t.rows(), t.cols());
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = keep(*rng) ? scale : 0.0;
  return hadamard(t, t.tape()->constant(std::move(mask)));
}

namespace {

Tensor maybe_drop(const Dropout* dropout, const Tensor& t) {
  return dropout != nullptr ? dropout->apply(t) : t;
}

Tensor zeros(Tape& tape, int n) { return tape.constant(Matrix::Zero(n, 1)); }

Tensor attention_vector(const Tensor& context, const Tensor& h, const BoundParams& params) {
  return tanh(matmul(params.W_c, concat(context, h)));
}

}  // namespace

ImageInputs place_inputs(Tape& tape, const AnnotationSet& annotations, const Vector& attributes,
                         const ModelConfig& config) {
  annotations.validate();
  if (annotations.regions() != config.regions || annotations.feature_dim() != config.feature_dim) {
    throw ShapeError("annotations are " +
                     detail::shape_str(annotations.regions(), annotations.feature_dim()) +
                     ", model expects " + detail::shape_str(config.regions, config.feature_dim));
  }
  if (attributes.size() != config.attr_dim) {
    throw ShapeError("attribute vector has " + std::to_string(attributes.size()) +
                     " entries, model expects " + std::to_string(config.attr_dim));
  }
  return {tape.constant(annotations.annotations), tape.constant(Matrix(attributes))};
}

ImageStepOutput image_step(const ImageInputs& image, const BoundParams& params,
                           const ModelConfig& config, const Dropout* dropout) {
  Tape& tape = *image.annotations.tape();
  const int H = config.hidden_dim;
  LstmDState zero{zeros(tape, H), zeros(tape, H), zeros(tape, H)};
  Tensor x = matmul(params.W_ax, image.attributes);
  LstmStep step = lstm_d_step(x, zero, params.lstm_d, config.candidate_tanh);
  Tensor h = maybe_drop(dropout, step.h);
  auto att = attend(image.annotations, h, params.attention.W_a);
  Tensor h_tilde = attention_vector(att.context, h, params);

  ImageStepOutput out;
  out.state.decoder = {step.h, step.m, h_tilde};
  if (config.variant == Variant::kSgn) {
    out.state.guide = LstmGState{zeros(tape, config.guide_dim), zeros(tape, config.guide_dim)};
  }
  out.state.guide_feed = h;
  out.h_minus1 = h;
  out.alpha = att.alpha;
  return out;
}

GuideStepOutput guider_step(int t, const Tensor& feed, const Tensor& attributes,
                            const LstmGState& state, const BoundParams& params,
                            const ModelConfig& config, const Dropout* dropout) {
  if (config.variant != Variant::kSgn || !params.lstm_g || !params.W_z) {
    throw ContractError("guider_step requires the sgn variant, got " + to_string(config.variant));
  }
  if (t < 0) throw ContractError("guider_step: t must be >= 0");
  detail::require_rows(feed, config.hidden_dim, "guider_step feed");
  Tensor z = matmul(*params.W_z, concat(feed, attributes));
  LstmGState next = lstm_g_step(z, state, *params.lstm_g);
  return {maybe_drop(dropout, next.hidden), next};
}

StepOutput decode_step(int t, int word_id, const std::optional<Tensor>& guide_input,
                       const DecodeState& state, const ImageInputs& image,
                       const BoundParams& params, const ModelConfig& config,
                       const Dropout* dropout) {
  if (t < 0) throw ContractError("decode_step: t must be >= 0");
  if (word_id < 0 || word_id >= config.vocab_size) {
    throw ContractError("decode_step: word id " + std::to_string(word_id) +
                        " outside vocabulary of size " + std::to_string(config.vocab_size));
  }
  Tensor x = matmul(params.W_wx, row(params.embedding, word_id));
  if (config.variant != Variant::kPlain) {
    if (!guide_input || !params.W_gx) {
      throw ContractError("decode_step: variant " + to_string(config.variant) +
                          " needs a guide input");
    }
    x = x + matmul(*params.W_gx, *guide_input);
  }
  LstmStep step = lstm_d_step(x, state.decoder, params.lstm_d, config.candidate_tanh);
  Tensor h = maybe_drop(dropout, step.h);
  auto att = attend(image.annotations, h, params.attention.W_a);
  Tensor h_tilde = attention_vector(att.context, h, params);

  StepOutput out;
  out.logits = matmul(params.W_s, h_tilde);
  out.alpha = att.alpha;
  out.state.decoder = {step.h, step.m, h_tilde};
  out.state.guide = state.guide;
  out.state.guide_feed = h_tilde;
  return out;
}

StepOutput advance(int t, int word_id, const DecodeState& state, const ImageInputs& image,
                   const BoundParams& params, const ModelConfig& config, const Dropout* dropout) {
  switch (config.variant) {
    case Variant::kSgn: {
      if (!state.guide) throw ContractError("advance: sgn state lacks a guide state");
      GuideStepOutput g =
          guider_step(t, state.guide_feed, image.attributes, *state.guide, params, config, dropout);
      DecodeState next = state;
      next.guide = g.state;
      StepOutput out = decode_step(t, word_id, g.guide, next, image, params, config, dropout);
      out.guide = g.guide;
      return out;
    }
    case Variant::kAtt:
      return decode_step(t, word_id, image.attributes, state, image, params, config, dropout);
    case Variant::kPlain:
      return decode_step(t, word_id, std::nullopt, state, image, params, config, dropout);
  }
  throw ContractError("advance: unknown variant");
}

SequenceOutput forward_sequence(const ImageInputs& image, const TokenSequence& caption,
                                const BoundParams& params, const ModelConfig& config,
                                const Dropout* dropout, std::size_t pad_to) {
  if (caption.empty()) throw ContractError("forward_sequence: empty caption");
  TokenSequence inputs;
  inputs.reserve(caption.size() + 1);
  inputs.push_back(kSosId);
  inputs.insert(inputs.end(), caption.begin(), caption.end());

  SequenceOutput out;
  out.targets = caption;
  out.targets.push_back(kEosId);
  while (out.targets.size() < pad_to) {
    inputs.push_back(inputs.size() == caption.size() + 1 ? kEosId : kPadId);
    out.targets.push_back(kPadId);
  }

  ImageStepOutput img = image_step(image, params, config, dropout);
  DecodeState state = img.state;
  for (std::size_t t = 0; t < out.targets.size(); ++t) {
    StepOutput step = advance(static_cast<int>(t), inputs[t], state, image, params, config, dropout);
    out.logits.push_back(step.logits);
    out.alphas.push_back(step.alpha);
    if (step.guide) out.guides.push_back(*step.guide);
    state = step.state;
  }
  return out;
}

namespace {

constexpr const char* kCheckpointMagic = "SGNCKPT v1";

void write_le_double(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  os.write(bytes.data(), 8);
}

double read_le_double(std::istream& is) {
  std::array<unsigned char, 8> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), 8);
  if (!is) throw IoError("checkpoint payload truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config, const ModelParams& params) {
  validate_params(params, config);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  std::size_t blocks = 0;
  for_each_param(params, [&](const std::string&, const Matrix&) { ++blocks; });
  os << kCheckpointMagic << '\n' << blocks << '\n';
  for_each_param(params, [&](const std::string& name, const Matrix& m) {
    os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  });
  // Row-major payload.
  for_each_param(params, [&](const std::string&, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) write_le_double(os, m(i, j));
  });
  if (!os) throw IoError("failed writing checkpoint: " + path);
  write_key_value_file(path + ".cfg", config.to_key_values());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  Checkpoint ck;
  ck.config = ModelConfig::from_key_values(read_key_value_file(path + ".cfg"));
  std::string line;
  std::getline(is, line);
  if (line != kCheckpointMagic) throw IoError("not a checkpoint (bad header): " + path);
  std::getline(is, line);
  std::size_t blocks = 0;
  try {
    blocks = std::stoul(line);
  } catch (const std::exception&) {
    throw IoError("checkpoint manifest count unreadable: " + path);
  }
  std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> manifest;
  for (std::size_t b = 0; b < blocks; ++b) {
    std::getline(is, line);
    std::istringstream ls(line);
    std::string name;
    Eigen::Index r = 0, c = 0;
    if (!(ls >> name >> r >> c)) throw IoError("bad manifest line '" + line + "' in " + path);
    manifest.emplace_back(name, r, c);
  }
  ck.params = shaped_zeros(ck.config);
  std::size_t i = 0;
  for_each_param(ck.params, [&](const std::string& name, Matrix& m) {
    if (i >= manifest.size()) throw IoError("checkpoint manifest is missing '" + name + "'");
    const auto& [mname, r, c] = manifest[i++];
    if (mname != name || r != m.rows() || c != m.cols()) {
      throw IoError("checkpoint manifest entry '" + mname + "' does not match block '" + name +
                    "' of the configured model");
    }
  });
  if (i != manifest.size()) throw IoError("checkpoint has extra blocks for this config");
  for_each_param(ck.params, [&](const std::string&, Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_le_double(is);
  });
  validate_params(ck.params, ck.config);
  return ck;
}

}  // namespace sgn
