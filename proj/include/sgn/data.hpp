#pragma once

// Caption preprocessing, vocabulary and attribute construction, and the
// synthetic grid-scene dataset that stands in for CNN image features.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sgn/attention.hpp"
#include "sgn/metrics.hpp"
#include "sgn/tokens.hpp"
#include "sgn/training.hpp"

namespace sgn {

// Lowercase, drop everything outside [a-z0-9 ], split on whitespace.
Tokens preprocess(const std::string& text);
std::string join(const Tokens& tokens);

class Vocabulary {
 public:
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kSos = "<sos>";
  static constexpr const char* kEos = "<eos>";
  static constexpr const char* kUnk = "<unk>";

  Vocabulary();  // reserved tokens only

  // Tokens with count >= min_count, most frequent first (ties lexicographic).
  static Vocabulary build(const std::vector<Tokens>& captions, int min_count = 5);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  [[nodiscard]] int size() const { return static_cast<int>(tokens_.size()); }
  [[nodiscard]] int id(const std::string& token) const;  // kUnkId when absent
  [[nodiscard]] bool contains(const std::string& token) const { return index_.count(token) != 0; }
  [[nodiscard]] const std::string& token(int id) const;
  [[nodiscard]] int count(const std::string& token) const;
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }

  [[nodiscard]] TokenSequence encode(const Tokens& tokens) const;
  [[nodiscard]] Tokens decode(const TokenSequence& ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.counts_ == b.counts_;
  }

 private:
  void add(const std::string& token, int count);

  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
  std::map<std::string, int> counts_;
};

struct AttributeSpec {
  std::vector<std::string> words;

  // Indicator over attribute words present in `captions`, normalized to sum 1
  // (all zeros when none is present).
  [[nodiscard]] Vector vector_for(const std::vector<Tokens>& captions) const;
  static AttributeSpec load(const std::string& path);
  void save(const std::string& path) const;
};

// Top-`attr_dim` non-reserved vocabulary words by training count, ties
// lexicographic.
AttributeSpec build_attributes(const Vocabulary& vocab, int attr_dim);

inline constexpr std::array<const char*, 4> kShapes = {"circle", "square", "triangle", "star"};
inline constexpr std::array<const char*, 5> kColors = {"red", "green", "blue", "yellow", "purple"};

struct SceneObject {
  std::string shape;
  std::string color;
  int row = 0;
  int col = 0;
};

struct Scene {
  int rows = 4;
  int cols = 4;
  std::vector<SceneObject> objects;

  [[nodiscard]] int cells() const { return rows * cols; }
};

struct SceneRecord {
  int id = 0;
  Scene scene;
  AnnotationSet annotations;  // K x D, K = scene.cells()
  Vector attributes;
  std::vector<Tokens> captions;

  void validate() const;
};

struct DatasetOptions {
  int n_train = 100;
  int n_val = 20;
  int n_test = 20;
  int grid_rows = 4;
  int grid_cols = 4;
  int feature_dim = 16;
  int attr_dim = 16;
  int min_count = 5;
  double noise_sigma = 0.05;
  std::uint64_t seed = 1;
};

struct Dataset {
  std::vector<SceneRecord> train, val, test;
  Vocabulary vocab;
  AttributeSpec attributes;
};

Dataset generate_dataset(const DatasetOptions& options);

// True when every relation phrase in `caption` agrees with the object layout.
bool caption_consistent(const Tokens& caption, const Scene& scene);

// train.jsonl, val.jsonl, test.jsonl, vocab.txt, attrs.txt and
// {split}.refs.txt (reference captions grouped under "IMG <id>" lines).
void write_dataset(const Dataset& dataset, const std::string& dir);
Dataset read_dataset(const std::string& dir);

// One training example per (record, caption); captions_per_record > 0 keeps
// only the first that many captions of each record.
std::vector<Example> make_examples(const std::vector<SceneRecord>& records, const Vocabulary& vocab,
                                   int captions_per_record = 0);

std::string record_to_json(const SceneRecord& record);
SceneRecord record_from_json(const std::string& line);
std::vector<SceneRecord> read_records(const std::string& path);
void write_records(const std::vector<SceneRecord>& records, const std::string& path);

// Reference file for the evaluate command.
void write_references(const std::vector<SceneRecord>& records, const std::string& path);
std::vector<std::vector<Tokens>> read_references(const std::string& path);

}  // namespace sgn
