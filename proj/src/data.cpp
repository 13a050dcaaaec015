#include "sgn/data.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace sgn {

Tokens preprocess(const std::string& text) {
  Tokens out;
  std::string current;
  for (unsigned char ch : text) {
    const auto c = static_cast<unsigned char>(std::tolower(ch));
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      current.push_back(static_cast<char>(c));
    } else if (std::isspace(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string join(const Tokens& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

Vocabulary::Vocabulary() {
  add(kPad, 0);
  add(kSos, 0);
  add(kEos, 0);
  add(kUnk, 0);
}

void Vocabulary::add(const std::string& token, int count) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
  counts_[token] = count;
}

Vocabulary Vocabulary::build(const std::vector<Tokens>& captions, int min_count) {
  std::map<std::string, int> counts;
  for (const auto& caption : captions)
    for (const auto& tok : caption) ++counts[tok];
  std::vector<std::pair<std::string, int>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count && tok != kPad && tok != kSos && tok != kEos && tok != kUnk) {
      kept.emplace_back(tok, n);
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [tok, n] : kept) vocab.add(tok, n);
  return vocab;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open vocabulary: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  const std::array<const char*, 4> reserved = {kPad, kSos, kEos, kUnk};
  if (lines.size() < reserved.size()) throw IoError("vocabulary too short: " + path);
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (lines[i] != reserved[i]) {
      throw IoError("vocabulary " + path + " must start with the reserved tokens");
    }
  }
  Vocabulary vocab;
  for (std::size_t i = reserved.size(); i < lines.size(); ++i) {
    if (vocab.contains(lines[i])) throw IoError("duplicate token '" + lines[i] + "' in " + path);
    vocab.add(lines[i], 0);
  }
  return vocab;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write vocabulary: " + path);
  for (const auto& t : tokens_) os << t << '\n';
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw ContractError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::count(const std::string& token) const {
  auto it = counts_.find(token);
  return it == counts_.end() ? 0 : it->second;
}

TokenSequence Vocabulary::encode(const Tokens& tokens) const {
  TokenSequence ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(const TokenSequence& ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(token(id));
  return out;
}

Vector AttributeSpec::vector_for(const std::vector<Tokens>& captions) const {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(words.size()));
  for (std::size_t j = 0; j < words.size(); ++j) {
    for (const auto& caption : captions) {
      if (std::find(caption.begin(), caption.end(), words[j]) != caption.end()) {
        v(static_cast<Eigen::Index>(j)) = 1.0;
        break;
      }
    }
  }
  const double total = v.sum();
  if (total > 0.0) v /= total;
  return v;
}

AttributeSpec AttributeSpec::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open attribute list: " + path);
  AttributeSpec spec;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) spec.words.push_back(line);
  }
  return spec;
}

void AttributeSpec::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write attribute list: " + path);
  for (const auto& w : words) os << w << '\n';
}

AttributeSpec build_attributes(const Vocabulary& vocab, int attr_dim) {
  std::vector<std::pair<std::string, int>> words;
  for (int id = kNumReserved; id < vocab.size(); ++id) {
    words.emplace_back(vocab.token(id), vocab.count(vocab.token(id)));
  }
  if (attr_dim < 1 || attr_dim > static_cast<int>(words.size())) {
    throw ContractError("attr_dim " + std::to_string(attr_dim) + " exceeds the " +
                        std::to_string(words.size()) + " non-reserved vocabulary words");
  }
  std::sort(words.begin(), words.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  AttributeSpec spec;
  for (int j = 0; j < attr_dim; ++j) spec.words.push_back(words[static_cast<std::size_t>(j)].first);
  return spec;
}

void SceneRecord::validate() const {
  const std::string where = "record " + std::to_string(id) + ": ";
  if (scene.rows < 1 || scene.cols < 1) throw ContractError(where + "empty grid");
  if (annotations.regions() != scene.cells()) {
    throw ContractError(where + "annotation count " + std::to_string(annotations.regions()) +
                        " does not match " + std::to_string(scene.cells()) + " grid cells");
  }
  annotations.validate();
  if (captions.empty()) throw ContractError(where + "no captions");
  if (!attributes.allFinite() || (attributes.array() < 0.0).any() ||
      (attributes.array() > 1.0).any()) {
    throw ContractError(where + "attribute entries must lie in [0, 1]");
  }
  for (const auto& obj : scene.objects) {
    if (obj.row < 0 || obj.row >= scene.rows || obj.col < 0 || obj.col >= scene.cols) {
      throw ContractError(where + "object outside the grid");
    }
  }
}

namespace {

// Feature tables are fixed so that separately generated datasets agree on
// what each shape/color and each grid position looks like.
constexpr std::uint64_t kFeatureTableSeed = 0x5eed5eedULL;
constexpr double kPositionScale = 0.5;

struct FeatureTables {
  Matrix objects;    // (shapes * colors) x D
  Matrix positions;  // cells x D
};

FeatureTables make_tables(int cells, int feature_dim) {
  std::mt19937_64 rng(kFeatureTableSeed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureTables t;
  t.objects.resize(static_cast<Eigen::Index>(kShapes.size() * kColors.size()), feature_dim);
  for (Eigen::Index i = 0; i < t.objects.rows(); ++i)
    for (Eigen::Index j = 0; j < feature_dim; ++j) t.objects(i, j) = normal(rng);
  t.positions.resize(cells, feature_dim);
  for (Eigen::Index i = 0; i < cells; ++i)
    for (Eigen::Index j = 0; j < feature_dim; ++j) t.positions(i, j) = kPositionScale * normal(rng);
  return t;
}

int object_index(const SceneObject& obj) {
  const auto s = std::find(kShapes.begin(), kShapes.end(), obj.shape) - kShapes.begin();
  const auto c = std::find(kColors.begin(), kColors.end(), obj.color) - kColors.begin();
  return static_cast<int>(s * static_cast<std::ptrdiff_t>(kColors.size()) + c);
}

Tokens describe(const SceneObject& obj) { return {"a", obj.color, obj.shape}; }

Tokens relation(const SceneObject& a, const SceneObject& b) {
  if (a.col < b.col) return {"left", "of"};
  if (a.col > b.col) return {"right", "of"};
  return a.row < b.row ? Tokens{"above"} : Tokens{"below"};
}

void append(Tokens& out, const Tokens& more) { out.insert(out.end(), more.begin(), more.end()); }

std::vector<Tokens> make_captions(const Scene& scene) {
  std::vector<SceneObject> objs = scene.objects;
  std::sort(objs.begin(), objs.end(), [&](const SceneObject& a, const SceneObject& b) {
    return a.row * scene.cols + a.col < b.row * scene.cols + b.col;
  });
  if (objs.size() == 1) {
    Tokens there = {"there", "is"};
    append(there, describe(objs[0]));
    return {describe(objs[0]), there};
  }
  Tokens first = describe(objs[0]);
  append(first, relation(objs[0], objs[1]));
  append(first, describe(objs[1]));
  Tokens second = describe(objs[1]);
  append(second, relation(objs[1], objs[0]));
  append(second, describe(objs[0]));
  if (objs.size() == 3) {
    for (Tokens* c : {&first, &second}) {
      c->push_back("and");
      append(*c, describe(objs[2]));
    }
  }
  return {first, second};
}

Scene random_scene(std::mt19937_64& rng, int rows, int cols) {
  Scene scene{rows, cols, {}};
  const int cells = rows * cols;
  std::uniform_int_distribution<int> count_dist(1, std::min(3, cells));
  const int n = count_dist(rng);
  std::vector<int> cell_ids(static_cast<std::size_t>(cells));
  std::iota(cell_ids.begin(), cell_ids.end(), 0);
  std::vector<int> kinds(kShapes.size() * kColors.size());
  std::iota(kinds.begin(), kinds.end(), 0);
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<int> pick_cell(i, cells - 1);
    std::swap(cell_ids[static_cast<std::size_t>(i)],
              cell_ids[static_cast<std::size_t>(pick_cell(rng))]);
    std::uniform_int_distribution<int> pick_kind(i, static_cast<int>(kinds.size()) - 1);
    std::swap(kinds[static_cast<std::size_t>(i)], kinds[static_cast<std::size_t>(pick_kind(rng))]);
    const int kind = kinds[static_cast<std::size_t>(i)];
    const int cell = cell_ids[static_cast<std::size_t>(i)];
    scene.objects.push_back({kShapes[static_cast<std::size_t>(kind) / kColors.size()],
                             kColors[static_cast<std::size_t>(kind) % kColors.size()],
                             cell / cols, cell % cols});
  }
  return scene;
}

Matrix render(const Scene& scene, const FeatureTables& tables, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, sigma);
  Matrix a = tables.positions;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) += noise(rng);
  for (const auto& obj : scene.objects) {
    a.row(obj.row * scene.cols + obj.col) += tables.objects.row(object_index(obj));
  }
  return a;
}

}  // namespace

Dataset generate_dataset(const DatasetOptions& o) {
  if (o.n_train < 1 || o.n_val < 1 || o.n_test < 1) {
    throw ContractError("generate_dataset: every split needs at least one record");
  }
  if (o.grid_rows < 1 || o.grid_cols < 1 || o.feature_dim < 1) {
    throw ContractError("generate_dataset: grid and feature_dim must be >= 1");
  }
  const FeatureTables tables = make_tables(o.grid_rows * o.grid_cols, o.feature_dim);
  std::mt19937_64 rng(o.seed);
  Dataset ds;
  int next_id = 0;
  auto make_split = [&](int n, std::vector<SceneRecord>& out) {
    for (int i = 0; i < n; ++i) {
      SceneRecord r;
      r.id = next_id++;
      r.scene = random_scene(rng, o.grid_rows, o.grid_cols);
      r.annotations.annotations = render(r.scene, tables, o.noise_sigma, rng);
      r.captions = make_captions(r.scene);
      out.push_back(std::move(r));
    }
  };
  make_split(o.n_train, ds.train);
  make_split(o.n_val, ds.val);
  make_split(o.n_test, ds.test);

  std::vector<Tokens> train_captions;
  for (const auto& r : ds.train) {
    train_captions.insert(train_captions.end(), r.captions.begin(), r.captions.end());
  }
  ds.vocab = Vocabulary::build(train_captions, o.min_count);
  ds.attributes = build_attributes(ds.vocab, o.attr_dim);
  for (auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (auto& r : *split) r.attributes = ds.attributes.vector_for(r.captions);
  }
  return ds;
}

bool caption_consistent(const Tokens& caption, const Scene& scene) {
  auto find_object = [&](std::size_t at) -> const SceneObject* {
    if (at + 2 >= caption.size()) return nullptr;
    if (caption[at] != "a") return nullptr;
    for (const auto& obj : scene.objects) {
      if (obj.color == caption[at + 1] && obj.shape == caption[at + 2]) return &obj;
    }
    return nullptr;
  };
  for (std::size_t i = 0; i < caption.size(); ++i) {
    std::size_t width = 0;
    if ((caption[i] == "left" || caption[i] == "right") && i + 1 < caption.size() &&
        caption[i + 1] == "of") {
      width = 2;
    } else if (caption[i] == "above" || caption[i] == "below") {
      width = 1;
    } else {
      continue;
    }
    if (i < 3) return false;
    const SceneObject* lhs = find_object(i - 3);
    const SceneObject* rhs = find_object(i + width);
    if (lhs == nullptr || rhs == nullptr) return false;
    bool ok = false;
    if (caption[i] == "left") ok = lhs->col < rhs->col;
    if (caption[i] == "right") ok = lhs->col > rhs->col;
    if (caption[i] == "above") ok = lhs->row < rhs->row;
    if (caption[i] == "below") ok = lhs->row > rhs->row;
    if (!ok) return false;
  }
  return true;
}

std::string record_to_json(const SceneRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["grid"] = {r.scene.rows, r.scene.cols};
  auto objects = nlohmann::ordered_json::array();
  for (const auto& o : r.scene.objects) {
    objects.push_back({{"shape", o.shape}, {"color", o.color}, {"row", o.row}, {"col", o.col}});
  }
  j["objects"] = std::move(objects);
  auto ann = nlohmann::ordered_json::array();
  const Matrix& a = r.annotations.annotations;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    std::vector<double> rowv(static_cast<std::size_t>(a.cols()));
    for (Eigen::Index k = 0; k < a.cols(); ++k) rowv[static_cast<std::size_t>(k)] = a(i, k);
    ann.push_back(rowv);
  }
  j["annotations"] = std::move(ann);
  j["attributes"] = std::vector<double>(r.attributes.data(), r.attributes.data() + r.attributes.size());
  auto caps = nlohmann::ordered_json::array();
  for (const auto& c : r.captions) caps.push_back(join(c));
  j["captions"] = std::move(caps);
  return j.dump();
}

SceneRecord record_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
    SceneRecord r;
    r.id = j.at("id").get<int>();
    r.scene.rows = j.at("grid").at(0).get<int>();
    r.scene.cols = j.at("grid").at(1).get<int>();
    for (const auto& o : j.at("objects")) {
      r.scene.objects.push_back({o.at("shape").get<std::string>(), o.at("color").get<std::string>(),
                                 o.at("row").get<int>(), o.at("col").get<int>()});
    }
    const auto& ann = j.at("annotations");
    const auto rows = static_cast<Eigen::Index>(ann.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(ann.at(0).size()) : 0;
    r.annotations.annotations.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& rowj = ann.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(rowj.size()) != cols) {
        throw ContractError("record " + std::to_string(r.id) + ": ragged annotation matrix");
      }
      for (Eigen::Index k = 0; k < cols; ++k) {
        r.annotations.annotations(i, k) = rowj.at(static_cast<std::size_t>(k)).get<double>();
      }
    }
    const auto attrs = j.at("attributes").get<std::vector<double>>();
    r.attributes = Eigen::Map<const Vector>(attrs.data(), static_cast<Eigen::Index>(attrs.size()));
    for (const auto& c : j.at("captions")) r.captions.push_back(preprocess(c.get<std::string>()));
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed record: ") + e.what());
  }
}

std::vector<SceneRecord> read_records(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open records: " + path);
  std::vector<SceneRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(record_from_json(line));
  }
  return out;
}

void write_records(const std::vector<SceneRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write records: " + path);
  for (const auto& r : records) os << record_to_json(r) << '\n';
}

void write_references(const std::vector<SceneRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write references: " + path);
  for (const auto& r : records) {
    os << "IMG " << r.id << '\n';
    for (const auto& c : r.captions) os << join(c) << '\n';
  }
}

std::vector<std::vector<Tokens>> read_references(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open references: " + path);
  std::vector<std::vector<Tokens>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.rfind("IMG ", 0) == 0 || line == "IMG") {
      out.emplace_back();
      continue;
    }
    if (line.empty()) continue;
    if (out.empty()) {
      throw IoError(path + ":" + std::to_string(lineno) + ": reference before the first IMG line");
    }
    out.back().push_back(preprocess(line));
  }
  return out;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  write_records(ds.train, (root / "train.jsonl").string());
  write_records(ds.val, (root / "val.jsonl").string());
  write_records(ds.test, (root / "test.jsonl").string());
  write_references(ds.train, (root / "train.refs.txt").string());
  write_references(ds.val, (root / "val.refs.txt").string());
  write_references(ds.test, (root / "test.refs.txt").string());
  ds.vocab.save((root / "vocab.txt").string());
  ds.attributes.save((root / "attrs.txt").string());
}

Dataset read_dataset(const std::string& dir) {
  const std::filesystem::path root(dir);
  Dataset ds;
  ds.train = read_records((root / "train.jsonl").string());
  ds.val = read_records((root / "val.jsonl").string());
  ds.test = read_records((root / "test.jsonl").string());
  ds.vocab = Vocabulary::load((root / "vocab.txt").string());
  ds.attributes = AttributeSpec::load((root / "attrs.txt").string());
  return ds;
}

std::vector<Example> make_examples(const std::vector<SceneRecord>& records, const Vocabulary& vocab,
                                   int captions_per_record) {
  if (captions_per_record < 0) throw ContractError("captions_per_record must be >= 0");
  std::vector<Example> out;
  for (const SceneRecord& r : records) {
    std::size_t n = r.captions.size();
    if (captions_per_record > 0) n = std::min(n, static_cast<std::size_t>(captions_per_record));
    for (std::size_t c = 0; c < n; ++c) {
      out.push_back(Example{r.annotations, r.attributes, vocab.encode(r.captions[c]), r.id});
    }
  }
  return out;
}

}  // namespace sgn
