#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "sgn/data.hpp"

namespace sgn {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sgn_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

// Independent reading of the caption grammar: "<obj> <rel> <obj>" where an
// object is "a <color> <shape>".
bool relations_hold(const Tokens& c, const Scene& scene) {
  auto locate = [&](const std::string& color, const std::string& shape) -> const SceneObject* {
    for (const auto& o : scene.objects)
      if (o.color == color && o.shape == shape) return &o;
    return nullptr;
  };
  for (std::size_t i = 3; i < c.size(); ++i) {
    const bool two = (c[i] == "left" || c[i] == "right");
    if (!two && c[i] != "above" && c[i] != "below") continue;
    const std::size_t j = i + (two ? 2 : 1);
    if (j + 2 >= c.size()) return false;
    const SceneObject* a = locate(c[i - 2], c[i - 1]);
    const SceneObject* b = locate(c[j + 1], c[j + 2]);
    if (a == nullptr || b == nullptr) return false;
    const int dr = b->row - a->row, dc = b->col - a->col;
    if (c[i] == "left" && !(dc > 0)) return false;
    if (c[i] == "right" && !(dc < 0)) return false;
    if (c[i] == "above" && !(dr > 0)) return false;
    if (c[i] == "below" && !(dr < 0)) return false;
  }
  return true;
}

TEST(Preprocess, Examples) {
  EXPECT_EQ(preprocess("A Red Circle!"), (Tokens{"a", "red", "circle"}));
  EXPECT_TRUE(preprocess("").empty());
  EXPECT_EQ(preprocess("  two\tBLUE-stars,\n3 x "), (Tokens{"two", "bluestars", "3", "x"}));
  EXPECT_TRUE(preprocess("?!. ,").empty());
}

TEST(Preprocess, IdempotentOnRandomStrings) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> len(0, 40), byte(1, 255);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s(static_cast<std::size_t>(len(rng)), ' ');
    for (char& c : s) c = static_cast<char>(byte(rng));
    const Tokens once = preprocess(s);
    ASSERT_EQ(preprocess(join(once)), once) << "trial " << trial;
    for (const auto& t : once) {
      for (char c : t) ASSERT_TRUE((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'));
    }
  }
}

TEST(Vocab, ReservedTokensComeFirst) {
  Vocabulary v;
  EXPECT_EQ(v.size(), kNumReserved);
  EXPECT_EQ(v.token(kPadId), "<pad>");
  EXPECT_EQ(v.token(kSosId), "<sos>");
  EXPECT_EQ(v.token(kEosId), "<eos>");
  EXPECT_EQ(v.token(kUnkId), "<unk>");
  EXPECT_THROW((void)v.token(kNumReserved), ContractError);
}

TEST(Vocab, SingletonsBelowThresholdAreDropped) {
  const Vocabulary v = Vocabulary::build({{"a", "b", "c"}, {"d", "e"}}, 5);
  EXPECT_EQ(v.size(), kNumReserved);
  EXPECT_EQ(v.id("a"), kUnkId);
}

TEST(Vocab, CountAtThresholdIsKept) {
  const Vocabulary v = Vocabulary::build({{"w", "w", "w"}, {"w", "w", "x"}}, 5);
  EXPECT_EQ(v.size(), kNumReserved + 1);
  EXPECT_EQ(v.id("w"), kNumReserved);
  EXPECT_EQ(v.count("w"), 5);
}

TEST(Vocab, MembershipMatchesCountingOracle) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> word(0, 29), len(1, 12), ncap(1, 60), thr(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tokens> caps(static_cast<std::size_t>(ncap(rng)));
    for (auto& c : caps) {
      c.resize(static_cast<std::size_t>(len(rng)));
      for (auto& w : c) w = "w" + std::to_string(word(rng));
    }
    const int min_count = thr(rng);
    std::map<std::string, int> oracle;
    for (const auto& c : caps)
      for (const auto& w : c) oracle[w] += 1;
    const Vocabulary v = Vocabulary::build(caps, min_count);
    int expected_size = kNumReserved;
    for (const auto& [w, n] : oracle) {
      ASSERT_EQ(v.contains(w), n >= min_count) << w;
      if (n >= min_count) {
        ++expected_size;
        EXPECT_EQ(v.count(w), n);
      }
    }
    ASSERT_EQ(v.size(), expected_size);
    for (int id = kNumReserved + 1; id < v.size(); ++id) {
      const int prev = v.count(v.token(id - 1)), cur = v.count(v.token(id));
      ASSERT_TRUE(prev > cur || (prev == cur && v.token(id - 1) < v.token(id)));
    }
    ASSERT_EQ(Vocabulary::build(caps, min_count), v);
  }
}

TEST(Vocab, EncodeDecodeReplacesUnknownWords) {
  const Vocabulary v = Vocabulary::build({{"a", "red", "circle"}, {"a", "red"}}, 1);
  const Tokens in = {"a", "green", "circle", "red"};
  EXPECT_EQ(v.decode(v.encode(in)), (Tokens{"a", "<unk>", "circle", "red"}));
  EXPECT_EQ(v.encode({}), TokenSequence{});
}

TEST_F(TempDir, VocabSaveLoad) {
  const Vocabulary v = Vocabulary::build({{"b", "a", "b"}, {"c"}}, 1);
  v.save((dir_ / "vocab.txt").string());
  EXPECT_EQ(slurp(dir_ / "vocab.txt"), "<pad>\n<sos>\n<eos>\n<unk>\nb\na\nc\n");
  const Vocabulary back = Vocabulary::load((dir_ / "vocab.txt").string());
  EXPECT_EQ(back.tokens(), v.tokens());
  std::ofstream(dir_ / "bad.txt") << "a\nb\nc\nd\n";
  EXPECT_THROW(Vocabulary::load((dir_ / "bad.txt").string()), IoError);
  EXPECT_THROW(Vocabulary::load((dir_ / "missing.txt").string()), IoError);
}

TEST(Attributes, TopWordsAndVectors) {
  const Vocabulary v = Vocabulary::build({{"a", "a", "a", "red", "red", "circle", "blue", "star"}}, 1);
  const AttributeSpec spec = build_attributes(v, 3);
  // a:3 red:2 then blue, circle, star tie at 1 and go lexicographically.
  EXPECT_EQ(spec.words, (std::vector<std::string>{"a", "red", "blue"}));
  EXPECT_EQ(spec.vector_for({{"green", "square"}}), Vector::Zero(3));
  Vector one_hot = Vector::Zero(3);
  one_hot(1) = 1.0;
  EXPECT_EQ(spec.vector_for({{"one", "red", "thing"}}), one_hot);
  const Vector both = spec.vector_for({{"a", "thing"}, {"blue", "a"}});
  EXPECT_DOUBLE_EQ(both(0), 0.5);
  EXPECT_DOUBLE_EQ(both(1), 0.0);
  EXPECT_DOUBLE_EQ(both(2), 0.5);
  EXPECT_THROW(build_attributes(v, 6), ContractError);
  EXPECT_THROW(build_attributes(v, 0), ContractError);
}

TEST(Generate, RecordsAreWellFormed) {
  DatasetOptions o;
  o.n_train = 150;
  o.attr_dim = 12;
  const Dataset ds = generate_dataset(o);
  EXPECT_EQ(ds.train.size(), 150u);
  EXPECT_EQ(ds.val.size(), 20u);
  EXPECT_EQ(ds.test.size(), 20u);
  std::set<int> ids;
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const SceneRecord& r : *split) {
      EXPECT_NO_THROW(r.validate());
      EXPECT_TRUE(ids.insert(r.id).second);
      EXPECT_EQ(r.annotations.regions(), 16);
      EXPECT_EQ(r.annotations.feature_dim(), 16);
      EXPECT_GE(r.scene.objects.size(), 1u);
      EXPECT_LE(r.scene.objects.size(), 3u);
      EXPECT_EQ(r.captions.size(), 2u);
      ASSERT_EQ(r.attributes.size(), 12);
      const double s = r.attributes.sum();
      EXPECT_TRUE(s == 0.0 || std::abs(s - 1.0) < 1e-12);
      EXPECT_GE(r.attributes.minCoeff(), 0.0);
      std::set<std::pair<int, int>> cells;
      for (const auto& obj : r.scene.objects) EXPECT_TRUE(cells.insert({obj.row, obj.col}).second);
    }
  }
}

TEST(Generate, CaptionRelationsMatchTheScene) {
  DatasetOptions o;
  o.n_train = 500;
  const Dataset ds = generate_dataset(o);
  int relations = 0;
  for (const SceneRecord& r : ds.train) {
    for (const Tokens& c : r.captions) {
      ASSERT_TRUE(relations_hold(c, r.scene)) << join(c);
      ASSERT_TRUE(caption_consistent(c, r.scene)) << join(c);
      for (const auto& w : c) relations += (w == "left" || w == "right" || w == "above" || w == "below");
      // Every named object exists in the scene.
      for (std::size_t i = 0; i + 2 < c.size(); ++i) {
        if (c[i] != "a") continue;
        bool found = false;
        for (const auto& obj : r.scene.objects) found |= obj.color == c[i + 1] && obj.shape == c[i + 2];
        EXPECT_TRUE(found) << join(c);
      }
    }
  }
  EXPECT_GT(relations, 100);
}

TEST(Generate, ConsistencyCheckerRejectsWrongRelations) {
  Scene s{4, 4, {{"circle", "red", 0, 0}, {"star", "blue", 2, 3}}};
  EXPECT_TRUE(caption_consistent({"a", "red", "circle", "left", "of", "a", "blue", "star"}, s));
  EXPECT_FALSE(caption_consistent({"a", "red", "circle", "right", "of", "a", "blue", "star"}, s));
  EXPECT_FALSE(relations_hold({"a", "red", "circle", "right", "of", "a", "blue", "star"}, s));
  EXPECT_TRUE(relations_hold({"a", "blue", "star", "below", "a", "red", "circle"}, s));
  EXPECT_TRUE(caption_consistent({"a", "red", "circle", "above", "a", "blue", "star"}, s));
  EXPECT_FALSE(caption_consistent({"a", "blue", "star", "above", "a", "red", "circle"}, s));
  EXPECT_FALSE(caption_consistent({"a", "green", "circle", "above", "a", "blue", "star"}, s));
}

TEST(Generate, ShapesAndColorsBecomeAttributes) {
  DatasetOptions o;
  o.n_train = 100;
  o.attr_dim = 16;
  o.seed = 7;
  const Dataset ds = generate_dataset(o);
  std::set<std::string> words(ds.attributes.words.begin(), ds.attributes.words.end());
  for (const char* s : kShapes) EXPECT_TRUE(words.count(s)) << s;
  for (const char* c : kColors) EXPECT_TRUE(words.count(c)) << c;
}

TEST(Generate, InvalidSizesAreContractErrors) {
  DatasetOptions o;
  o.n_val = 0;
  EXPECT_THROW(generate_dataset(o), ContractError);
  o = {};
  o.grid_cols = 0;
  EXPECT_THROW(generate_dataset(o), ContractError);
}

TEST_F(TempDir, SameSeedGivesIdenticalFiles) {
  DatasetOptions o;
  o.n_train = 40;
  o.seed = 11;
  write_dataset(generate_dataset(o), (dir_ / "a").string());
  write_dataset(generate_dataset(o), (dir_ / "b").string());
  o.seed = 12;
  write_dataset(generate_dataset(o), (dir_ / "c").string());
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "vocab.txt", "attrs.txt",
                        "train.refs.txt", "val.refs.txt", "test.refs.txt"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_NE(slurp(dir_ / "a" / "train.jsonl"), slurp(dir_ / "c" / "train.jsonl"));
}

TEST_F(TempDir, DatasetRoundTrip) {
  DatasetOptions o;
  o.n_train = 30;
  const Dataset ds = generate_dataset(o);
  write_dataset(ds, dir_.string());
  const Dataset back = read_dataset(dir_.string());
  ASSERT_EQ(back.train.size(), ds.train.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    const SceneRecord &a = ds.train[i], &b = back.train[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.captions, b.captions);
    EXPECT_EQ(a.annotations.annotations, b.annotations.annotations);
    EXPECT_EQ(a.attributes, b.attributes);
    ASSERT_EQ(a.scene.objects.size(), b.scene.objects.size());
    for (std::size_t k = 0; k < a.scene.objects.size(); ++k) {
      EXPECT_EQ(a.scene.objects[k].shape, b.scene.objects[k].shape);
      EXPECT_EQ(a.scene.objects[k].row, b.scene.objects[k].row);
    }
  }
  EXPECT_EQ(back.vocab.tokens(), ds.vocab.tokens());
  EXPECT_EQ(back.attributes.words, ds.attributes.words);
  const auto refs = read_references((dir_ / "test.refs.txt").string());
  ASSERT_EQ(refs.size(), ds.test.size());
  for (std::size_t i = 0; i < refs.size(); ++i) EXPECT_EQ(refs[i], ds.test[i].captions);
}

TEST_F(TempDir, LoadRejectsInvalidRecords) {
  DatasetOptions o;
  o.n_train = 2;
  o.min_count = 1;
  o.attr_dim = 4;
  const Dataset ds = generate_dataset(o);
  SceneRecord r = ds.train[0];
  r.annotations.annotations.conservativeResize(5, Eigen::NoChange);
  EXPECT_THROW(record_from_json(record_to_json(r)), ContractError);
  r = ds.train[0];
  r.captions.clear();
  EXPECT_THROW(record_from_json(record_to_json(r)), ContractError);
  r = ds.train[0];
  r.attributes(0) = 3.0;
  EXPECT_THROW(record_from_json(record_to_json(r)), ContractError);
  EXPECT_THROW(record_from_json("{\"id\": 1"), IoError);
  EXPECT_THROW(record_from_json("{\"id\": 1}"), IoError);
  EXPECT_THROW(read_records((dir_ / "nope.jsonl").string()), IoError);
}

TEST_F(TempDir, ReferenceFileFormat) {
  std::ofstream(dir_ / "refs.txt") << "IMG 3\nA red circle.\nthere is a red circle\nIMG 9\na star\n";
  const auto refs = read_references((dir_ / "refs.txt").string());
  ASSERT_EQ(refs.size(), 2u);
  EXPECT_EQ(refs[0][0], (Tokens{"a", "red", "circle"}));
  EXPECT_EQ(refs[1].size(), 1u);
  std::ofstream(dir_ / "bad.txt") << "orphan line\nIMG 1\n";
  EXPECT_THROW(read_references((dir_ / "bad.txt").string()), IoError);
}

TEST(MakeExamples, CaptionSelection) {
  DatasetOptions o;
  o.n_train = 5;
  o.min_count = 1;
  const Dataset ds = generate_dataset(o);
  const auto all = make_examples(ds.train, ds.vocab);
  EXPECT_EQ(all.size(), 10u);
  const auto first = make_examples(ds.train, ds.vocab, 1);
  ASSERT_EQ(first.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(first[i].record_id, ds.train[i].id);
    EXPECT_EQ(ds.vocab.decode(first[i].caption), ds.train[i].captions[0]);
    EXPECT_EQ(first[i].attributes, ds.train[i].attributes);
  }
  EXPECT_THROW(make_examples(ds.train, ds.vocab, -1), ContractError);
}

}  // namespace
}  // namespace sgn
