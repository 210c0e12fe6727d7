#include <algorithm>
#include <random>

#include "doctest.h"
#include "hasqa/data.hpp"
#include "hasqa/errors.hpp"
#include "support.hpp"

using namespace hasqa;
using hasqa::testing::TempDir;
using hasqa::testing::write_text;

namespace {

Vocabulary ab_vocab() { return build_vocab({{"a", "b", "a"}}, 1); }

}  // namespace

TEST_CASE("build_vocab orders by frequency then lexicographically") {
  const auto v = ab_vocab();
  CHECK(v.size() == 4);
  CHECK(v.id("<pad>") == kPadId);
  CHECK(v.id("<unk>") == kUnkId);
  CHECK(v.id("a") == 2);
  CHECK(v.id("b") == 3);

  const auto xy = build_vocab({{"x", "y"}, {"y"}}, 1);
  CHECK(xy.id("y") == 2);
  CHECK(xy.id("x") == 3);

  const auto ties = build_vocab({{"c", "b", "a"}}, 1);
  CHECK(ties.token(2) == "a");
  CHECK(ties.token(3) == "b");
  CHECK(ties.token(4) == "c");
}

TEST_CASE("build_vocab threshold maps rare tokens to UNK") {
  const auto v = build_vocab({{"a", "b"}}, 2);
  CHECK(v.size() == 2);
  CHECK(v.id("a") == kUnkId);
  CHECK(v.id("b") == kUnkId);
  CHECK_FALSE(v.contains("a"));
}

TEST_CASE("build_vocab errors") {
  CHECK_THROWS_AS(build_vocab({}, 1), InputError);
  CHECK_THROWS_AS(build_vocab({{}, {}}, 1), InputError);
  CHECK_THROWS_AS(build_vocab({{"a"}}, 0), InputError);
}

TEST_CASE("build_vocab is independent of corpus order") {
  Corpus corpus;
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> word(0, 25), len(1, 8);
  for (int i = 0; i < 40; ++i) {
    std::vector<std::string> doc;
    for (int k = len(rng); k > 0; --k) doc.push_back(std::string(1, static_cast<char>('a' + word(rng))));
    corpus.push_back(doc);
  }
  const auto ref = build_vocab(corpus, 1);
  for (int trial = 0; trial < 5; ++trial) {
    auto shuffled = corpus;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto& doc : shuffled) std::shuffle(doc.begin(), doc.end(), rng);
    CHECK(build_vocab(shuffled, 1) == ref);
  }
}

TEST_CASE("vocabulary ids are dense and round-trip through text") {
  const auto v = build_vocab({{"x", "y", "y", "z"}}, 1);
  for (TokenId i = 0; i < static_cast<TokenId>(v.size()); ++i) CHECK(v.id(v.token(i)) == i);
  TempDir dir;
  v.save(dir / "vocab.txt");
  CHECK(Vocabulary::load(dir / "vocab.txt") == v);

  write_text(dir / "bad.txt", "<pad>\t0\n<unk>\t1\nq\t7\n");
  CHECK_THROWS_AS(Vocabulary::load(dir / "bad.txt"), ParseError);
}

TEST_CASE("tokenize lowercases and splits on whitespace") {
  CHECK(tokenize("  Hello\tWORLD  x\n") == std::vector<std::string>{"hello", "world", "x"});
  CHECK(tokenize("   ").empty());
}

TEST_CASE("tokenize_pad examples") {
  const auto v = ab_vocab();
  const auto s = tokenize_pad({"a", "b"}, 4, v);
  CHECK(s.ids == std::vector<TokenId>{2, 3, 0, 0});
  CHECK(s.mask == Mask{true, true, false, false});

  const auto t = tokenize_pad({"a", "b", "a"}, 2, v);
  CHECK(t.ids == std::vector<TokenId>{2, 3});
  CHECK(t.mask == Mask{true, true});

  const auto u = tokenize_pad({"zzz"}, 2, v);
  CHECK(u.ids == std::vector<TokenId>{1, 0});
  CHECK(u.mask == Mask{true, false});

  CHECK_THROWS_AS(tokenize_pad({}, 4, v), InputError);
  CHECK_THROWS_AS(tokenize_pad({"a"}, 0, v), InputError);
}

TEST_CASE("tokenize_pad invariants") {
  const auto v = ab_vocab();
  const std::vector<std::string> text = {"a", "b", "b", "a", "q", "a"};
  for (int L = 1; L <= 9; ++L) {
    const auto s = tokenize_pad(text, L, v);
    REQUIRE(s.ids.size() == static_cast<std::size_t>(L));
    REQUIRE(s.mask.size() == static_cast<std::size_t>(L));
    CHECK(s.valid() >= 1);
    for (int i = 0; i < L; ++i) CHECK(s.mask[i] == (s.ids[i] != kPadId));
    // Re-padding the kept prefix gives the same sequence.
    const std::vector<std::string> prefix(text.begin(),
                                          text.begin() + static_cast<long>(s.valid()));
    CHECK(tokenize_pad(prefix, L, v) == s);
    CHECK(tokenize_pad(text, L, v) == s);
  }
}

TEST_CASE("load_dataset reads one question") {
  TempDir dir;
  write_text(dir / "d.jsonl",
             R"({"qid":"q1","question":"a b","answers":[{"aid":"x","text":"a","label":1},{"aid":"y","text":"b b","label":0}]})"
             "\n");
  const auto ds = load_dataset(dir / "d.jsonl", 4, ab_vocab());
  CHECK(ds.size() == 1);
  CHECK(ds.pools.at("q1").size() == 2);
  CHECK(ds.positives.at("q1") == std::set<std::string>{"x"});
  CHECK(ds.negatives("q1") == std::vector<std::string>{"y"});
  CHECK(ds.questions.at("q1").ids == std::vector<TokenId>{2, 3, 0, 0});
  CHECK(ds.answers.at("y").ids == std::vector<TokenId>{3, 3, 0, 0});
}

TEST_CASE("load_dataset skips questions without positives and warns") {
  TempDir dir;
  write_text(dir / "d.jsonl",
             R"({"qid":"q1","question":"a","answers":[{"aid":"x","text":"a","label":1},{"aid":"y","text":"b","label":0}]})"
             "\n"
             R"({"qid":"q2","question":"b","answers":[{"aid":"z","text":"a","label":0}]})"
             "\n");
  std::vector<std::string> warnings;
  const auto ds = load_dataset(dir / "d.jsonl", 3, ab_vocab(),
                               [&](const std::string& w) { warnings.push_back(w); });
  CHECK(ds.size() == 1);
  CHECK(ds.questions.count("q2") == 0);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("q2") != std::string::npos);
}

TEST_CASE("load_dataset parse errors name the line") {
  TempDir dir;
  const std::string good =
      R"({"qid":"q1","question":"a","answers":[{"aid":"x","text":"a","label":1}]})";
  write_text(dir / "missing.jsonl",
             good + "\n" + R"({"qid":"q2","question":"a","answers":[{"aid":"y","text":"a"}]})" + "\n");
  try {
    load_dataset(dir / "missing.jsonl", 3, ab_vocab());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }

  write_text(dir / "broken.jsonl", good + "\n\n{not json\n");
  try {
    load_dataset(dir / "broken.jsonl", 3, ab_vocab());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }

  write_text(dir / "empty.jsonl",
             R"({"qid":"q1","question":"a","answers":[{"aid":"x","text":"a","label":0}]})"
             "\n");
  CHECK_THROWS_AS(load_dataset(dir / "empty.jsonl", 3, ab_vocab(), [](const std::string&) {}),
                  InputError);
  CHECK_THROWS_AS(load_dataset(dir / "nope.jsonl", 3, ab_vocab()), InputError);
}

TEST_CASE("read_corpus tokenizes questions and answers") {
  TempDir dir;
  write_text(dir / "d.jsonl",
             R"({"qid":"q1","question":"A b","answers":[{"aid":"x","text":"c","label":1}]})"
             "\n");
  const auto corpus = read_corpus(dir / "d.jsonl");
  REQUIRE(corpus.size() == 2);
  CHECK(corpus[0] == std::vector<std::string>{"a", "b"});
  CHECK(corpus[1] == std::vector<std::string>{"c"});
}
