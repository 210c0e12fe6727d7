#include <random>

#include "doctest.h"
#include "hasqa/binary_io.hpp"
#include "hasqa/codestore.hpp"
#include "hasqa/errors.hpp"
#include "support.hpp"

using namespace hasqa;
using namespace hasqa::testing;

namespace {

BinaryMatrix random_code(std::uint32_t D, std::uint32_t L, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  BinaryMatrix c(D, L);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t l = 0; l < L; ++l) c.set(d, l, coin(rng));
  return c;
}

CodeStore random_store(std::uint32_t D, std::uint32_t L, int n, std::mt19937_64& rng) {
  CodeStore s(D, L);
  for (int i = 0; i < n; ++i) s.insert("ans-" + std::to_string(i), random_code(D, L, rng));
  return s;
}

std::size_t format_offset(std::span<const std::uint8_t> bytes) {
  try {
    deserialize_store(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected a format error");
  return 0;
}

ModelParams<float> small_model() {
  ModelConfig c;
  c.vocab_size = 12;
  c.seq_len = 6;
  c.embed_dim = 8;
  c.model_dim = 8;
  c.ffn_dim = 8;
  c.attn_dim = 4;
  return init_params(c, 21);
}

TokenSequence seq(std::vector<TokenId> ids) {
  TokenSequence s;
  for (auto id : ids) s.mask.push_back(id != kPadId);
  s.ids = std::move(ids);
  return s;
}

}  // namespace

TEST_CASE("memory_report examples") {
  const auto one = memory_report(768, 200, 1);
  CHECK(one.float_bytes == 614400);
  CHECK(one.binary_bytes == 19200);
  CHECK(one.ratio == 32.0);

  const auto pool = memory_report(768, 200, 500);
  CHECK(pool.binary_bytes == 9600000);
  CHECK(pool.float_bytes == 307200000);

  const auto tiny = memory_report(8, 8, 1);
  CHECK(tiny.float_bytes == 256);
  CHECK(tiny.binary_bytes == 8);
  CHECK(tiny.ratio == 32.0);

  const auto dbl = memory_report(8, 8, 1, 8);
  CHECK(dbl.float_bytes == 512);
  CHECK(dbl.ratio == 64.0);

  CHECK(memory_report(3, 3, 2).binary_bytes == 4);
  CHECK_THROWS_AS(memory_report(0, 3, 1), InputError);
}

TEST_CASE("empty store serializes to the 24-byte header") {
  const CodeStore s(8, 4);
  const auto bytes = serialize_store(s);
  CHECK(bytes.size() == kCodeStoreHeaderBytes);
  CHECK(bytes.size() == 24);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HASB");
  CHECK(deserialize_store(bytes) == s);

  const auto built = build_index(small_model(), std::map<std::string, TokenSequence>{});
  CHECK(built.size() == 0);
  CHECK(serialize_store(built).size() == 24);
}

TEST_CASE("header layout is little-endian") {
  std::mt19937_64 rng(1);
  const auto s = random_store(3, 5, 2, rng);
  const auto bytes = serialize_store(s);
  ByteReader r(bytes);
  r.bytes(4, "magic");
  CHECK(r.integer<std::uint32_t>("version") == 1);
  CHECK(r.integer<std::uint32_t>("D") == 3);
  CHECK(r.integer<std::uint32_t>("L") == 5);
  CHECK(r.integer<std::uint64_t>("count") == 2);
  CHECK(r.string("id") == "ans-0");
  const auto payload = r.bytes(2, "payload");
  CHECK(std::equal(payload.begin(), payload.end(), s.entries()[0].code.bytes().begin()));
  CHECK(bytes.size() == 24 + 2 * (4 + 5 + 2));
}

TEST_CASE("insert keeps entries sorted and rejects duplicates") {
  std::mt19937_64 rng(2);
  CodeStore s(2, 2);
  for (const char* id : {"m", "c", "x", "a"}) s.insert(id, random_code(2, 2, rng));
  std::vector<std::string> ids;
  for (const auto& e : s.entries()) ids.push_back(e.id);
  CHECK(ids == std::vector<std::string>{"a", "c", "m", "x"});
  CHECK(s.find("c") == &s.entries()[1].code);
  CHECK(s.find("zz") == nullptr);
  CHECK_THROWS_AS(s.insert("c", random_code(2, 2, rng)), InputError);
  CHECK_THROWS_AS(s.insert("q", random_code(3, 2, rng)), UsageError);
  CHECK(s.payload_bytes() == 4);
}

TEST_CASE("save/load round trips") {
  std::mt19937_64 rng(3);
  TempDir dir;
  std::uniform_int_distribution<int> dim(1, 40), n(0, 12);
  for (int t = 0; t < 25; ++t) {
    const auto s = random_store(static_cast<std::uint32_t>(dim(rng)),
                                static_cast<std::uint32_t>(dim(rng)), n(rng), rng);
    save_store(s, dir / "s.hasb");
    const auto loaded = load_store(dir / "s.hasb");
    CHECK(loaded == s);
    CHECK(read_file(dir / "s.hasb") == serialize_store(s));
  }
}

TEST_CASE("corrupted stores report byte offsets") {
  std::mt19937_64 rng(4);
  const auto s = random_store(4, 4, 3, rng);  // entries: 4 + 5 + 2 = 11 bytes
  const auto bytes = serialize_store(s);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK(format_offset(magic) == 0);

  auto version = bytes;
  version[4] = 2;
  CHECK(format_offset(version) == 4);

  // A count larger than the file runs out of bytes at the end.
  auto count = bytes;
  count[16] = 200;
  CHECK(format_offset(count) == bytes.size());

  // Truncated inside the second entry's payload.
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 24 + 11 + 10);
  CHECK(format_offset(cut) == 24 + 11 + 9);

  // Truncated inside the header.
  const std::vector<std::uint8_t> header(bytes.begin(), bytes.begin() + 10);
  CHECK(format_offset(header) == 8);

  auto trailing = bytes;
  trailing.push_back(7);
  CHECK(format_offset(trailing) == bytes.size());

  // Swap the first two ids so entries are out of order.
  auto unsorted = bytes;
  unsorted[24 + 4 + 4] = '1';
  unsorted[24 + 11 + 4 + 4] = '0';
  CHECK(format_offset(unsorted) == 24 + 11);

  // Pad bits must be zero: D*L = 15 leaves one pad bit.
  CodeStore odd(3, 5);
  odd.insert("a", random_code(3, 5, rng));
  auto padbit = serialize_store(odd);
  padbit.back() |= 0x80;
  CHECK(format_offset(padbit) == padbit.size() - 1);
}

TEST_CASE("build_index is deterministic and equals the recompute path") {
  const auto p = small_model();
  std::map<std::string, TokenSequence> answers = {
      {"b", seq({2, 3, 4, 0, 0, 0})}, {"a", seq({5, 6, 0, 0, 0, 0})}, {"c", seq({7, 8, 9, 10, 11, 2})}};
  const auto s1 = build_index(p, answers);
  const auto s2 = build_index(p, answers);
  CHECK(serialize_store(s1) == serialize_store(s2));
  CHECK(s1.rows() == 8);
  CHECK(s1.cols() == 6);
  for (const auto& [id, sq] : answers) {
    const auto* code = s1.find(id);
    REQUIRE(code != nullptr);
    CHECK(*code == hard_binarize(soft_binarize(encode_sequence(p, sq), p.config.beta)));
  }
  const std::vector<std::pair<std::string, TokenSequence>> dup = {{"a", seq({2, 0, 0, 0, 0, 0})},
                                                                  {"a", seq({3, 0, 0, 0, 0, 0})}};
  CHECK_THROWS_AS(build_index(p, dup), InputError);
}
