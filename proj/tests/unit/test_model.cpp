#include <random>
#include <set>

#include "doctest.h"
#include "hasqa/errors.hpp"
#include "hasqa/model.hpp"
#include "support.hpp"

using namespace hasqa;
using namespace hasqa::testing;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 10;
  c.seq_len = 5;
  c.embed_dim = 6;
  c.model_dim = 4;
  c.ffn_dim = 7;
  c.attn_dim = 3;
  c.layers = 2;
  return c;
}

TokenSequence seq(std::vector<TokenId> ids) {
  TokenSequence s;
  for (auto id : ids) s.mask.push_back(id != kPadId);
  s.ids = std::move(ids);
  return s;
}

}  // namespace

TEST_CASE("init_params is bounded, seeded and keeps PAD at zero") {
  const auto c = small_config();
  const auto p = init_params(c, 11);
  CHECK(p.embedding.table.col(kPadId).isZero());
  for (const auto& t : p.tensors()) {
    for (float v : t.data) {
      if (t.name.find(".ln") != std::string::npos) continue;
      CHECK(std::abs(v) <= 0.05f);
    }
  }
  CHECK(p.encoder.layers[0].ln1_gain.isOnes());
  CHECK(p.encoder.layers[1].ln2_bias.isZero());

  const auto q = init_params(c, 11);
  const auto r = init_params(c, 12);
  CHECK(serialize_checkpoint(p) == serialize_checkpoint(q));
  CHECK(serialize_checkpoint(p) != serialize_checkpoint(r));
}

TEST_CASE("tensor views cover every parameter once with unique names") {
  auto p = ModelParams<float>::zeros(small_config());
  std::set<std::string> names;
  std::size_t total = 0;
  for (const auto& t : p.tensors()) {
    CHECK(names.insert(t.name).second);
    CHECK(t.data.size() == static_cast<std::size_t>(t.rows * t.cols));
    total += t.data.size();
  }
  CHECK(total == p.parameter_count());
  CHECK(names.count("encoder.input_proj") == 1);
  CHECK(names.count("attention.m") == 1);
  CHECK(names.count("encoder.layer1.wq") == 1);

  auto same = small_config();
  same.embed_dim = same.model_dim;
  const auto q = ModelParams<float>::zeros(same);
  for (const auto& t : q.tensors()) CHECK(t.name != "encoder.input_proj");
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.vocab_size = 1;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = small_config();
  c.attn_dim = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = small_config();
  c.beta = 0.5;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("cast to double and back is exact") {
  const auto p = init_params(small_config(), 3);
  const auto back = p.cast<double>().cast<float>();
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(p));
}

TEST_CASE("encode_sequence checks the sequence length") {
  const auto p = init_params(small_config(), 1);
  CHECK_THROWS_AS(encode_sequence(p, seq({2, 3, 0})), UsageError);
  CHECK(encode_sequence(p, seq({2, 3, 0, 0, 0})).rows() == 4);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  for (bool ln : {true, false}) {
    auto c = small_config();
    c.layer_norm = ln;
    c.activation = ln ? Activation::kTanh : Activation::kIdentity;
    const auto p = init_params(c, 5);
    save_checkpoint(p, dir / "m.hasp");
    const auto q = load_checkpoint(dir / "m.hasp");
    CHECK(q.config == p.config);
    CHECK(serialize_checkpoint(q) == serialize_checkpoint(p));
    CHECK(q.encoder.layer_norm == ln);
  }
}

TEST_CASE("corrupted checkpoints raise format errors with offsets") {
  const auto bytes = serialize_checkpoint(init_params(small_config(), 5));

  auto bad_magic = bytes;
  bad_magic[1] = 'X';
  try {
    deserialize_checkpoint(bad_magic);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }

  auto bad_version = bytes;
  bad_version[4] = 9;
  try {
    deserialize_checkpoint(bad_version);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
  }

  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    try {
      deserialize_checkpoint(truncated);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() <= cut);
    }
  }

  auto trailing = bytes;
  trailing.push_back(0);
  try {
    deserialize_checkpoint(trailing);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == bytes.size());
  }
}

TEST_CASE("triplet_loss combines hinge and constraint from one forward pass") {
  const auto p = init_params(small_config(), 8);
  const auto q = seq({2, 3, 4, 0, 0});
  const auto a = seq({5, 6, 0, 0, 0});
  const auto b = seq({7, 8, 9, 2, 0});
  const LossSettings settings{0.1, 1e-3};
  const auto out = triplet_loss(p, q, a, b, settings);
  CHECK(out.code_pos == answer_code(p, a));
  CHECK(out.code_neg == answer_code(p, b));
  CHECK(out.hinge == doctest::Approx(std::max(0.0, 0.1 - out.s_pos + out.s_neg)));
  CHECK(out.loss ==
        doctest::Approx(out.hinge + 1e-3 * (out.constraint_pos + out.constraint_neg)));
  const auto soft = soft_answer_matrix(p, a);
  CHECK(out.constraint_pos ==
        doctest::Approx(binary_constraint_loss(soft, answer_code(p, a)).value).epsilon(1e-5));
  CHECK(std::abs(out.s_pos) <= 1.0 + 1e-6);
}

TEST_CASE("question_vector is the masked max-pool of the encoder output") {
  const auto p = init_params(small_config(), 9);
  const auto q = seq({2, 3, 0, 0, 0});
  const auto h = encode_sequence(p, q);
  const auto v = question_vector(p, q);
  for (Eigen::Index d = 0; d < h.rows(); ++d) CHECK(v[d] == std::max(h(d, 0), h(d, 1)));
}
