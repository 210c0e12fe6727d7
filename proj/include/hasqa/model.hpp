#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hasqa/composition.hpp"
#include "hasqa/data.hpp"
#include "hasqa/encoder.hpp"
#include "hasqa/hashing.hpp"
#include "hasqa/tensor.hpp"

namespace hasqa {

struct ModelConfig {
  int vocab_size = 0;
  int seq_len = 12;      // L
  int embed_dim = 32;    // E
  int model_dim = 32;    // D
  int ffn_dim = 64;      // F
  int attn_dim = 16;     // M
  int layers = 1;
  double beta = 5.0;
  Activation activation = Activation::kTanh;
  bool layer_norm = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Mutable view of one parameter tensor (column-major storage).
template <typename T>
struct TensorView {
  std::string name;
  std::string group;
  std::span<T> data;
  Eigen::Index rows;
  Eigen::Index cols;
};

// theta: everything learned by gradient descent.
template <typename T>
struct ModelParams {
  ModelConfig config;
  EmbeddingParams<T> embedding;
  EncoderParams<T> encoder;
  AttentionParams<T> attention;

  static ModelParams zeros(const ModelConfig& config);

  // Stable order; names double as checkpoint keys.
  std::vector<TensorView<T>> tensors();
  std::vector<TensorView<const T>> tensors() const;

  template <typename U>
  ModelParams<U> cast() const;

  std::size_t parameter_count() const;
};

// Uniform in [-0.05, 0.05]; the PAD embedding column is zero.
ModelParams<float> init_params(const ModelConfig& config, std::uint64_t seed);

// Answers compose over all L columns of their matrix, as stored in the code
// index, which keeps no padding information.
inline Mask full_mask(std::size_t length) { return Mask(length, true); }

template <typename T>
Mat<T> encode_sequence(const ModelParams<T>& p, const TokenSequence& seq,
                       EncoderCache<T>* cache = nullptr);

// v^q = max_pool(H^q) over real tokens. Questions never pass through hashing.
template <typename T>
Vec<T> question_vector(const ModelParams<T>& p, const TokenSequence& question);

// tanh(beta H^a).
template <typename T>
Mat<T> soft_answer_matrix(const ModelParams<T>& p, const TokenSequence& answer);

// sgn(tanh(beta H^a)).
BinaryMatrix answer_code(const ModelParams<float>& p, const TokenSequence& answer);

struct LossSettings {
  double margin = 0.1;
  double delta = 0.0;
};

// Test hooks. pos_shift is added to the positive answer's H^a before
// hashing and pos_grad receives d loss / d H^a. Non-null codes replace
// sgn(B) for the constraint term, holding the binary codes fixed.
template <typename T>
struct TripletHooks {
  const Mat<T>* pos_shift = nullptr;
  Mat<T>* pos_grad = nullptr;
  const BinaryMatrix* pos_code = nullptr;
  const BinaryMatrix* neg_code = nullptr;
};

struct TripletOutcome {
  double loss = 0.0;
  double hinge = 0.0;
  double constraint_pos = 0.0;
  double constraint_neg = 0.0;
  double s_pos = 0.0;
  double s_neg = 0.0;
  BinaryMatrix code_pos;
  BinaryMatrix code_neg;
};

// Training objective for one (q, a+, a-): hinge on soft-code cosines plus
// delta * ||B - sgn(B)||_F^2 for both answers, with sgn(B) taken from this
// same forward pass and held fixed. When grads is non-null, gradients of the
// loss are accumulated into it.
template <typename T>
TripletOutcome triplet_loss(const ModelParams<T>& p, const TokenSequence& question,
                            const TokenSequence& positive, const TokenSequence& negative,
                            const LossSettings& settings, ModelParams<T>* grads = nullptr,
                            const TripletHooks<T>& hooks = {});

// "HASP" checkpoint: magic, u32 version, u32 meta count, (string key, f64)
// meta entries, u32 tensor count, (string name, u32 rows, u32 cols) shape
// table, then raw little-endian f32 data per tensor in declared order.
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::vector<std::uint8_t> serialize_checkpoint(const ModelParams<float>& p);
ModelParams<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const ModelParams<float>& p, const std::filesystem::path& path);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace hasqa
