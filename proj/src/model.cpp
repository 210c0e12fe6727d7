#include "hasqa/model.hpp"

#include <random>
#include <string>

#include "hasqa/binary_io.hpp"
#include "hasqa/errors.hpp"
#include "hasqa/objective.hpp"

namespace hasqa {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw InputError(std::string(name) + " must be >= 1");
  };
  positive(vocab_size, "vocab_size");
  positive(seq_len, "L");
  positive(embed_dim, "E");
  positive(model_dim, "D");
  positive(ffn_dim, "F");
  positive(attn_dim, "M");
  positive(layers, "layers");
  if (vocab_size < 2) throw InputError("vocabulary must hold PAD and UNK");
  if (!(beta >= 1.0)) throw InputError("beta must be >= 1");
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& c) {
  c.validate();
  ModelParams<T> p;
  p.config = c;
  const auto V = c.vocab_size, L = c.seq_len, E = c.embed_dim, D = c.model_dim,
             F = c.ffn_dim, M = c.attn_dim;
  p.embedding.table = Mat<T>::Zero(E, V);
  p.embedding.positional = Mat<T>::Zero(E, L);
  if (E != D) p.encoder.input_proj = Mat<T>::Zero(D, E);
  p.encoder.activation = c.activation;
  p.encoder.layer_norm = c.layer_norm;
  for (int i = 0; i < c.layers; ++i) {
    EncoderLayer<T> layer;
    layer.wq = Mat<T>::Zero(D, D);
    layer.wk = Mat<T>::Zero(D, D);
    layer.wv = Mat<T>::Zero(D, D);
    layer.w1 = Mat<T>::Zero(F, D);
    layer.b1 = Vec<T>::Zero(F);
    layer.w2 = Mat<T>::Zero(D, F);
    layer.b2 = Vec<T>::Zero(D);
    layer.ln1_gain = Vec<T>::Zero(D);
    layer.ln1_bias = Vec<T>::Zero(D);
    layer.ln2_gain = Vec<T>::Zero(D);
    layer.ln2_bias = Vec<T>::Zero(D);
    p.encoder.layers.push_back(std::move(layer));
  }
  p.attention.wq = Mat<T>::Zero(M, D);
  p.attention.wa = Mat<T>::Zero(M, D);
  p.attention.m = Vec<T>::Zero(M);
  return p;
}

namespace {

template <typename T, typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn) {
  fn("embedding.table", "embedding", p.embedding.table);
  fn("embedding.positional", "embedding", p.embedding.positional);
  if (p.encoder.input_proj.size() > 0) fn("encoder.input_proj", "encoder", p.encoder.input_proj);
  for (std::size_t i = 0; i < p.encoder.layers.size(); ++i) {
    auto& l = p.encoder.layers[i];
    const std::string prefix = "encoder.layer" + std::to_string(i) + ".";
    fn(prefix + "wq", "encoder", l.wq);
    fn(prefix + "wk", "encoder", l.wk);
    fn(prefix + "wv", "encoder", l.wv);
    fn(prefix + "w1", "encoder", l.w1);
    fn(prefix + "b1", "encoder", l.b1);
    fn(prefix + "w2", "encoder", l.w2);
    fn(prefix + "b2", "encoder", l.b2);
    fn(prefix + "ln1_gain", "encoder", l.ln1_gain);
    fn(prefix + "ln1_bias", "encoder", l.ln1_bias);
    fn(prefix + "ln2_gain", "encoder", l.ln2_gain);
    fn(prefix + "ln2_bias", "encoder", l.ln2_bias);
  }
  fn("attention.wq", "attention.wq", p.attention.wq);
  fn("attention.wa", "attention.wa", p.attention.wa);
  fn("attention.m", "attention.m", p.attention.m);
}

}  // namespace

template <typename T>
std::vector<TensorView<T>> ModelParams<T>::tensors() {
  std::vector<TensorView<T>> out;
  visit_tensors<T>(*this, [&](std::string name, const char* group, auto& m) {
    out.push_back({std::move(name), group, std::span<T>(m.data(), static_cast<std::size_t>(m.size())),
                   m.rows(), m.cols()});
  });
  return out;
}

template <typename T>
std::vector<TensorView<const T>> ModelParams<T>::tensors() const {
  std::vector<TensorView<const T>> out;
  visit_tensors<T>(*this, [&](std::string name, const char* group, const auto& m) {
    out.push_back({std::move(name), group,
                   std::span<const T>(m.data(), static_cast<std::size_t>(m.size())), m.rows(),
                   m.cols()});
  });
  return out;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  auto out = ModelParams<U>::zeros(config);
  auto dst = out.tensors();
  const auto src = tensors();
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::size_t k = 0; k < src[i].data.size(); ++k) {
      dst[i].data[k] = static_cast<U>(src[i].data[k]);
    }
  }
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.data.size();
  return n;
}

ModelParams<float> init_params(const ModelConfig& config, std::uint64_t seed) {
  auto p = ModelParams<float>::zeros(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-0.05f, 0.05f);
  for (auto& t : p.tensors()) {
    for (auto& v : t.data) v = dist(rng);
  }
  p.embedding.table.col(kPadId).setZero();
  // LayerNorm starts as the identity map.
  for (auto& layer : p.encoder.layers) {
    layer.ln1_gain.setOnes();
    layer.ln1_bias.setZero();
    layer.ln2_gain.setOnes();
    layer.ln2_bias.setZero();
  }
  return p;
}

template <typename T>
Mat<T> encode_sequence(const ModelParams<T>& p, const TokenSequence& seq, EncoderCache<T>* cache) {
  if (static_cast<int>(seq.length()) != p.config.seq_len) {
    throw UsageError("sequence length " + std::to_string(seq.length()) +
                     " does not match model L=" + std::to_string(p.config.seq_len));
  }
  return encode(embed(seq, p.embedding), seq.mask, p.encoder, cache);
}

template <typename T>
Vec<T> question_vector(const ModelParams<T>& p, const TokenSequence& question) {
  return max_pool(encode_sequence(p, question), question.mask).value;
}

template <typename T>
Mat<T> soft_answer_matrix(const ModelParams<T>& p, const TokenSequence& answer) {
  return soft_binarize(encode_sequence(p, answer), p.config.beta);
}

BinaryMatrix answer_code(const ModelParams<float>& p, const TokenSequence& answer) {
  return hard_binarize(soft_answer_matrix(p, answer));
}

namespace {

template <typename T>
struct AnswerPass {
  EncoderCache<T> cache;
  Mat<T> soft;
  BinaryMatrix code;
  AttentionResult<T> attention;
  CosineResult<T> cos;
  ConstraintLoss<T> constraint;
};

template <typename T>
AnswerPass<T> answer_forward(const ModelParams<T>& p, const TokenSequence& answer,
                             const Vec<T>& vq, const Mat<T>* shift, const BinaryMatrix* fixed_code) {
  AnswerPass<T> a;
  Mat<T> h = encode_sequence(p, answer, &a.cache);
  if (shift) h += *shift;
  a.soft = soft_binarize(h, p.config.beta);
  a.code = fixed_code ? *fixed_code : hard_binarize(a.soft);
  a.attention = attend(a.soft, vq, p.attention, full_mask(answer.length()));
  a.cos = cosine(vq, a.attention.value);
  a.constraint = binary_constraint_loss(a.soft, a.code);
  return a;
}

// Backpropagates d loss / d s (through v^a and B) and delta * J^c into
// grads; returns the contribution to d loss / d v^q.
template <typename T>
Vec<T> answer_backward(const ModelParams<T>& p, const TokenSequence& answer, const Vec<T>& vq,
                       const AnswerPass<T>& a, T grad_score, T delta, ModelParams<T>& grads,
                       Mat<T>* probe_grad) {
  const Vec<T> grad_va = grad_score * a.cos.grad_v;
  const auto ag = attend_backward(grad_va, a.soft, vq, p.attention, full_mask(answer.length()),
                                  a.attention, grads.attention);
  const Mat<T> grad_soft = ag.b + delta * a.constraint.grad;
  const Mat<T> grad_h = soft_binarize_backward(a.soft, grad_soft, p.config.beta);
  if (probe_grad) *probe_grad = grad_h;
  const Mat<T> grad_x = encode_backward(grad_h, a.cache, p.encoder, grads.encoder);
  embed_backward(answer, grad_x, grads.embedding);
  return grad_score * a.cos.grad_u + ag.vq;
}

}  // namespace

template <typename T>
TripletOutcome triplet_loss(const ModelParams<T>& p, const TokenSequence& question,
                            const TokenSequence& positive, const TokenSequence& negative,
                            const LossSettings& settings, ModelParams<T>* grads,
                            const TripletHooks<T>& hooks) {
  EncoderCache<T> qcache;
  const Mat<T> hq = encode_sequence(p, question, &qcache);
  const auto pool = max_pool(hq, question.mask);
  const Vec<T>& vq = pool.value;

  const auto pos = answer_forward(p, positive, vq, hooks.pos_shift, hooks.pos_code);
  const auto neg =
      answer_forward(p, negative, vq, static_cast<const Mat<T>*>(nullptr), hooks.neg_code);
  const auto h = hinge(static_cast<double>(pos.cos.value), static_cast<double>(neg.cos.value),
                       settings.margin);

  TripletOutcome out;
  out.hinge = h.loss;
  out.constraint_pos = static_cast<double>(pos.constraint.value);
  out.constraint_neg = static_cast<double>(neg.constraint.value);
  const TripletTerms terms{out.hinge, out.constraint_pos, out.constraint_neg};
  out.loss = total_loss(std::span(&terms, 1), settings.delta);
  out.s_pos = static_cast<double>(pos.cos.value);
  out.s_neg = static_cast<double>(neg.cos.value);
  out.code_pos = pos.code;
  out.code_neg = neg.code;

  if (grads) {
    const T delta = static_cast<T>(settings.delta);
    Vec<T> grad_vq = answer_backward(p, positive, vq, pos, static_cast<T>(h.grad_pos), delta,
                                     *grads, hooks.pos_grad);
    grad_vq += answer_backward(p, negative, vq, neg, static_cast<T>(h.grad_neg), delta, *grads,
                               static_cast<Mat<T>*>(nullptr));
    const Mat<T> grad_hq = max_pool_backward(grad_vq, pool, hq.cols());
    const Mat<T> grad_xq = encode_backward(grad_hq, qcache, p.encoder, grads->encoder);
    embed_backward(question, grad_xq, grads->embedding);
  }
  return out;
}

namespace {

constexpr char kCheckpointMagic[4] = {'H', 'A', 'S', 'P'};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelParams<float>& p) {
  ByteWriter w;
  w.raw(std::string_view(kCheckpointMagic, 4));
  w.integer(kCheckpointVersion);
  const auto& c = p.config;
  const std::vector<std::pair<std::string, double>> meta = {
      {"vocab_size", c.vocab_size}, {"L", c.seq_len},       {"E", c.embed_dim},
      {"D", c.model_dim},           {"F", c.ffn_dim},       {"M", c.attn_dim},
      {"layers", c.layers},         {"beta", c.beta},
      {"activation", static_cast<double>(static_cast<std::uint32_t>(c.activation))},
      {"layer_norm", c.layer_norm ? 1.0 : 0.0}};
  w.integer(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.string(k);
    w.f64(v);
  }
  const auto tensors = p.tensors();
  w.integer(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.string(t.name);
    w.integer(static_cast<std::uint32_t>(t.rows));
    w.integer(static_cast<std::uint32_t>(t.cols));
  }
  for (const auto& t : tensors) {
    for (float v : t.data) w.f32(v);
  }
  return w.take();
}

ModelParams<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) {
    throw FormatError(0, "bad checkpoint magic");
  }
  const auto version_at = r.offset();
  if (r.integer<std::uint32_t>("version") != kCheckpointVersion) {
    throw FormatError(version_at, "unsupported checkpoint version");
  }
  ModelConfig c;
  const auto n_meta = r.integer<std::uint32_t>("meta count");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    const auto at = r.offset();
    const std::string key = r.string("meta key");
    const double v = r.f64("meta value");
    if (key == "vocab_size") c.vocab_size = static_cast<int>(v);
    else if (key == "L") c.seq_len = static_cast<int>(v);
    else if (key == "E") c.embed_dim = static_cast<int>(v);
    else if (key == "D") c.model_dim = static_cast<int>(v);
    else if (key == "F") c.ffn_dim = static_cast<int>(v);
    else if (key == "M") c.attn_dim = static_cast<int>(v);
    else if (key == "layers") c.layers = static_cast<int>(v);
    else if (key == "beta") c.beta = v;
    else if (key == "activation") {
      if (v != 0.0 && v != 1.0) throw FormatError(at, "unknown activation code");
      c.activation = static_cast<Activation>(static_cast<std::uint32_t>(v));
    } else if (key == "layer_norm") c.layer_norm = v != 0.0;
    else throw FormatError(at, "unknown checkpoint key '" + key + "'");
  }
  ModelParams<float> p;
  try {
    p = ModelParams<float>::zeros(c);
  } catch (const InputError& e) {
    throw FormatError(r.offset(), std::string("invalid checkpoint config: ") + e.what());
  }
  auto tensors = p.tensors();
  const auto count_at = r.offset();
  if (r.integer<std::uint32_t>("tensor count") != tensors.size()) {
    throw FormatError(count_at, "tensor count does not match config");
  }
  for (const auto& t : tensors) {
    const auto at = r.offset();
    const std::string name = r.string("tensor name");
    const auto rows = r.integer<std::uint32_t>("rows");
    const auto cols = r.integer<std::uint32_t>("cols");
    if (name != t.name || rows != t.rows || cols != t.cols) {
      throw FormatError(at, "tensor '" + name + "' does not match expected '" + t.name + "'");
    }
  }
  for (auto& t : tensors) {
    for (auto& v : t.data) v = r.f32("tensor data");
  }
  if (!r.done()) throw FormatError(r.offset(), "trailing bytes after checkpoint");
  return p;
}

void save_checkpoint(const ModelParams<float>& p, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(p));
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

#define HASQA_INSTANTIATE(T)                                                                   \
  template struct ModelParams<T>;                                                              \
  template Mat<T> encode_sequence(const ModelParams<T>&, const TokenSequence&,                 \
                                  EncoderCache<T>*);                                           \
  template Vec<T> question_vector(const ModelParams<T>&, const TokenSequence&);                \
  template Mat<T> soft_answer_matrix(const ModelParams<T>&, const TokenSequence&);             \
  template TripletOutcome triplet_loss(const ModelParams<T>&, const TokenSequence&,            \
                                       const TokenSequence&, const TokenSequence&,             \
                                       const LossSettings&, ModelParams<T>*,                   \
                                       const TripletHooks<T>&);

HASQA_INSTANTIATE(float)
HASQA_INSTANTIATE(double)
#undef HASQA_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace hasqa
