#include "hasqa/encoder.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "hasqa/errors.hpp"

namespace hasqa {

template <typename T>
Mat<T> embed(const TokenSequence& seq, const EmbeddingParams<T>& p) {
  const auto L = static_cast<Eigen::Index>(seq.length());
  if (seq.mask.size() != seq.ids.size()) throw UsageError("mask/ids length mismatch");
  if (p.positional.cols() < L) {
    throw UsageError("sequence length " + std::to_string(L) +
                     " exceeds positional table");
  }
  Mat<T> out = Mat<T>::Zero(p.table.rows(), L);
  for (Eigen::Index i = 0; i < L; ++i) {
    const TokenId id = seq.ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= p.table.cols()) {
      throw IndexError("token id " + std::to_string(id) + " >= vocabulary size " +
                       std::to_string(p.table.cols()));
    }
    if (!seq.mask[static_cast<std::size_t>(i)]) continue;
    out.col(i) = p.table.col(id) + p.positional.col(i);
  }
  return out;
}

template <typename T>
void embed_backward(const TokenSequence& seq, const Mat<T>& grad_out,
                    EmbeddingParams<T>& grads) {
  const auto L = static_cast<Eigen::Index>(seq.length());
  if (grad_out.cols() != L || grad_out.rows() != grads.table.rows()) {
    throw UsageError("embed_backward: gradient shape mismatch");
  }
  for (Eigen::Index i = 0; i < L; ++i) {
    if (!seq.mask[static_cast<std::size_t>(i)]) continue;
    const TokenId id = seq.ids[static_cast<std::size_t>(i)];
    if (id == kPadId) continue;
    grads.table.col(id) += grad_out.col(i);
    grads.positional.col(i) += grad_out.col(i);
  }
}

namespace {

template <typename T>
void apply_activation(Activation a, Mat<T>& m) {
  if (a == Activation::kTanh) m = m.array().tanh().matrix();
}

template <typename T>
Mat<T> activation_grad(Activation a, const Mat<T>& act, const Mat<T>& upstream) {
  if (a == Activation::kIdentity) return upstream;
  return (upstream.array() * (T(1) - act.array().square())).matrix();
}

// Normalizes each column of x to zero mean and unit variance.
template <typename T>
Mat<T> normalize_columns(const Mat<T>& x, Vec<T>& inv_std) {
  const auto D = static_cast<T>(x.rows());
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mean = x.colwise().sum() / D;
  Mat<T> centered = x.rowwise() - mean;
  const Eigen::Matrix<T, 1, Eigen::Dynamic> var = centered.colwise().squaredNorm() / D;
  inv_std = (var.array() + static_cast<T>(kLayerNormEps)).rsqrt().transpose();
  return centered * inv_std.asDiagonal();
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& grad_out, const Mat<T>& norm, const Vec<T>& inv_std,
                           const Vec<T>& gain, Vec<T>& grad_gain, Vec<T>& grad_bias) {
  grad_gain += (grad_out.array() * norm.array()).rowwise().sum().matrix();
  grad_bias += grad_out.rowwise().sum();
  const Mat<T> d_norm = gain.asDiagonal() * grad_out;
  const auto D = static_cast<T>(norm.rows());
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mean_d = d_norm.colwise().sum() / D;
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mean_dx =
      (d_norm.array() * norm.array()).colwise().sum() / D;
  Mat<T> out = d_norm.rowwise() - mean_d;
  out -= (norm.array().rowwise() * mean_dx.array()).matrix();
  return out * inv_std.asDiagonal();
}

}  // namespace

template <typename T>
Mat<T> encode(const Mat<T>& x, const Mask& mask, const EncoderParams<T>& p,
              EncoderCache<T>* cache) {
  const Eigen::Index L = x.cols();
  if (static_cast<Eigen::Index>(mask.size()) != L) {
    throw UsageError("encode: mask length " + std::to_string(mask.size()) +
                     " != sequence length " + std::to_string(L));
  }
  if (count_valid(mask) == 0) throw UsageError("encode: sequence is fully masked");
  if (!x.allFinite()) throw NumericError("encode: non-finite input");

  Mat<T> h;
  if (p.input_proj.size() > 0) {
    if (p.input_proj.cols() != x.rows()) throw UsageError("encode: input projection shape mismatch");
    h = p.input_proj * x;
  } else {
    h = x;
  }
  const Eigen::Index D = h.rows();
  const T scale = T(1) / std::sqrt(static_cast<T>(D));

  if (cache) {
    cache->input = x;
    cache->mask = mask;
    cache->layers.clear();
  }
  for (const auto& layer : p.layers) {
    if (layer.wq.rows() != D || layer.wq.cols() != D) {
      throw UsageError("encode: layer width does not match model width");
    }
    EncoderLayerCache<T> lc;
    lc.input = h;
    lc.q = layer.wq * h;
    lc.k = layer.wk * h;
    lc.v = layer.wv * h;
    // Row i holds query i's logits over all keys.
    Mat<T> logits = (lc.q.transpose() * lc.k) * scale;
    lc.attn.resize(L, L);
    for (Eigen::Index i = 0; i < L; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (Eigen::Index j = 0; j < L; ++j) {
        if (mask[static_cast<std::size_t>(j)]) mx = std::max(mx, logits(i, j));
      }
      T sum = 0;
      for (Eigen::Index j = 0; j < L; ++j) {
        const T e = mask[static_cast<std::size_t>(j)] ? std::exp(logits(i, j) - mx) : T(0);
        lc.attn(i, j) = e;
        sum += e;
      }
      lc.attn.row(i) /= sum;
    }
    Mat<T> sum1 = h + lc.v * lc.attn.transpose();
    if (p.layer_norm) {
      lc.norm1 = normalize_columns<T>(sum1, lc.inv_std1);
      lc.hidden = (layer.ln1_gain.asDiagonal() * lc.norm1).colwise() + layer.ln1_bias;
    } else {
      lc.hidden = std::move(sum1);
    }
    lc.act = (layer.w1 * lc.hidden).colwise() + layer.b1;
    apply_activation(p.activation, lc.act);
    Mat<T> sum2 = ((layer.w2 * lc.act).colwise() + layer.b2) + lc.hidden;
    if (p.layer_norm) {
      lc.norm2 = normalize_columns<T>(sum2, lc.inv_std2);
      h = (layer.ln2_gain.asDiagonal() * lc.norm2).colwise() + layer.ln2_bias;
    } else {
      h = std::move(sum2);
    }
    if (cache) cache->layers.push_back(std::move(lc));
  }
  if (!h.allFinite()) throw NumericError("encode: non-finite output");
  if (cache) cache->output = h;
  return h;
}

template <typename T>
Mat<T> encode_backward(const Mat<T>& grad_out, const EncoderCache<T>& cache,
                       const EncoderParams<T>& p, EncoderParams<T>& grads) {
  if (cache.layers.size() != p.layers.size() || grads.layers.size() != p.layers.size()) {
    throw UsageError("encode_backward: cache does not match parameters");
  }
  if (grad_out.rows() != cache.output.rows() || grad_out.cols() != cache.output.cols()) {
    throw UsageError("encode_backward: gradient shape does not match cached output");
  }
  const Eigen::Index L = grad_out.cols();
  const Eigen::Index D = grad_out.rows();
  const T scale = T(1) / std::sqrt(static_cast<T>(D));

  Mat<T> g = grad_out;
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& layer = p.layers[li];
    auto& gl = grads.layers[li];
    const auto& lc = cache.layers[li];

    // out = LN2(hidden + W2 act + b2)
    if (p.layer_norm) {
      g = layer_norm_backward<T>(g, lc.norm2, lc.inv_std2, layer.ln2_gain, gl.ln2_gain,
                                 gl.ln2_bias);
    }
    gl.w2.noalias() += g * lc.act.transpose();
    gl.b2 += g.rowwise().sum();
    const Mat<T> d_pre = activation_grad<T>(p.activation, lc.act, layer.w2.transpose() * g);
    gl.w1.noalias() += d_pre * lc.hidden.transpose();
    gl.b1 += d_pre.rowwise().sum();
    Mat<T> d_hidden = g + layer.w1.transpose() * d_pre;

    // hidden = LN1(H + V A^T)
    if (p.layer_norm) {
      d_hidden = layer_norm_backward<T>(d_hidden, lc.norm1, lc.inv_std1, layer.ln1_gain,
                                        gl.ln1_gain, gl.ln1_bias);
    }
    const Mat<T> d_v = d_hidden * lc.attn;
    const Mat<T> d_attn = d_hidden.transpose() * lc.v;  // (i, j) = dZ_i . V_j
    Mat<T> d_logits(L, L);
    for (Eigen::Index i = 0; i < L; ++i) {
      const T dot = lc.attn.row(i).dot(d_attn.row(i));
      d_logits.row(i) = (lc.attn.row(i).array() * (d_attn.row(i).array() - dot)).matrix();
    }
    d_logits *= scale;
    const Mat<T> d_q = lc.k * d_logits.transpose();
    const Mat<T> d_k = lc.q * d_logits;

    gl.wq.noalias() += d_q * lc.input.transpose();
    gl.wk.noalias() += d_k * lc.input.transpose();
    gl.wv.noalias() += d_v * lc.input.transpose();
    g = d_hidden + layer.wq.transpose() * d_q + layer.wk.transpose() * d_k +
        layer.wv.transpose() * d_v;
  }
  if (p.input_proj.size() > 0) {
    grads.input_proj.noalias() += g * cache.input.transpose();
    return p.input_proj.transpose() * g;
  }
  return g;
}

template Mat<float> embed(const TokenSequence&, const EmbeddingParams<float>&);
template Mat<double> embed(const TokenSequence&, const EmbeddingParams<double>&);
template void embed_backward(const TokenSequence&, const Mat<float>&, EmbeddingParams<float>&);
template void embed_backward(const TokenSequence&, const Mat<double>&, EmbeddingParams<double>&);
template Mat<float> encode(const Mat<float>&, const Mask&, const EncoderParams<float>&,
                           EncoderCache<float>*);
template Mat<double> encode(const Mat<double>&, const Mask&, const EncoderParams<double>&,
                            EncoderCache<double>*);
template Mat<float> encode_backward(const Mat<float>&, const EncoderCache<float>&,
                                    const EncoderParams<float>&, EncoderParams<float>&);
template Mat<double> encode_backward(const Mat<double>&, const EncoderCache<double>&,
                                     const EncoderParams<double>&, EncoderParams<double>&);

}  // namespace hasqa
