#include "hasqa/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hasqa/codestore.hpp"
#include "hasqa/errors.hpp"
#include "hasqa/serve.hpp"

namespace hasqa {

namespace {

bool in_grid(double v, const std::vector<double>& grid) {
  return std::any_of(grid.begin(), grid.end(), [v](double g) {
    return std::abs(g - v) <= 1e-12 * std::max(1.0, std::abs(g));
  });
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || !std::isfinite(v)) {
    throw InputError("config '" + key + "': '" + value + "' is not a number");
  }
  return v;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InputError("config '" + key + "': '" + value + "' is not an integer");
  }
  return v;
}

std::vector<double> parse_grid(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw InputError("config '" + key + "': empty grid");
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_grid(const std::vector<double>& grid) {
  std::string s;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i) s += ',';
    s += format_double(grid[i]);
  }
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(beta >= 1.0)) throw InputError("beta must be >= 1");
  if (!(delta >= 0.0)) throw InputError("delta must be >= 0");
  if (!in_grid(beta, beta_grid)) {
    throw InputError("beta " + format_double(beta) + " is not in beta_grid {" +
                     format_grid(beta_grid) + "}");
  }
  if (!in_grid(delta, delta_grid)) {
    throw InputError("delta " + format_double(delta) + " is not in delta_grid {" +
                     format_grid(delta_grid) + "}");
  }
  if (!(margin > 0.0)) throw InputError("margin must be > 0");
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw InputError("weight decay must be >= 0");
  for (auto [v, name] : {std::pair{batch_size, "batch_size"}, {epochs, "epochs"}, {seq_len, "L"},
                         {model_dim, "D"}, {embed_dim, "E"}, {attn_dim, "M"}, {ffn_dim, "F"},
                         {layers, "layers"}, {min_count, "min_count"}}) {
    if (v < 1) throw InputError(std::string(name) + " must be >= 1");
  }
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  auto as_int = [&] {
    const auto v = parse_int(key, value);
    if (v < 0 || v > (std::int64_t{1} << 30)) throw InputError("config '" + key + "' out of range");
    return static_cast<int>(v);
  };
  if (key == "beta") beta = parse_double(key, value);
  else if (key == "delta") delta = parse_double(key, value);
  else if (key == "margin") margin = parse_double(key, value);
  else if (key == "lr" || key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "weight_decay") weight_decay = parse_double(key, value);
  else if (key == "batch_size") batch_size = as_int();
  else if (key == "epochs") epochs = as_int();
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "L") seq_len = as_int();
  else if (key == "D") model_dim = as_int();
  else if (key == "E") embed_dim = as_int();
  else if (key == "M") attn_dim = as_int();
  else if (key == "F") ffn_dim = as_int();
  else if (key == "layers") layers = as_int();
  else if (key == "min_count") min_count = as_int();
  else if (key == "beta_grid") beta_grid = parse_grid(key, value);
  else if (key == "delta_grid") delta_grid = parse_grid(key, value);
  else throw InputError("unknown config key '" + key + "'");
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "beta=" << format_double(beta) << '\n'
      << "delta=" << format_double(delta) << '\n'
      << "margin=" << format_double(margin) << '\n'
      << "learning_rate=" << format_double(learning_rate) << '\n'
      << "weight_decay=" << format_double(weight_decay) << '\n'
      << "batch_size=" << batch_size << '\n'
      << "epochs=" << epochs << '\n'
      << "seed=" << seed << '\n'
      << "L=" << seq_len << '\n'
      << "D=" << model_dim << '\n'
      << "E=" << embed_dim << '\n'
      << "M=" << attn_dim << '\n'
      << "F=" << ffn_dim << '\n'
      << "layers=" << layers << '\n'
      << "min_count=" << min_count << '\n'
      << "beta_grid=" << format_grid(beta_grid) << '\n'
      << "delta_grid=" << format_grid(delta_grid) << '\n';
  return out.str();
}

ModelConfig TrainConfig::model_config(int vocab_size) const {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.seq_len = seq_len;
  c.embed_dim = embed_dim;
  c.model_dim = model_dim;
  c.ffn_dim = ffn_dim;
  c.attn_dim = attn_dim;
  c.layers = layers;
  c.beta = beta;
  return c;
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key=value");
    try {
      config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const InputError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

AdamW::AdamW(const ModelConfig& config, double learning_rate, double weight_decay)
    : lr_(learning_rate),
      decay_(weight_decay),
      m_(ModelParams<float>::zeros(config)),
      v_(ModelParams<float>::zeros(config)) {}

void AdamW::step(ModelParams<float>& params, const ModelParams<float>& grads) {
  if (!m_ || !v_) throw UsageError("AdamW used before initialisation");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = m_->tensors();
  auto v = v_->tensors();
  if (p.size() != g.size() || p.size() != m.size()) throw UsageError("AdamW: parameter layout changed");
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t k = 0; k < p[t].data.size(); ++k) {
      const double gk = g[t].data[k];
      const double mk = beta1_ * m[t].data[k] + (1.0 - beta1_) * gk;
      const double vk = beta2_ * v[t].data[k] + (1.0 - beta2_) * gk * gk;
      m[t].data[k] = static_cast<float>(mk);
      v[t].data[k] = static_cast<float>(vk);
      const double update = (mk / c1) / (std::sqrt(vk / c2) + eps_);
      const double pk = p[t].data[k];
      p[t].data[k] = static_cast<float>(pk - lr_ * (update + decay_ * pk));
    }
  }
  params.embedding.table.col(kPadId).setZero();
}

TrainState TrainState::create(const TrainConfig& config, int vocab_size) {
  config.validate();
  const auto model = config.model_config(vocab_size);
  TrainState s{init_params(model, config.seed),
               AdamW(model, config.learning_rate, config.weight_decay), {}, 0, 0, {}, {}};
  s.rng.seed(config.seed + 0x9E3779B97F4A7C15ull);
  return s;
}

std::optional<std::string> sample_negative(const std::string& qid, const Dataset& dataset,
                                           std::mt19937_64& rng, const WarningSink& warn) {
  const auto negatives = dataset.negatives(qid);
  if (negatives.empty()) {
    warn("question '" + qid + "' has no negative candidates; triplet skipped");
    return std::nullopt;
  }
  std::uniform_int_distribution<std::size_t> pick(0, negatives.size() - 1);
  return negatives[pick(rng)];
}

std::vector<Triplet> epoch_triplets(const Dataset& dataset, std::mt19937_64& rng,
                                    const WarningSink& warn) {
  std::vector<Triplet> out;
  for (const auto& qid : dataset.question_order) {
    for (const auto& pos : dataset.positives.at(qid)) {
      if (auto neg = sample_negative(qid, dataset, rng, warn)) out.push_back({qid, pos, *neg});
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

double train_step(std::span<const Triplet> batch, const Dataset& dataset,
                  const TrainConfig& config, TrainState& state) {
  if (batch.empty()) throw UsageError("train_step: empty batch");
  auto grads = ModelParams<float>::zeros(state.params.config);
  const LossSettings settings{config.margin, config.delta};
  double total = 0.0;
  for (const auto& t : batch) {
    const auto out = triplet_loss(state.params, dataset.questions.at(t.qid),
                                  dataset.answers.at(t.positive), dataset.answers.at(t.negative),
                                  settings, &grads);
    if (!std::isfinite(out.loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << state.step << " (beta=" << config.beta
          << ", delta=" << config.delta << ", triplet q=" << t.qid << " a+=" << t.positive
          << " a-=" << t.negative << ", s+=" << out.s_pos << ", s-=" << out.s_neg << ")";
      throw NumericError(msg.str());
    }
    state.codes.insert_or_assign(t.positive, out.code_pos);
    state.codes.insert_or_assign(t.negative, out.code_neg);
    total += out.loss;
  }
  state.optimizer.step(state.params, grads);
  ++state.step;
  state.loss_history.push_back(total);
  return total;
}

double mean_abs_soft_code(const ModelParams<float>& params, std::span<const TokenSequence> answers) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& a : answers) {
    const Mat<float> b = soft_answer_matrix(params, a);
    sum += static_cast<double>(b.cwiseAbs().sum());
    n += static_cast<std::size_t>(b.size());
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::vector<TokenSequence> heldout_answers(const Dataset& dataset, std::size_t limit) {
  std::vector<TokenSequence> out;
  for (const auto& [id, seq] : dataset.answers) {
    if (out.size() >= limit) break;
    out.push_back(seq);
  }
  return out;
}

TrainResult train(const TrainConfig& config, int vocab_size, const Dataset& train_set,
                  const Dataset& dev_set, const EpochCallback& on_epoch) {
  if (train_set.empty()) throw InputError("train: training split is empty");
  if (dev_set.empty()) throw InputError("train: dev split is empty");
  if (train_set.sequence_length != config.seq_len || dev_set.sequence_length != config.seq_len) {
    throw InputError("train: datasets must be tokenized at L=" + std::to_string(config.seq_len));
  }
  TrainState state = TrainState::create(config, vocab_size);
  const auto heldout = heldout_answers(dev_set);

  TrainResult result{state.params, {}, 0, {}};
  double best_p1 = -1.0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    state.epoch = epoch;
    const auto triplets = epoch_triplets(train_set, state.rng);
    if (triplets.empty()) throw InputError("train: no usable triplets");
    double loss = 0.0;
    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < triplets.size(); start += bs) {
      const auto n = std::min(bs, triplets.size() - start);
      loss += train_step(std::span(triplets).subspan(start, n), train_set, config, state);
    }

    const CodeStore store = build_index(state.params, dev_set.answers);
    const auto rankings = rank_dataset(dev_set, store, state.params);
    EpochRecord rec{epoch, loss / static_cast<double>(triplets.size()),
                    precision_at_1(rankings, dev_set.positives),
                    mean_reciprocal_rank(rankings, dev_set.positives),
                    mean_abs_soft_code(state.params, heldout)};
    result.history.push_back(rec);
    if (rec.dev_p1 > best_p1) {
      best_p1 = rec.dev_p1;
      result.best_epoch = epoch;
      result.params = state.params;
    }
    if (on_epoch) on_epoch(rec);
  }
  result.loss_history = state.loss_history;
  return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,train_loss,dev_P@1,dev_MRR,mean_abs_B\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train_loss << ',' << r.dev_p1 << ',' << r.dev_mrr << ','
        << r.mean_abs_b << '\n';
  }
  return out.str();
}

namespace {

TokenSequence random_sequence(int length, int vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(1, length);
  std::uniform_int_distribution<TokenId> tok(1, vocab - 1);
  const int n = len(rng);
  TokenSequence s{std::vector<TokenId>(static_cast<std::size_t>(length), kPadId),
                  Mask(static_cast<std::size_t>(length), false)};
  for (int i = 0; i < n; ++i) {
    s.ids[static_cast<std::size_t>(i)] = tok(rng);
    s.mask[static_cast<std::size_t>(i)] = true;
  }
  return s;
}

// Smallest gap between the largest and second-largest unmasked entry of any
// row; infinity with a single real token.
double min_pool_gap(const Mat<double>& h, const Mask& mask) {
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index d = 0; d < h.rows(); ++d) {
    double first = -std::numeric_limits<double>::infinity(), second = first;
    for (Eigen::Index i = 0; i < h.cols(); ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const double v = h(d, i);
      if (v > first) {
        second = first;
        first = v;
      } else if (v > second) {
        second = v;
      }
    }
    if (std::isfinite(second)) gap = std::min(gap, first - second);
  }
  return gap;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

}  // namespace

GradCheckReport grad_check(const GradCheckOptions& options) {
  const auto& mc = options.model;
  mc.validate();
  if (options.points < 1) throw InputError("grad_check: need at least one point");
  constexpr double kKinkGap = 1e-3;
  constexpr double kPoolGap = 1e-2;
  const LossSettings settings{options.margin, options.delta};

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  int attempts = 0;
  while (report.points < options.points) {
    if (++attempts > options.points * 200) {
      throw NumericError("grad_check: could not find points away from kinks");
    }
    auto params = ModelParams<double>::zeros(mc);
    std::uniform_real_distribution<double> init(-options.init_scale, options.init_scale);
    for (auto& t : params.tensors()) {
      for (auto& v : t.data) v = init(rng);
    }
    params.embedding.table.col(kPadId).setZero();
    const TokenSequence q = random_sequence(mc.seq_len, mc.vocab_size, rng);
    TokenSequence pos = random_sequence(mc.seq_len, mc.vocab_size, rng);
    TokenSequence neg = random_sequence(mc.seq_len, mc.vocab_size, rng);

    auto base = triplet_loss(params, q, pos, neg, settings);
    // Keep the hinge active so the similarity path carries gradient.
    if (options.margin - base.s_pos + base.s_neg < 0.0) {
      std::swap(pos, neg);
      base = triplet_loss(params, q, pos, neg, settings);
    }
    if (std::abs(options.margin - base.s_pos + base.s_neg) <= kKinkGap) continue;
    if (min_pool_gap(encode_sequence(params, q), q.mask) <= kPoolGap) continue;

    const BinaryMatrix code_pos = base.code_pos;
    const BinaryMatrix code_neg = base.code_neg;
    Mat<double> shift = Mat<double>::Zero(mc.model_dim, mc.seq_len);
    Mat<double> grad_h;
    auto grads = ModelParams<double>::zeros(mc);
    triplet_loss(params, q, pos, neg, settings, &grads,
                 TripletHooks<double>{&shift, &grad_h, &code_pos, &code_neg});

    auto loss_at = [&]() {
      return triplet_loss(params, q, pos, neg, settings, static_cast<ModelParams<double>*>(nullptr),
                          TripletHooks<double>{&shift, nullptr, &code_pos, &code_neg})
          .loss;
    };
    auto central = [&](double& x) {
      const double saved = x;
      x = saved + options.step;
      const double up = loss_at();
      x = saved - options.step;
      const double down = loss_at();
      x = saved;
      return (up - down) / (2.0 * options.step);
    };

    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    auto ptensors = params.tensors();
    const auto gtensors = grads.tensors();
    for (std::size_t t = 0; t < ptensors.size(); ++t) {
      auto& [analytic, numeric] = groups[ptensors[t].group];
      for (std::size_t k = 0; k < ptensors[t].data.size(); ++k) {
        analytic.push_back(gtensors[t].data[k]);
        numeric.push_back(central(ptensors[t].data[k]));
      }
    }
    auto& [ha, hn] = groups["hashing"];
    for (Eigen::Index k = 0; k < shift.size(); ++k) {
      ha.push_back(grad_h.data()[k]);
      hn.push_back(central(shift.data()[k]));
    }

    for (auto& [name, pair] : groups) {
      if (name == options.flip_group) {
        for (auto& v : pair.first) v = -v;
      }
      double& worst = report.max_relative_error[name];
      worst = std::max(worst, relative_error(pair.first, pair.second));
    }
    ++report.points;
  }
  for (const auto& [name, err] : report.max_relative_error) {
    if (!(err <= options.tolerance)) report.failures.push_back(name);
  }
  return report;
}

std::vector<SensitivityRow> sensitivity(const TrainConfig& base, int vocab_size,
                                        const Dataset& train_set, const Dataset& dev_set) {
  std::vector<SensitivityRow> rows;
  for (double beta : base.beta_grid) {
    for (double delta : base.delta_grid) {
      TrainConfig c = base;
      c.beta = beta;
      c.delta = delta;
      const auto r = train(c, vocab_size, train_set, dev_set);
      const auto& best = r.history.at(static_cast<std::size_t>(r.best_epoch - 1));
      rows.push_back({beta, delta, best.dev_p1, best.dev_mrr});
    }
  }
  return rows;
}

std::string sensitivity_csv(std::span<const SensitivityRow> rows) {
  std::ostringstream out;
  out.precision(9);
  out << "beta,delta,dev_P@1,dev_MRR\n";
  for (const auto& r : rows) {
    out << r.beta << ',' << r.delta << ',' << r.dev_p1 << ',' << r.dev_mrr << '\n';
  }
  return out.str();
}

}  // namespace hasqa
