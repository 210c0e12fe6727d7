#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hasqa/data.hpp"
#include "hasqa/hashing.hpp"
#include "hasqa/model.hpp"

namespace hasqa {

struct TrainConfig {
  double beta = 5.0;
  double delta = 1e-6;
  double margin = 0.1;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  int batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 42;
  int seq_len = 12;   // L
  int model_dim = 32;  // D
  int embed_dim = 32;  // E
  int attn_dim = 16;   // M
  int ffn_dim = 64;    // F
  int layers = 1;
  int min_count = 1;
  std::vector<double> beta_grid = {1, 2, 5, 10, 20};
  std::vector<double> delta_grid = {0, 1e-7, 1e-6, 1e-5, 1e-4};

  // Throws InputError on out-of-grid beta/delta or non-positive sizes.
  void validate() const;
  // Applies one key=value setting; throws InputError on unknown keys.
  void set(const std::string& key, const std::string& value);
  // Flat key=value text, one per line, in a fixed key order.
  std::string to_text() const;
  ModelConfig model_config(int vocab_size) const;
};

// '#' starts a comment; blank lines ignored.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

// AdamW (decoupled weight decay).
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ModelConfig& config, double learning_rate, double weight_decay);
  void step(ModelParams<float>& params, const ModelParams<float>& grads);
  std::int64_t steps() const { return t_; }

 private:
  double lr_ = 1e-3;
  double decay_ = 0.01;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::optional<ModelParams<float>> m_;
  std::optional<ModelParams<float>> v_;
};

struct Triplet {
  std::string qid;
  std::string positive;
  std::string negative;
};

struct TrainState {
  ModelParams<float> params;
  AdamW optimizer;
  // Hard codes sgn(B) from the latest forward pass of each answer.
  std::map<std::string, BinaryMatrix> codes;
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  std::vector<double> loss_history;  // one entry per step
  std::mt19937_64 rng;

  static TrainState create(const TrainConfig& config, int vocab_size);
};

// Uniform over the question's non-positive pool members; nullopt (with a
// warning) when there are none.
std::optional<std::string> sample_negative(const std::string& qid, const Dataset& dataset,
                                           std::mt19937_64& rng,
                                           const WarningSink& warn = default_warning_sink);

// One alternating step: forward every triplet, fix sgn(B) for its answers,
// accumulate J and its gradient, then one AdamW update. Returns the batch J.
double train_step(std::span<const Triplet> batch, const Dataset& dataset,
                  const TrainConfig& config, TrainState& state);

// One positive-negative triplet per (question, positive), shuffled.
std::vector<Triplet> epoch_triplets(const Dataset& dataset, std::mt19937_64& rng,
                                    const WarningSink& warn = default_warning_sink);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean J per triplet
  double dev_p1 = 0.0;
  double dev_mrr = 0.0;
  double mean_abs_b = 0.0;
};

struct TrainResult {
  ModelParams<float> params;  // from the best dev P@1 epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  std::vector<double> loss_history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mean |tanh(beta H^a)| over the given answers, all L columns.
double mean_abs_soft_code(const ModelParams<float>& params,
                          std::span<const TokenSequence> answers);

// Up to `limit` answers of the dataset in id order.
std::vector<TokenSequence> heldout_answers(const Dataset& dataset, std::size_t limit = 64);

TrainResult train(const TrainConfig& config, int vocab_size, const Dataset& train_set,
                  const Dataset& dev_set, const EpochCallback& on_epoch = {});

std::string history_csv(std::span<const EpochRecord> history);

struct GradCheckOptions {
  ModelConfig model{.vocab_size = 12, .seq_len = 6, .embed_dim = 8, .model_dim = 8,
                    .ffn_dim = 8, .attn_dim = 4, .layers = 1, .beta = 5.0};
  int points = 10;
  double delta = 1e-2;
  double margin = 0.1;
  double step = 1e-3;
  double tolerance = 1e-4;
  double init_scale = 0.3;
  std::uint64_t seed = 7;
  // Negates this group's analytic gradient before comparing; a harness
  // self-test that a sign error is caught.
  std::string flip_group;
};

struct GradCheckReport {
  std::map<std::string, double> max_relative_error;
  std::vector<std::string> failures;
  int points = 0;
  bool passed() const { return failures.empty(); }
};

// Central differences in double precision against the analytic gradient of
// the triplet objective, per parameter group plus the hashing input H^a.
GradCheckReport grad_check(const GradCheckOptions& options);

struct SensitivityRow {
  double beta;
  double delta;
  double dev_p1;
  double dev_mrr;
};

std::vector<SensitivityRow> sensitivity(const TrainConfig& base, int vocab_size,
                                        const Dataset& train_set, const Dataset& dev_set);

std::string sensitivity_csv(std::span<const SensitivityRow> rows);

}  // namespace hasqa
