#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hasqa/codestore.hpp"
#include "hasqa/composition.hpp"
#include "hasqa/data.hpp"
#include "hasqa/model.hpp"

namespace hasqa {

struct ScoredAnswer {
  std::string id;
  double score;
  bool operator==(const ScoredAnswer&) const = default;
};

struct RankingResult {
  std::string qid;
  std::vector<ScoredAnswer> ranked;  // score descending, ties by id
};

// Descending score; equal scores ordered by answer id.
void sort_ranking(std::vector<ScoredAnswer>& ranked);

using Positives = std::map<std::string, std::set<std::string>>;

// Query-time scoring against bit-packed answer codes. Keeps a reference to
// params, which must outlive the ranker.
class Ranker {
 public:
  explicit Ranker(const ModelParams<float>& params, int threads = 1);

  Vec<float> question_vector(const TokenSequence& question) const;

  // cos(v^q, v^a) with v^a composed from the code.
  double score(const Vec<float>& vq, const Vec<float>& question_proj,
               const BinaryMatrix& code) const;

  // Ranks every stored answer, or only `candidates` when non-empty.
  RankingResult rank(const std::string& qid, const TokenSequence& question, const CodeStore& store,
                     std::span<const std::string> candidates = {}) const;

 private:
  const ModelParams<float>& params_;
  BinaryAttention attention_;
  int threads_;
};

RankingResult rank(const TokenSequence& question, const CodeStore& store,
                   const ModelParams<float>& params);

// Same scores without a store: every candidate is re-encoded and re-hashed.
RankingResult rank_recompute(const std::string& qid, const TokenSequence& question,
                             std::span<const std::pair<std::string, TokenSequence>> candidates,
                             const ModelParams<float>& params);

// Soft-code serving over cached encoder outputs H^a (tanh applied per query).
RankingResult rank_soft(const std::string& qid, const TokenSequence& question,
                        std::span<const std::pair<std::string, const Mat<float>*>> features,
                        const ModelParams<float>& params);

// Averages over questions that have at least one positive; 0 when none do.
double precision_at_1(std::span<const RankingResult> rankings, const Positives& positives);
double mean_reciprocal_rank(std::span<const RankingResult> rankings, const Positives& positives);
double mean_average_precision(std::span<const RankingResult> rankings, const Positives& positives);

struct Metrics {
  double p1 = 0.0;
  double mrr = 0.0;
  double map = 0.0;
};

Metrics evaluate(std::span<const RankingResult> rankings, const Positives& positives);

// Ranks every question of the dataset against its pool from a store.
std::vector<RankingResult> rank_dataset(const Dataset& dataset, const CodeStore& store,
                                        const ModelParams<float>& params, int threads = 1);

enum class ServeMode { kRecalc, kFloatStore, kBinaryStore };
std::string_view to_string(ServeMode mode);
ServeMode parse_serve_mode(std::string_view text);

struct BenchOptions {
  int repetitions = 1;
  int warmup = 3;
  int threads = 1;
  // Float-store refuses to cache more than this many bytes.
  std::uint64_t max_float_bytes = std::uint64_t{4} << 30;
};

struct BenchReport {
  ServeMode mode;
  double seconds_per_question = 0.0;
  std::uint64_t memory_bytes = 0;  // stored answer representations only
  Metrics metrics;
  int threads = 1;
  std::size_t questions_timed = 0;
};

// Binary-store mode builds its store before timing unless one is passed.
BenchReport bench(ServeMode mode, const Dataset& dataset, const ModelParams<float>& params,
                  const BenchOptions& options = {}, const CodeStore* store = nullptr);

std::string bench_csv_header();
std::string bench_csv_row(const BenchReport& report);

}  // namespace hasqa
