#include "hasqa/serve.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>
#include <thread>

#include "hasqa/errors.hpp"
#include "hasqa/objective.hpp"

namespace hasqa {

namespace {

// Runs fn(i) for i in [0, n); results must be written by index so the
// outcome does not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

void sort_ranking(std::vector<ScoredAnswer>& ranked) {
  std::sort(ranked.begin(), ranked.end(), [](const ScoredAnswer& a, const ScoredAnswer& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

Ranker::Ranker(const ModelParams<float>& params, int threads)
    : params_(params), attention_(params.attention), threads_(threads) {}

Vec<float> Ranker::question_vector(const TokenSequence& question) const {
  return hasqa::question_vector(params_, question);
}

double Ranker::score(const Vec<float>& vq, const Vec<float>& question_proj,
                     const BinaryMatrix& code) const {
  const auto att = attention_(code, question_proj, full_mask(code.cols()));
  return static_cast<double>(cosine(vq, att.value).value);
}

RankingResult Ranker::rank(const std::string& qid, const TokenSequence& question,
                           const CodeStore& store, std::span<const std::string> candidates) const {
  if (store.empty()) throw UsageError("rank: code store is empty");
  if (static_cast<int>(store.rows()) != params_.config.model_dim ||
      static_cast<int>(store.cols()) != params_.config.seq_len) {
    throw UsageError("rank: store is " + std::to_string(store.rows()) + "x" +
                     std::to_string(store.cols()) + " but model expects D=" +
                     std::to_string(params_.config.model_dim) +
                     ", L=" + std::to_string(params_.config.seq_len));
  }
  const Vec<float> vq = question_vector(question);
  const Vec<float> proj = attention_.project_question(vq);

  std::vector<std::pair<const std::string*, const BinaryMatrix*>> work;
  if (candidates.empty()) {
    for (const auto& e : store.entries()) work.emplace_back(&e.id, &e.code);
  } else {
    for (const auto& id : candidates) {
      const auto* code = store.find(id);
      if (!code) throw UsageError("rank: answer '" + id + "' not in store");
      work.emplace_back(&id, code);
    }
  }
  RankingResult out{qid, std::vector<ScoredAnswer>(work.size())};
  parallel_for(work.size(), threads_, [&](std::size_t i) {
    out.ranked[i] = {*work[i].first, score(vq, proj, *work[i].second)};
  });
  sort_ranking(out.ranked);
  return out;
}

RankingResult rank(const TokenSequence& question, const CodeStore& store,
                   const ModelParams<float>& params) {
  return Ranker(params).rank("", question, store);
}

RankingResult rank_recompute(const std::string& qid, const TokenSequence& question,
                             std::span<const std::pair<std::string, TokenSequence>> candidates,
                             const ModelParams<float>& params) {
  const Vec<float> vq = question_vector(params, question);
  const BinaryAttention attention(params.attention);
  const Vec<float> proj = attention.project_question(vq);
  RankingResult out{qid, {}};
  out.ranked.reserve(candidates.size());
  for (const auto& [id, seq] : candidates) {
    const BinaryMatrix code = answer_code(params, seq);
    const auto att = attention(code, proj, full_mask(seq.length()));
    out.ranked.push_back({id, static_cast<double>(cosine(vq, att.value).value)});
  }
  sort_ranking(out.ranked);
  return out;
}

RankingResult rank_soft(const std::string& qid, const TokenSequence& question,
                        std::span<const std::pair<std::string, const Mat<float>*>> features,
                        const ModelParams<float>& params) {
  const Vec<float> vq = question_vector(params, question);
  RankingResult out{qid, {}};
  out.ranked.reserve(features.size());
  for (const auto& [id, h] : features) {
    const Mat<float> b = soft_binarize(*h, params.config.beta);
    const auto att = attend(b, vq, params.attention, full_mask(static_cast<std::size_t>(b.cols())));
    out.ranked.push_back({id, static_cast<double>(cosine(vq, att.value).value)});
  }
  sort_ranking(out.ranked);
  return out;
}

namespace {

template <typename Fn>
double average_over_questions(std::span<const RankingResult> rankings, const Positives& positives,
                              Fn&& per_question) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : rankings) {
    auto it = positives.find(r.qid);
    if (it == positives.end() || it->second.empty()) continue;
    total += per_question(r, it->second);
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

}  // namespace

double precision_at_1(std::span<const RankingResult> rankings, const Positives& positives) {
  return average_over_questions(rankings, positives, [](const RankingResult& r, const auto& pos) {
    return !r.ranked.empty() && pos.count(r.ranked.front().id) ? 1.0 : 0.0;
  });
}

double mean_reciprocal_rank(std::span<const RankingResult> rankings, const Positives& positives) {
  return average_over_questions(rankings, positives, [](const RankingResult& r, const auto& pos) {
    for (std::size_t i = 0; i < r.ranked.size(); ++i) {
      if (pos.count(r.ranked[i].id)) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
  });
}

double mean_average_precision(std::span<const RankingResult> rankings, const Positives& positives) {
  return average_over_questions(rankings, positives, [](const RankingResult& r, const auto& pos) {
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < r.ranked.size(); ++i) {
      if (pos.count(r.ranked[i].id)) {
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(i + 1);
      }
    }
    return sum / static_cast<double>(pos.size());
  });
}

Metrics evaluate(std::span<const RankingResult> rankings, const Positives& positives) {
  return {precision_at_1(rankings, positives), mean_reciprocal_rank(rankings, positives),
          mean_average_precision(rankings, positives)};
}

std::vector<RankingResult> rank_dataset(const Dataset& dataset, const CodeStore& store,
                                        const ModelParams<float>& params, int threads) {
  const Ranker ranker(params, threads);
  std::vector<RankingResult> out;
  out.reserve(dataset.size());
  for (const auto& qid : dataset.question_order) {
    out.push_back(ranker.rank(qid, dataset.questions.at(qid), store, dataset.pools.at(qid)));
  }
  return out;
}

std::string_view to_string(ServeMode mode) {
  switch (mode) {
    case ServeMode::kRecalc: return "recalc";
    case ServeMode::kFloatStore: return "float-store";
    case ServeMode::kBinaryStore: return "binary-store";
  }
  return "?";
}

ServeMode parse_serve_mode(std::string_view text) {
  if (text == "recalc") return ServeMode::kRecalc;
  if (text == "float-store") return ServeMode::kFloatStore;
  if (text == "binary-store") return ServeMode::kBinaryStore;
  throw InputError("unknown mode '" + std::string(text) +
                   "' (expected recalc, float-store or binary-store)");
}

BenchReport bench(ServeMode mode, const Dataset& dataset, const ModelParams<float>& params,
                  const BenchOptions& options, const CodeStore* store) {
  if (options.repetitions < 1 || options.warmup < 0) throw InputError("bench: bad repetition counts");
  const std::size_t evaluations = dataset.size() * static_cast<std::size_t>(options.repetitions);
  if (evaluations <= static_cast<std::size_t>(options.warmup)) {
    throw InputError("bench: need more than " + std::to_string(options.warmup) +
                     " question evaluations, have " + std::to_string(evaluations));
  }
  const auto D = static_cast<std::uint64_t>(params.config.model_dim);
  const auto L = static_cast<std::uint64_t>(params.config.seq_len);
  const auto count = static_cast<std::uint64_t>(dataset.answers.size());

  BenchReport report{mode, 0.0, 0, {}, 1, 0};
  report.threads = options.threads;

  CodeStore built(0, 0);
  std::map<std::string, Mat<float>> features;
  switch (mode) {
    case ServeMode::kRecalc:
      report.memory_bytes = count * L * sizeof(TokenId);
      break;
    case ServeMode::kFloatStore: {
      const std::uint64_t need = memory_report(D, L, count).float_bytes;
      if (need > options.max_float_bytes) {
        throw CapacityError("float-store needs " + std::to_string(need) + " bytes, limit is " +
                            std::to_string(options.max_float_bytes));
      }
      for (const auto& [id, seq] : dataset.answers) features.emplace(id, encode_sequence(params, seq));
      report.memory_bytes = need;
      break;
    }
    case ServeMode::kBinaryStore:
      if (!store) {
        built = build_index(params, dataset.answers);
        store = &built;
      }
      report.memory_bytes = store->payload_bytes();
      break;
  }

  const Ranker ranker(params, options.threads);
  auto run_one = [&](const std::string& qid) -> RankingResult {
    const auto& question = dataset.questions.at(qid);
    const auto& pool = dataset.pools.at(qid);
    switch (mode) {
      case ServeMode::kRecalc: {
        std::vector<std::pair<std::string, TokenSequence>> cands;
        cands.reserve(pool.size());
        for (const auto& id : pool) cands.emplace_back(id, dataset.answers.at(id));
        return rank_recompute(qid, question, cands, params);
      }
      case ServeMode::kFloatStore: {
        std::vector<std::pair<std::string, const Mat<float>*>> cands;
        cands.reserve(pool.size());
        for (const auto& id : pool) cands.emplace_back(id, &features.at(id));
        return rank_soft(qid, question, cands, params);
      }
      case ServeMode::kBinaryStore:
        return ranker.rank(qid, question, *store, pool);
    }
    throw UsageError("bench: bad mode");
  };

  using Clock = std::chrono::steady_clock;
  std::vector<RankingResult> rankings;
  double timed_seconds = 0.0;
  std::size_t done = 0;
  for (int rep = 0; rep < options.repetitions; ++rep) {
    for (const auto& qid : dataset.question_order) {
      const auto start = Clock::now();
      auto result = run_one(qid);
      const std::chrono::duration<double> elapsed = Clock::now() - start;
      if (done >= static_cast<std::size_t>(options.warmup)) {
        timed_seconds += elapsed.count();
        ++report.questions_timed;
      }
      ++done;
      if (rep == 0) rankings.push_back(std::move(result));
    }
  }
  report.seconds_per_question = timed_seconds / static_cast<double>(report.questions_timed);
  report.metrics = evaluate(rankings, dataset.positives);
  return report;
}

std::string bench_csv_header() {
  return "mode,seconds_per_question,memory_bytes,p1,mrr,map,threads,questions_timed";
}

std::string bench_csv_row(const BenchReport& r) {
  std::ostringstream out;
  out.precision(9);
  out << to_string(r.mode) << ',' << r.seconds_per_question << ',' << r.memory_bytes << ','
      << r.metrics.p1 << ',' << r.metrics.mrr << ',' << r.metrics.map << ',' << r.threads << ','
      << r.questions_timed;
  return out.str();
}

}  // namespace hasqa
