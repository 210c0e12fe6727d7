#include "hasqa/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "json.hpp"

#include "hasqa/errors.hpp"

namespace hasqa {

namespace {

std::string word(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%03d", prefix, i);
  return buf;
}

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

}  // namespace

std::string synthetic_jsonl(const SyntheticOptions& o) {
  if (o.questions < 1 || o.candidates < 2 || o.positives < 1 || o.positives >= o.candidates ||
      o.shared_topics < 1 || o.shared_topics > o.question_topics ||
      o.topic_words < 2 * o.question_topics + 3 || o.filler_words < 1 || o.min_fillers < 0 ||
      o.max_fillers < o.min_fillers) {
    throw InputError("synthetic: inconsistent options");
  }
  std::mt19937_64 rng(o.seed);
  std::vector<int> topics(static_cast<std::size_t>(o.topic_words));
  std::iota(topics.begin(), topics.end(), 0);
  std::uniform_int_distribution<int> filler(0, o.filler_words - 1);
  std::uniform_int_distribution<int> n_fill(o.min_fillers, o.max_fillers);

  auto with_fillers = [&](std::vector<std::string> words) {
    const int n = n_fill(rng);
    for (int i = 0; i < n; ++i) words.push_back(word('w', filler(rng)));
    std::shuffle(words.begin(), words.end(), rng);
    return join(words);
  };

  std::ostringstream out;
  for (int qi = 0; qi < o.questions; ++qi) {
    std::shuffle(topics.begin(), topics.end(), rng);
    const auto qt = static_cast<std::size_t>(o.question_topics);
    const std::vector<int> q_topics(topics.begin(), topics.begin() + static_cast<long>(qt));
    const std::vector<int> other(topics.begin() + static_cast<long>(qt), topics.end());

    std::vector<std::string> qwords;
    for (int t : q_topics) qwords.push_back(word('t', t));
    const std::string qid = o.prefix + word('-', qi).substr(1);

    nlohmann::json rec;
    rec["qid"] = qid;
    rec["question"] = with_fillers(qwords);
    rec["answers"] = nlohmann::json::array();

    std::vector<int> labels(static_cast<std::size_t>(o.candidates), 0);
    std::fill(labels.begin(), labels.begin() + o.positives, 1);
    std::shuffle(labels.begin(), labels.end(), rng);

    for (int ai = 0; ai < o.candidates; ++ai) {
      std::vector<std::string> words;
      if (labels[static_cast<std::size_t>(ai)]) {
        auto shared = q_topics;
        std::shuffle(shared.begin(), shared.end(), rng);
        for (int k = 0; k < o.shared_topics; ++k) words.push_back(word('t', shared[static_cast<std::size_t>(k)]));
        std::uniform_int_distribution<std::size_t> pick(0, other.size() - 1);
        words.push_back(word('t', other[pick(rng)]));
      } else {
        auto pool = other;
        std::shuffle(pool.begin(), pool.end(), rng);
        for (int k = 0; k < o.question_topics; ++k) words.push_back(word('t', pool[static_cast<std::size_t>(k)]));
      }
      rec["answers"].push_back({{"aid", qid + "-a" + word('-', ai).substr(1)},
                                {"text", with_fillers(words)},
                                {"label", labels[static_cast<std::size_t>(ai)]}});
    }
    out << rec.dump() << '\n';
  }
  return out.str();
}

}  // namespace hasqa
