#pragma once

#include <cstdint>
#include <string>

namespace hasqa {

// Latent-topic QA corpus. Each question carries `question_topics` topic
// words; its positives repeat at least `shared_topics` of them, and every
// negative is built from topic words the question does not use. Filler
// words are optional shared noise (off by default).
struct SyntheticOptions {
  int questions = 200;
  int candidates = 20;
  int positives = 1;
  int topic_words = 30;
  int filler_words = 30;
  int question_topics = 3;
  int shared_topics = 3;
  int min_fillers = 0;
  int max_fillers = 0;
  std::uint64_t seed = 1;
  std::string prefix = "q";
};

// JSONL text in the dataset format, one question per line.
std::string synthetic_jsonl(const SyntheticOptions& options);

}  // namespace hasqa
