#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hasqa/tensor.hpp"

namespace hasqa {

using TokenId = std::int32_t;
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;

// Dense token -> id map with PAD=0 and UNK=1 always present.
class Vocabulary {
 public:
  Vocabulary();

  // Tokens in id order, starting after the two reserved entries.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // UTF-8 text, one "token<TAB>id" per line.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_;
  }

 private:
  void append(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

using Corpus = std::vector<std::vector<std::string>>;

// Tokens with count >= min_count get ids in descending frequency order,
// ties broken lexicographically.
Vocabulary build_vocab(const Corpus& corpus, int min_count);

// Whitespace split + ASCII lowercase.
std::vector<std::string> tokenize(std::string_view text);

struct TokenSequence {
  std::vector<TokenId> ids;
  Mask mask;

  std::size_t length() const { return ids.size(); }
  std::size_t valid() const { return count_valid(mask); }
  bool operator==(const TokenSequence&) const = default;
};

TokenSequence tokenize_pad(const std::vector<std::string>& tokens, int length,
                           const Vocabulary& vocab);

struct Dataset {
  std::map<std::string, TokenSequence> questions;
  std::map<std::string, TokenSequence> answers;
  std::map<std::string, std::set<std::string>> positives;
  // Candidate pool per question in file order.
  std::map<std::string, std::vector<std::string>> pools;
  // Question ids in file order.
  std::vector<std::string> question_order;
  int sequence_length = 0;

  // N, the number of training examples (questions with >= 1 positive).
  std::size_t size() const { return question_order.size(); }
  bool empty() const { return question_order.empty(); }
  std::vector<std::string> negatives(const std::string& qid) const;
};

using WarningSink = std::function<void(const std::string&)>;

// Logs to stderr.
void default_warning_sink(const std::string& message);

// JSONL: {"qid","question","answers":[{"aid","text","label"}]} per line.
Dataset load_dataset(const std::filesystem::path& path, int length,
                     const Vocabulary& vocab,
                     const WarningSink& warn = default_warning_sink);

// Tokenized questions and answer texts in file order, for build_vocab.
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace hasqa
