#include "hasqa/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "hasqa/errors.hpp"

namespace hasqa {

Vocabulary::Vocabulary() {
  append("<pad>");
  append("<unk>");
}

void Vocabulary::append(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  auto [it, inserted] = ids_.emplace(token, id);
  if (!inserted) throw InputError("duplicate vocabulary token '" + token + "'");
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary vocab;
  for (const auto& t : tokens) vocab.append(t);
  return vocab;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.count(std::string(token)) > 0;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write vocabulary to " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << tokens_[i] << '\t' << i << '\n';
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError(lineno, "missing tab");
    std::size_t id = 0;
    try {
      id = std::stoul(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError(lineno, "bad id");
    }
    if (id != tokens.size()) throw ParseError(lineno, "ids must be dense");
    tokens.push_back(line.substr(0, tab));
  }
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>") {
    throw ParseError(1, "vocabulary must start with <pad> and <unk>");
  }
  tokens.erase(tokens.begin(), tokens.begin() + 2);
  return from_tokens(tokens);
}

Vocabulary build_vocab(const Corpus& corpus, int min_count) {
  if (min_count < 1) throw InputError("min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) {
      ++counts[tok];
      ++total;
    }
  }
  if (total == 0) throw InputError("empty corpus");

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= static_cast<std::size_t>(min_count)) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocabulary::from_tokens(tokens);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

TokenSequence tokenize_pad(const std::vector<std::string>& tokens, int length,
                           const Vocabulary& vocab) {
  if (length < 1) throw InputError("sequence length must be >= 1");
  if (tokens.empty()) throw InputError("cannot tokenize empty text");
  const auto L = static_cast<std::size_t>(length);
  TokenSequence seq{std::vector<TokenId>(L, kPadId), Mask(L, false)};
  const std::size_t n = std::min(tokens.size(), L);
  for (std::size_t i = 0; i < n; ++i) {
    seq.ids[i] = vocab.id(tokens[i]);
    seq.mask[i] = true;
  }
  return seq;
}

std::vector<std::string> Dataset::negatives(const std::string& qid) const {
  std::vector<std::string> out;
  auto pool = pools.find(qid);
  if (pool == pools.end()) return out;
  const auto& pos = positives.at(qid);
  for (const auto& aid : pool->second) {
    if (!pos.count(aid)) out.push_back(aid);
  }
  return out;
}

void default_warning_sink(const std::string& message) {
  std::cerr << "warning: " << message << '\n';
}

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, std::size_t lineno) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError(lineno, std::string("missing field '") + key + "'");
  }
  return *it;
}

std::string require_string(const json& obj, const char* key,
                           std::size_t lineno) {
  const auto& v = require(obj, key, lineno);
  if (!v.is_string()) {
    throw ParseError(lineno, std::string("field '") + key + "' must be a string");
  }
  return v.get<std::string>();
}

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read dataset " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(lineno, "expected a JSON object");
    fn(obj, lineno);
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, int length,
                     const Vocabulary& vocab, const WarningSink& warn) {
  Dataset ds;
  ds.sequence_length = length;
  std::map<std::string, std::string> answer_text;

  for_each_record(path, [&](const json& obj, std::size_t lineno) {
    const std::string qid = require_string(obj, "qid", lineno);
    const std::string question = require_string(obj, "question", lineno);
    const auto& answers = require(obj, "answers", lineno);
    if (!answers.is_array()) throw ParseError(lineno, "'answers' must be an array");

    std::vector<std::string> pool;
    std::set<std::string> pos;
    std::vector<std::pair<std::string, std::string>> texts;
    for (const auto& a : answers) {
      if (!a.is_object()) throw ParseError(lineno, "answer must be an object");
      const std::string aid = require_string(a, "aid", lineno);
      const std::string text = require_string(a, "text", lineno);
      const auto& label = require(a, "label", lineno);
      if (!label.is_number_integer() && !label.is_boolean()) {
        throw ParseError(lineno, "'label' must be 0/1");
      }
      const bool positive =
          label.is_boolean() ? label.get<bool>() : label.get<long long>() != 0;
      if (std::find(pool.begin(), pool.end(), aid) != pool.end()) {
        throw ParseError(lineno, "answer '" + aid + "' repeated in pool");
      }
      if (tokenize(text).empty()) {
        throw ParseError(lineno, "answer '" + aid + "' has empty text");
      }
      pool.push_back(aid);
      if (positive) pos.insert(aid);
      texts.emplace_back(aid, text);
    }
    if (ds.questions.count(qid)) {
      throw ParseError(lineno, "duplicate qid '" + qid + "'");
    }
    if (pos.empty()) {
      warn("line " + std::to_string(lineno) + ": question '" + qid +
           "' has no positive answers; skipped");
      return;
    }
    const auto qtokens = tokenize(question);
    if (qtokens.empty()) throw ParseError(lineno, "empty question text");

    for (const auto& [aid, text] : texts) {
      auto [it, inserted] = answer_text.emplace(aid, text);
      if (!inserted && it->second != text) {
        throw ParseError(lineno, "answer id '" + aid + "' reused with different text");
      }
      if (inserted) ds.answers.emplace(aid, tokenize_pad(tokenize(text), length, vocab));
    }
    ds.questions.emplace(qid, tokenize_pad(qtokens, length, vocab));
    ds.positives.emplace(qid, std::move(pos));
    ds.pools.emplace(qid, std::move(pool));
    ds.question_order.push_back(qid);
  });
  if (ds.empty()) throw InputError("dataset " + path.string() + " has no usable questions");
  return ds;
}

Corpus read_corpus(const std::filesystem::path& path) {
  Corpus corpus;
  for_each_record(path, [&](const json& obj, std::size_t lineno) {
    corpus.push_back(tokenize(require_string(obj, "question", lineno)));
    const auto& answers = require(obj, "answers", lineno);
    if (!answers.is_array()) throw ParseError(lineno, "'answers' must be an array");
    for (const auto& a : answers) {
      if (!a.is_object()) throw ParseError(lineno, "answer must be an object");
      corpus.push_back(tokenize(require_string(a, "text", lineno)));
    }
  });
  return corpus;
}

}  // namespace hasqa
