#include "hasqa/codestore.hpp"

#include <algorithm>

#include "hasqa/binary_io.hpp"
#include "hasqa/errors.hpp"

namespace hasqa {

namespace {
constexpr char kStoreMagic[4] = {'H', 'A', 'S', 'B'};
}

CodeStore::CodeStore(std::uint32_t rows, std::uint32_t cols) : rows_(rows), cols_(cols) {}

void CodeStore::insert(std::string id, BinaryMatrix code) {
  if (code.rows() != rows_ || code.cols() != cols_) {
    throw UsageError("code for '" + id + "' is " + std::to_string(code.rows()) + "x" +
                     std::to_string(code.cols()) + ", store holds " + std::to_string(rows_) + "x" +
                     std::to_string(cols_));
  }
  if (index_.count(id)) throw InputError("duplicate answer id '" + id + "'");
  if (entries_.empty() || entries_.back().id < id) {
    index_.emplace(id, entries_.size());
    entries_.push_back(CodeEntry{std::move(id), std::move(code)});
    return;
  }
  auto pos = std::lower_bound(entries_.begin(), entries_.end(), id,
                              [](const CodeEntry& e, const std::string& k) { return e.id < k; });
  entries_.insert(pos, CodeEntry{std::move(id), std::move(code)});
  index_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].id, i);
}

const BinaryMatrix* CodeStore::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &entries_[it->second].code;
}

std::uint64_t CodeStore::payload_bytes() const {
  return static_cast<std::uint64_t>(entries_.size()) * BinaryMatrix::payload_size(rows_, cols_);
}

CodeStore build_index(const ModelParams<float>& params,
                      std::span<const std::pair<std::string, TokenSequence>> answers) {
  std::map<std::string, BinaryMatrix> codes;
  for (const auto& [id, seq] : answers) {
    if (codes.count(id)) throw InputError("duplicate answer id '" + id + "'");
    codes.emplace(id, answer_code(params, seq));
  }
  CodeStore store(static_cast<std::uint32_t>(params.config.model_dim),
                  static_cast<std::uint32_t>(params.config.seq_len));
  for (auto& [id, code] : codes) store.insert(id, std::move(code));
  return store;
}

CodeStore build_index(const ModelParams<float>& params,
                      const std::map<std::string, TokenSequence>& answers) {
  const std::vector<std::pair<std::string, TokenSequence>> flat(answers.begin(), answers.end());
  return build_index(params, flat);
}

std::vector<std::uint8_t> serialize_store(const CodeStore& store) {
  ByteWriter w;
  w.raw(std::string_view(kStoreMagic, 4));
  w.integer(kCodeStoreVersion);
  w.integer(store.rows());
  w.integer(store.cols());
  w.integer(static_cast<std::uint64_t>(store.size()));
  for (const auto& e : store.entries()) {
    w.string(e.id);
    w.bytes(e.code.bytes());
  }
  return w.take();
}

CodeStore deserialize_store(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kStoreMagic)) throw FormatError(0, "bad magic, expected HASB");
  const auto version_at = r.offset();
  const auto version = r.integer<std::uint32_t>("version");
  if (version != kCodeStoreVersion) {
    throw FormatError(version_at, "unsupported store version " + std::to_string(version));
  }
  const auto rows = r.integer<std::uint32_t>("D");
  const auto cols = r.integer<std::uint32_t>("L");
  const auto count = r.integer<std::uint64_t>("count");
  const std::size_t payload = BinaryMatrix::payload_size(rows, cols);
  CodeStore store(rows, cols);
  std::string prev;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto entry_at = r.offset();
    std::string id = r.string("answer id");
    const auto payload_at = r.offset();
    const auto raw = r.bytes(payload, "payload");
    if (i > 0 && id <= prev) throw FormatError(entry_at, "entries not sorted by unique id");
    BinaryMatrix code;
    try {
      code = BinaryMatrix(rows, cols, std::vector<std::uint8_t>(raw.begin(), raw.end()));
    } catch (const FormatError& e) {
      throw FormatError(payload_at + e.offset(), "bad payload for '" + id + "'");
    }
    prev = id;
    store.insert(std::move(id), std::move(code));
  }
  if (!r.done()) throw FormatError(r.offset(), "trailing bytes after last entry");
  return store;
}

void save_store(const CodeStore& store, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_store(store));
}

CodeStore load_store(const std::filesystem::path& path) { return deserialize_store(read_file(path)); }

MemoryReport memory_report(std::uint64_t rows, std::uint64_t cols, std::uint64_t count,
                           std::uint64_t baseline_bytes_per_element) {
  if (rows == 0 || cols == 0) throw InputError("memory_report: dimensions must be positive");
  const std::uint64_t per_float = rows * cols * baseline_bytes_per_element;
  const std::uint64_t per_binary = (rows * cols + 7) / 8;
  return {count * per_float, count * per_binary,
          static_cast<double>(per_float) / static_cast<double>(per_binary)};
}

}  // namespace hasqa
