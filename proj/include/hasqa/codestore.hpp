#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hasqa/data.hpp"
#include "hasqa/hashing.hpp"
#include "hasqa/model.hpp"

namespace hasqa {

inline constexpr std::uint32_t kCodeStoreVersion = 1;
// magic + version + D + L + count
inline constexpr std::size_t kCodeStoreHeaderBytes = 4 + 4 + 4 + 4 + 8;

struct CodeEntry {
  std::string id;
  BinaryMatrix code;
  bool operator==(const CodeEntry&) const = default;
};

// Bit-packed answer codes, ordered by answer id.
class CodeStore {
 public:
  CodeStore(std::uint32_t rows, std::uint32_t cols);

  // Throws InputError on duplicate ids and UsageError on shape mismatch.
  void insert(std::string id, BinaryMatrix code);

  std::uint32_t rows() const { return rows_; }
  std::uint32_t cols() const { return cols_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<CodeEntry>& entries() const { return entries_; }
  // nullptr when absent.
  const BinaryMatrix* find(const std::string& id) const;
  std::uint64_t payload_bytes() const;

  bool operator==(const CodeStore& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && entries_ == other.entries_;
  }

 private:
  std::uint32_t rows_;
  std::uint32_t cols_;
  std::vector<CodeEntry> entries_;
  std::map<std::string, std::size_t> index_;
};

// encode -> tanh(beta H) -> sgn -> pack for every answer.
CodeStore build_index(const ModelParams<float>& params,
                      std::span<const std::pair<std::string, TokenSequence>> answers);
CodeStore build_index(const ModelParams<float>& params,
                      const std::map<std::string, TokenSequence>& answers);

// "HASB": magic, u32 version, u32 D, u32 L, u64 count, then per entry
// u32 id length, id bytes, ceil(D*L/8) payload bytes. Little-endian.
std::vector<std::uint8_t> serialize_store(const CodeStore& store);
CodeStore deserialize_store(std::span<const std::uint8_t> bytes);
void save_store(const CodeStore& store, const std::filesystem::path& path);
CodeStore load_store(const std::filesystem::path& path);

struct MemoryReport {
  std::uint64_t float_bytes;
  std::uint64_t binary_bytes;
  double ratio;
};

MemoryReport memory_report(std::uint64_t rows, std::uint64_t cols, std::uint64_t count,
                           std::uint64_t baseline_bytes_per_element = 4);

}  // namespace hasqa
