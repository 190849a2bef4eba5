#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "isa/matrix.hpp"

namespace isa {

struct DataRecord {
  std::string id;
  std::string prompt;
  std::string completion;
  bool label = false;  // true = desirable completion

  friend bool operator==(const DataRecord&, const DataRecord&) = default;
};

/// Records plus their embeddings; row i of `embeddings` belongs to records[i].
struct EmbeddedDataset {
  std::vector<DataRecord> records;
  Matrix embeddings;

  std::size_t size() const noexcept { return records.size(); }
  std::size_t dim() const noexcept { return embeddings.cols(); }

  friend bool operator==(const EmbeddedDataset&, const EmbeddedDataset&) = default;
};

enum class Strategy { isa, random, density, llm };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct Selection {
  Strategy strategy = Strategy::isa;
  std::size_t k = 0;
  std::vector<std::size_t> indices;
  std::vector<double> scores;  // same length as indices; meaning depends on strategy
  std::optional<std::uint64_t> seed;

  friend bool operator==(const Selection&, const Selection&) = default;
};

// EMB1: "EMB1" magic, u32 LE rows, u32 LE cols, rows*cols binary32 LE, row-major.
Matrix read_emb1(const std::filesystem::path& path);
void write_emb1(const Matrix& m, const std::filesystem::path& path);
Matrix decode_emb1(std::string_view bytes);
std::string encode_emb1(const Matrix& m);

std::vector<DataRecord> read_metadata(const std::filesystem::path& path);
void write_metadata(const std::vector<DataRecord>& records, const std::filesystem::path& path);
DataRecord parse_record(std::string_view line, std::size_t line_no);

/// Loads and validates a JSONL + EMB1 pair. Throws isa::Error naming the
/// offending line or row on any violation.
EmbeddedDataset load_dataset(const std::filesystem::path& meta_path, const std::filesystem::path& emb_path);
void write_dataset(const EmbeddedDataset& ds, const std::filesystem::path& meta_path,
                   const std::filesystem::path& emb_path);
void validate(const EmbeddedDataset& ds);

/// Subset of `ds` in the order given by `indices`.
EmbeddedDataset subset(const EmbeddedDataset& ds, const std::vector<std::size_t>& indices);

/// Checks the selection invariants against a corpus of size n. LLM selections
/// may hold fewer than min(k, n) indices when the corpus runs out.
void validate(const Selection& sel, std::optional<std::size_t> n = std::nullopt);
std::string to_json(const Selection& sel);
Selection selection_from_json(std::string_view text);
void write_selection(const Selection& sel, const std::filesystem::path& path);
Selection read_selection(const std::filesystem::path& path);

}  // namespace isa
