#include "isa/dataset.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "isa/error.hpp"

namespace isa {

namespace {

constexpr std::string_view kModule = "dataset";
constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderSize = 12;

[[noreturn]] void invalid(const std::string& msg) { throw Error(kModule, ErrorKind::validation, msg); }
[[noreturn]] void io_failure(const std::string& msg) { throw Error(kModule, ErrorKind::runtime, msg); }

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((v >> shift) & 0xFFu));
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_failure(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) io_failure(fmt::format("read failed for '{}'", path.string()));
  return std::move(ss).str();
}

void spill(const std::string& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_failure(fmt::format("cannot write '{}'", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) io_failure(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::isa: return "isa";
    case Strategy::random: return "random";
    case Strategy::density: return "density";
    case Strategy::llm: return "llm";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "isa") return Strategy::isa;
  if (name == "random") return Strategy::random;
  if (name == "density") return Strategy::density;
  if (name == "llm") return Strategy::llm;
  invalid(fmt::format("unknown strategy '{}'", name));
}

// --- EMB1 -------------------------------------------------------------------

Matrix decode_emb1(std::string_view bytes) {
  if (bytes.size() < kHeaderSize) invalid(fmt::format("malformed header: {} bytes, need {}", bytes.size(), kHeaderSize));
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) invalid("malformed header: bad magic (expected \"EMB1\")");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t rows = get_u32(p + 4);
  const std::uint32_t cols = get_u32(p + 8);
  if (rows > 0 && cols == 0) invalid(fmt::format("malformed header: rows={} with cols=0", rows));
  const std::uint64_t expected = kHeaderSize + std::uint64_t{rows} * cols * 4;
  if (bytes.size() != expected)
    invalid(fmt::format("payload size mismatch: header says {}x{} ({} bytes total), file has {}", rows, cols, expected,
                        bytes.size()));

  std::vector<float> data(std::size_t{rows} * cols);
  const unsigned char* payload = p + kHeaderSize;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float v = std::bit_cast<float>(get_u32(payload + 4 * i));
    if (!std::isfinite(v)) invalid(fmt::format("non-finite embedding value at row {}, col {}", i / cols, i % cols));
    data[i] = v;
  }
  return Matrix(rows, cols, std::move(data));
}

std::string encode_emb1(const Matrix& m) {
  if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX) invalid("matrix too large for EMB1");
  std::string out(kMagic.begin(), kMagic.end());
  out.reserve(kHeaderSize + m.data().size() * 4);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (float v : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Matrix read_emb1(const std::filesystem::path& path) { return decode_emb1(slurp(path)); }

void write_emb1(const Matrix& m, const std::filesystem::path& path) { spill(encode_emb1(m), path); }

// --- metadata JSONL ----------------------------------------------------------

DataRecord parse_record(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    invalid(fmt::format("line {}: malformed JSON ({})", line_no, e.what()));
  }
  if (!j.is_object()) invalid(fmt::format("line {}: expected a JSON object", line_no));
  for (const auto& [key, _] : j.items()) {
    if (key != "id" && key != "prompt" && key != "completion" && key != "label")
      invalid(fmt::format("line {}: unknown key \"{}\"", line_no, key));
  }
  auto require = [&](const char* key, auto pred, const char* type) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end()) invalid(fmt::format("line {}: missing key \"{}\"", line_no, key));
    if (!pred(*it)) invalid(fmt::format("line {}: key \"{}\" must be a {}", line_no, key, type));
    return *it;
  };
  auto is_str = [](const nlohmann::json& v) { return v.is_string(); };
  auto is_bool = [](const nlohmann::json& v) { return v.is_boolean(); };

  DataRecord rec;
  rec.id = require("id", is_str, "string").get<std::string>();
  rec.prompt = require("prompt", is_str, "string").get<std::string>();
  rec.completion = require("completion", is_str, "string").get<std::string>();
  rec.label = require("label", is_bool, "boolean").get<bool>();
  if (rec.id.empty()) invalid(fmt::format("line {}: empty id", line_no));
  if (rec.prompt.empty()) invalid(fmt::format("line {}: empty prompt", line_no));
  return rec;
}

std::vector<DataRecord> read_metadata(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  std::vector<DataRecord> records;
  std::unordered_set<std::string> seen;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) invalid(fmt::format("line {}: empty line", line_no));
    DataRecord rec = parse_record(line, line_no);
    if (!seen.insert(rec.id).second) invalid(fmt::format("line {}: duplicate id \"{}\"", line_no, rec.id));
    records.push_back(std::move(rec));
  }
  return records;
}

void write_metadata(const std::vector<DataRecord>& records, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["prompt"] = r.prompt;
    j["completion"] = r.completion;
    j["label"] = r.label;
    out += j.dump();
    out += '\n';
  }
  spill(out, path);
}

// --- dataset -----------------------------------------------------------------

void validate(const EmbeddedDataset& ds) {
  if (ds.embeddings.rows() != ds.records.size())
    invalid(fmt::format("row-count mismatch (meta={}, emb={})", ds.records.size(), ds.embeddings.rows()));
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    if (r.id.empty()) invalid(fmt::format("record {}: empty id", i));
    if (r.prompt.empty()) invalid(fmt::format("record {}: empty prompt", i));
    if (!seen.insert(r.id).second) invalid(fmt::format("record {}: duplicate id \"{}\"", i, r.id));
  }
  const auto& data = ds.embeddings.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i]))
      invalid(fmt::format("non-finite embedding value at row {}, col {}", i / ds.dim(), i % ds.dim()));
  }
}

EmbeddedDataset load_dataset(const std::filesystem::path& meta_path, const std::filesystem::path& emb_path) {
  EmbeddedDataset ds;
  ds.records = read_metadata(meta_path);
  ds.embeddings = read_emb1(emb_path);
  validate(ds);
  return ds;
}

void write_dataset(const EmbeddedDataset& ds, const std::filesystem::path& meta_path,
                   const std::filesystem::path& emb_path) {
  validate(ds);
  write_metadata(ds.records, meta_path);
  write_emb1(ds.embeddings, emb_path);
}

EmbeddedDataset subset(const EmbeddedDataset& ds, const std::vector<std::size_t>& indices) {
  EmbeddedDataset out;
  out.records.reserve(indices.size());
  std::vector<float> data;
  data.reserve(indices.size() * ds.dim());
  for (std::size_t idx : indices) {
    if (idx >= ds.size()) invalid(fmt::format("subset index {} out of range [0, {})", idx, ds.size()));
    out.records.push_back(ds.records[idx]);
    auto row = ds.embeddings.row(idx);
    data.insert(data.end(), row.begin(), row.end());
  }
  out.embeddings = Matrix(indices.size(), ds.dim(), std::move(data));
  return out;
}

// --- selection ---------------------------------------------------------------

void validate(const Selection& sel, std::optional<std::size_t> n) {
  if (sel.scores.size() != sel.indices.size())
    invalid(fmt::format("selection has {} indices but {} scores", sel.indices.size(), sel.scores.size()));
  std::unordered_set<std::size_t> seen;
  for (std::size_t idx : sel.indices) {
    if (!seen.insert(idx).second) invalid(fmt::format("selection has duplicate index {}", idx));
    if (n && idx >= *n) invalid(fmt::format("selection index {} out of range [0, {})", idx, *n));
  }
  for (double s : sel.scores)
    if (!std::isfinite(s)) invalid("selection has a non-finite score");
  if (sel.indices.size() > sel.k)
    invalid(fmt::format("selection has {} indices but k={}", sel.indices.size(), sel.k));
  if (n && sel.strategy != Strategy::llm && sel.indices.size() != std::min(sel.k, *n))
    invalid(fmt::format("selection has {} indices, expected min(k={}, N={})", sel.indices.size(), sel.k, *n));
}

std::string to_json(const Selection& sel) {
  nlohmann::ordered_json j;
  j["strategy"] = std::string(to_string(sel.strategy));
  j["k"] = sel.k;
  j["seed"] = sel.seed ? nlohmann::ordered_json(*sel.seed) : nlohmann::ordered_json(nullptr);
  j["indices"] = sel.indices;
  j["scores"] = sel.scores;
  return j.dump(2) + "\n";
}

Selection selection_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    invalid(fmt::format("malformed selection JSON ({})", e.what()));
  }
  try {
    Selection sel;
    sel.strategy = parse_strategy(j.at("strategy").get<std::string>());
    sel.k = j.at("k").get<std::size_t>();
    if (!j.at("seed").is_null()) sel.seed = j.at("seed").get<std::uint64_t>();
    sel.indices = j.at("indices").get<std::vector<std::size_t>>();
    sel.scores = j.at("scores").get<std::vector<double>>();
    validate(sel);
    return sel;
  } catch (const nlohmann::json::exception& e) {
    invalid(fmt::format("invalid selection document ({})", e.what()));
  }
}

void write_selection(const Selection& sel, const std::filesystem::path& path) {
  validate(sel);
  spill(to_json(sel), path);
}

Selection read_selection(const std::filesystem::path& path) { return selection_from_json(slurp(path)); }

}  // namespace isa
