#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "isa/dataset.hpp"

namespace isa {

struct PromptPair {
  std::string system;
  std::string user;

  friend bool operator==(const PromptPair&, const PromptPair&) = default;
};

/// The data-collator system prompt, verbatim.
extern const std::string_view kCollatorSystemPrompt;

/// User turn: interaction (prompt, blank line, completion) between the start
/// and end markers, then "### Label: True|False".
PromptPair build_prompt(const DataRecord& record);

/// First standalone "yes" or "no" (case-insensitive, any surrounding
/// brackets, quotes or punctuation). nullopt when neither occurs.
std::optional<bool> parse_verdict(std::string_view text);

/// Retryable failure of a single chat request.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One chat completion per call. Implementations must be safe to call from
/// several threads at once.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual std::string complete(const DataRecord& record, const PromptPair& prompt) = 0;
};

struct ChatClientConfig {
  std::string endpoint;  // base URL; requests go to {endpoint}/chat/completions
  std::string model_name;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::optional<std::string> auth_token;
};

/// Chat-completion HTTP JSON client (http or https).
class HttpChatTransport final : public ChatTransport {
 public:
  explicit HttpChatTransport(ChatClientConfig config);
  std::string complete(const DataRecord& record, const PromptPair& prompt) override;

  /// Request body sent for `prompt`.
  std::string request_body(const PromptPair& prompt) const;

 private:
  ChatClientConfig config_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;    // base path + /chat/completions
};

/// Scripted responses keyed by record id. Each JSONL line is
/// {"id": str, "response": str, "failures": int?}; the first `failures`
/// requests for that id throw TransportError. Unknown ids always fail.
class MockTransport final : public ChatTransport {
 public:
  struct Entry {
    std::string response;
    int failures = 0;
  };

  MockTransport() = default;
  explicit MockTransport(std::map<std::string, Entry> script);
  MockTransport(MockTransport&& other) noexcept : script_(std::move(other.script_)), calls_(other.calls_) {}
  static MockTransport from_file(const std::filesystem::path& path);
  static MockTransport from_jsonl(std::string_view text);

  std::string complete(const DataRecord& record, const PromptPair& prompt) override;
  std::size_t calls() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Entry> script_;
  std::size_t calls_ = 0;
};

enum class ScanOrder { shuffled, natural };

struct LlmOptions {
  std::uint64_t order_seed = 42;
  ScanOrder scan_order = ScanOrder::shuffled;
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};  // delay before retry r is base * 2^r
  unsigned concurrency = 4;
};

struct LlmDiagnostics {
  std::size_t visited = 0;    // records whose verdict was committed
  std::size_t requests = 0;   // including retries
  std::size_t retries = 0;
  std::size_t skipped_unparseable = 0;
  std::vector<std::string> warnings;
};

struct LlmResult {
  Selection selection;
  LlmDiagnostics diagnostics;
};

/// Keeps records judged "yes" in scan order until k are collected. Requests
/// may overlap (up to `concurrency`), but a request is only issued when it
/// would also be issued by a one-at-a-time scan, and verdicts are committed in
/// scan order, so the result does not depend on response timing.
LlmResult select_llm(const std::vector<DataRecord>& records, std::size_t k, ChatTransport& transport,
                     const LlmOptions& options = {});
LlmResult select_llm(const EmbeddedDataset& dataset, std::size_t k, ChatTransport& transport,
                     const LlmOptions& options = {});

}  // namespace isa
