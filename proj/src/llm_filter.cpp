#include "isa/llm_filter.hpp"

#include <cctype>
#include <deque>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "isa/error.hpp"
#include "isa/rng.hpp"

namespace isa {

namespace {

constexpr std::string_view kModule = "llm-filter";

[[noreturn]] void invalid(const std::string& msg) { throw Error(kModule, ErrorKind::validation, msg); }

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

const std::string_view kCollatorSystemPrompt =
    "Please act as an expert data collator for alignment of Large Language Models towards human values. "
    "Evaluate the quality of the interaction provided between a user and an AI assistant along with a boolean "
    "label specifying whether the reposne by assistant is appropriate or not. Your evaluation should consider "
    "diversity, quality, and helpfullness. Your job is to evaluate whether the interaction contains informative "
    "signal for aligning a Large Language Model to make the outputs safe and helpful. Ensure to favour the "
    "interaction only if it adds valuable information for the model which is not common, redundant or obvious as "
    "we only want the most informative interactions. Please give more weightage to interactions with a False Label "
    "value. Do not allow the length of the responses to influence your evaluation. Do not favor certain names of "
    "the assistants. Be as objective as possible. Output your final verdict by strictly following this format "
    "without any other text: \"Yes\" if the interaction contains an informative signal for alignment and \"No\" "
    "otherwise.";

PromptPair build_prompt(const DataRecord& record) {
  PromptPair out;
  out.system = std::string(kCollatorSystemPrompt);
  out.user = fmt::format("[The start of Interaction]\n{}\n\n{}\n[The end of Interaction]\n### Label: {}", record.prompt,
                         record.completion, record.label ? "True" : "False");
  return out;
}

std::optional<bool> parse_verdict(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_char(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
    const std::string word = lower(text.substr(i, j - i));
    if (word == "yes") return true;
    if (word == "no") return false;
    i = j;
  }
  return std::nullopt;
}

// --- HTTP ---------------------------------------------------------------------

HttpChatTransport::HttpChatTransport(ChatClientConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) invalid("endpoint must not be empty");
  if (config_.timeout.count() <= 0) invalid("timeout must be positive");
  if (config_.max_retries < 0) invalid("max_retries must be >= 0");
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) invalid(fmt::format("endpoint '{}' has no scheme", config_.endpoint));
  const auto scheme = config_.endpoint.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") invalid(fmt::format("unsupported endpoint scheme '{}'", scheme));
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  origin_ = config_.endpoint.substr(0, path_start);
  std::string base = path_start == std::string::npos ? "" : config_.endpoint.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  path_ = base + "/chat/completions";
}

std::string HttpChatTransport::request_body(const PromptPair& prompt) const {
  nlohmann::ordered_json body;
  body["model"] = config_.model_name;
  body["messages"] = nlohmann::ordered_json::array({
      {{"role", "system"}, {"content", prompt.system}},
      {{"role", "user"}, {"content", prompt.user}},
  });
  body["temperature"] = 0;
  return body.dump();
}

std::string HttpChatTransport::complete(const DataRecord&, const PromptPair& prompt) {
  httplib::Client client(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  if (config_.auth_token) client.set_bearer_token_auth(*config_.auth_token);

  auto res = client.Post(path_, request_body(prompt), "application/json");
  if (!res) throw TransportError(fmt::format("{}{}: {}", origin_, path_, httplib::to_string(res.error())));
  if (res->status != 200) throw TransportError(fmt::format("{}{}: HTTP {}", origin_, path_, res->status));
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(fmt::format("malformed chat response: {}", e.what()));
  }
}

// --- mock -----------------------------------------------------------------------

MockTransport::MockTransport(std::map<std::string, Entry> script) : script_(std::move(script)) {}

MockTransport MockTransport::from_jsonl(std::string_view text) {
  std::map<std::string, Entry> script;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Entry e;
      e.response = j.at("response").get<std::string>();
      if (j.contains("failures")) e.failures = j.at("failures").get<int>();
      if (!script.emplace(j.at("id").get<std::string>(), std::move(e)).second)
        invalid(fmt::format("mock script line {}: duplicate id", line_no));
    } catch (const nlohmann::json::exception& e) {
      invalid(fmt::format("mock script line {}: {}", line_no, e.what()));
    }
  }
  return MockTransport(std::move(script));
}

MockTransport MockTransport::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kModule, ErrorKind::runtime, fmt::format("cannot open mock script '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_jsonl(ss.str());
}

std::string MockTransport::complete(const DataRecord& record, const PromptPair&) {
  std::lock_guard lock(mutex_);
  ++calls_;
  auto it = script_.find(record.id);
  if (it == script_.end()) throw TransportError(fmt::format("no scripted response for id '{}'", record.id));
  if (it->second.failures > 0) {
    --it->second.failures;
    throw TransportError(fmt::format("scripted failure for id '{}'", record.id));
  }
  return it->second.response;
}

std::size_t MockTransport::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

// --- selection ----------------------------------------------------------------------

namespace {

struct Outcome {
  std::optional<bool> verdict;
  std::size_t attempts = 0;
  std::optional<std::string> failure;
};

Outcome query_with_retries(ChatTransport& transport, const DataRecord& record, const LlmOptions& options) {
  const PromptPair prompt = build_prompt(record);
  Outcome out;
  for (int attempt = 0;; ++attempt) {
    ++out.attempts;
    try {
      out.verdict = parse_verdict(transport.complete(record, prompt));
      return out;
    } catch (const TransportError& e) {
      if (attempt >= options.max_retries) {
        out.failure = e.what();
        return out;
      }
      std::this_thread::sleep_for(options.backoff_base * (1LL << std::min(attempt, 20)));
    }
  }
}

}  // namespace

LlmResult select_llm(const std::vector<DataRecord>& records, std::size_t k, ChatTransport& transport,
                     const LlmOptions& options) {
  if (k < 1) invalid("k must be >= 1");
  if (options.max_retries < 0) invalid("max_retries must be >= 0");
  const std::size_t n = records.size();

  std::vector<std::size_t> order(n);
  if (options.scan_order == ScanOrder::natural) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
  } else {
    Rng rng(options.order_seed);
    order = sample_indices(n, n, rng);
  }

  LlmResult result;
  auto& sel = result.selection;
  auto& diag = result.diagnostics;
  sel.strategy = Strategy::llm;
  sel.k = k;
  sel.seed = options.order_seed;

  const std::size_t window = std::max(1u, options.concurrency);
  std::deque<std::future<Outcome>> in_flight;
  std::size_t next = 0;
  std::size_t committed_pos = 0;
  while (sel.indices.size() < k) {
    // Only issue a request if even all-yes answers ahead of it would leave
    // the selection short of k; a sequential scan would issue it too.
    while (in_flight.size() < window && next < n && sel.indices.size() + in_flight.size() < k) {
      const DataRecord& rec = records[order[next]];
      in_flight.push_back(std::async(std::launch::async, [&transport, &rec, &options] {
        return query_with_retries(transport, rec, options);
      }));
      ++next;
    }
    if (in_flight.empty()) break;
    Outcome o = in_flight.front().get();
    in_flight.pop_front();
    const std::size_t idx = order[committed_pos++];
    diag.requests += o.attempts;
    diag.retries += o.attempts - 1;
    if (o.failure) {
      for (auto& f : in_flight) f.wait();
      throw Error(kModule, ErrorKind::runtime,
                  fmt::format("request for record '{}' (row {}) failed after {} retries: {}", records[idx].id, idx,
                              o.attempts - 1, *o.failure));
    }
    ++diag.visited;
    if (!o.verdict) {
      ++diag.skipped_unparseable;
      continue;
    }
    if (*o.verdict) {
      sel.indices.push_back(idx);
      sel.scores.push_back(1.0);
    }
  }
  if (sel.indices.size() < k)
    diag.warnings.push_back(fmt::format("exhausted corpus, {} of {} collected", sel.indices.size(), k));
  if (diag.skipped_unparseable > 0)
    diag.warnings.push_back(fmt::format("{} unparseable verdict(s) skipped", diag.skipped_unparseable));
  return result;
}

LlmResult select_llm(const EmbeddedDataset& dataset, std::size_t k, ChatTransport& transport,
                     const LlmOptions& options) {
  return select_llm(dataset.records, k, transport, options);
}

}  // namespace isa
