#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace labloop {

enum class Role { system, user, assistant };

std::string to_string(Role role);
Role role_from_string(const std::string& s);

struct ChatMessage {
  Role role = Role::user;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int max_output_tokens = 4096;
  // Prompt-template identifier. Every call site declares which template it
  // instantiates; the tag is one half of the replay key.
  std::string tag;
};

struct ChatResponse {
  std::string content;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  double cost_usd = 0.0;
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const;
  // All values finite and norm > 0.
  bool valid() const;
};

// dot(a,b) / (|a||b|), clamped to [-1,1] against rounding overshoot.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

enum class GatewayMode { live, record, replay };

std::string to_string(GatewayMode mode);
GatewayMode gateway_mode_from_string(const std::string& s);

// USD per million tokens.
struct ModelRates {
  double input = 0.0;
  double output = 0.0;
};

struct GatewayConfig {
  GatewayMode mode = GatewayMode::replay;
  std::string chat_endpoint;   // full URL, e.g. http://127.0.0.1:8080/v1/chat/completions
  std::string embed_endpoint;  // full URL, e.g. http://127.0.0.1:8080/v1/embeddings
  std::string chat_model = "idea-agent";
  std::string embed_model = "embedding-model";
  std::string api_key_env = "LABLOOP_API_KEY";
  ModelRates chat_rates;
  ModelRates embed_rates;
  std::string oracle_path;  // replay input / record output
  // Strict replay requires an exact (tag, digest) hit. Non-strict replay
  // may fall back to wildcard entries (digest "*"). A "strict" field in the
  // oracle file overrides this default.
  bool strict_replay = true;
  int max_retries = 3;
  double retry_initial_delay_s = 0.5;
  int http_timeout_s = 120;
};

// Scripted responses keyed by (tag, request-content digest).
//
// Entries with the same key form a FIFO: successive lookups consume them in
// order, and the final entry keeps answering (so a single entry behaves as a
// plain table cell). A digest of "*" matches any request content for that
// tag, and is only consulted when strict mode is off.
class OracleScript {
 public:
  struct Entry {
    std::string tag;
    std::string digest;
    std::string kind;  // "chat" | "embed"
    nlohmann::json response;
  };

  OracleScript() = default;

  static OracleScript load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void set_strict(bool strict) { strict_ = strict; }
  bool strict() const { return strict_; }

  void add_entry(Entry entry);
  void add_chat(const std::string& tag, const std::string& digest, const ChatResponse& resp);
  void add_embedding(const std::string& tag, const std::string& digest,
                     const std::vector<double>& values, long prompt_tokens = 0);

  // Throws ReplayMissError when nothing matches.
  nlohmann::json lookup(const std::string& tag, const std::string& digest,
                        const std::string& kind);

  std::size_t size() const { return entries_.size(); }
  nlohmann::json to_json() const;
  static OracleScript from_json(const nlohmann::json& doc);

  // Replay queue positions, for resumable runs. Keys are tag + '\x1f' +
  // digest; zero positions are omitted.
  std::map<std::string, std::size_t> cursor_snapshot() const;
  void restore_cursors(const std::map<std::string, std::size_t>& snapshot);

 private:
  bool strict_ = true;
  std::vector<Entry> entries_;  // file order, for serialization
  // Replay cursors: how many entries of each (tag,digest) queue are consumed.
  std::map<std::pair<std::string, std::string>, std::size_t> cursors_;

  const Entry* next_in_queue(const std::string& tag, const std::string& digest,
                             const std::string& kind);
};

// Digests used as replay keys. Chat digests cover the message contents only,
// so prompt edits invalidate replays while endpoint/model config changes
// do not.
std::string chat_content_digest(const ChatRequest& request);
std::string embed_content_digest(const std::string& text);

// Provider-agnostic chat-completion and embedding client with live, record,
// and replay modes plus a token/cost ledger. Safe for concurrent callers.
class Gateway {
 public:
  explicit Gateway(GatewayConfig config);

  ChatResponse chat(const ChatRequest& request);
  EmbeddingVector embed(const std::string& text, const std::string& tag);

  struct LedgerTotals {
    double total_usd = 0.0;
    std::map<std::string, double> per_tag;
  };
  LedgerTotals ledger_total() const;
  // Restore a previously persisted ledger snapshot (resume support).
  void restore_ledger(const LedgerTotals& totals);

  const GatewayConfig& config() const { return config_; }
  GatewayMode mode() const { return config_.mode; }

  // Record mode flushes the script after every appended call, so this is
  // only needed to write an empty recording.
  void save_recording() const;

  // Replay queue positions (see OracleScript::cursor_snapshot); part of the
  // resumable run state in replay mode, empty otherwise.
  std::map<std::string, std::size_t> replay_cursors() const;
  void restore_replay_cursors(const std::map<std::string, std::size_t>& snapshot);

  std::size_t embedding_dim() const { return embedding_dim_; }

 private:
  GatewayConfig config_;
  OracleScript script_;
  mutable std::mutex mutex_;
  double ledger_total_ = 0.0;
  std::map<std::string, double> ledger_per_tag_;
  std::size_t embedding_dim_ = 0;  // 0 until the first embed of the run

  nlohmann::json http_post_json(const std::string& url, const nlohmann::json& body);
  ChatResponse live_chat(const ChatRequest& request);
  EmbeddingVector live_embed(const std::string& text, long* prompt_tokens);
  void record_cost(const std::string& tag, double cost_usd);
  void check_dim(std::size_t dim);
};

}  // namespace labloop
