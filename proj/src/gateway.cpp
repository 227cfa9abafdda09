#include "labloop/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "labloop/errors.hpp"
#include "labloop/util.hpp"

namespace labloop {

namespace {

// Split "http://host:port/path" into client base and path.
std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw PreconditionError("endpoint URL missing scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, path_start), url.substr(path_start)};
}

double token_cost(long prompt_tokens, long completion_tokens, const ModelRates& rates) {
  return static_cast<double>(prompt_tokens) * rates.input / 1e6 +
         static_cast<double>(completion_tokens) * rates.output / 1e6;
}

}  // namespace

std::string to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw PreconditionError("unknown message role: " + s);
}

std::string to_string(GatewayMode mode) {
  switch (mode) {
    case GatewayMode::live: return "live";
    case GatewayMode::record: return "record";
    case GatewayMode::replay: return "replay";
  }
  return "replay";
}

GatewayMode gateway_mode_from_string(const std::string& s) {
  if (s == "live") return GatewayMode::live;
  if (s == "record") return GatewayMode::record;
  if (s == "replay") return GatewayMode::replay;
  throw PreconditionError("unknown gateway mode: " + s);
}

double EmbeddingVector::norm() const {
  double sum = 0.0;
  for (double v : values) {
    sum += v * v;
  }
  return std::sqrt(sum);
}

bool EmbeddingVector::valid() const {
  if (values.empty()) {
    return false;
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return norm() > 0.0;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("cosine_similarity: dim mismatch (" + std::to_string(a.dim()) +
                         " vs " + std::to_string(b.dim()) + ")");
  }
  if (a.dim() == 0) {
    throw PreconditionError("cosine_similarity: empty vectors");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    throw PreconditionError("cosine_similarity: zero-norm vector");
  }
  double sim = dot / (na * nb);
  if (sim > 1.0) sim = 1.0;
  if (sim < -1.0) sim = -1.0;
  return sim;
}

// ---------------------------------------------------------------------------
// OracleScript

OracleScript OracleScript::load(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw PayloadError("oracle script " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

OracleScript OracleScript::from_json(const nlohmann::json& doc) {
  OracleScript script;
  if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
    throw PayloadError("oracle script: expected {entries:[...]}, got " +
                       doc.dump().substr(0, 200));
  }
  script.strict_ = doc.value("strict", true);
  for (const auto& item : doc["entries"]) {
    Entry e;
    e.tag = item.at("tag").get<std::string>();
    e.digest = item.at("digest").get<std::string>();
    e.kind = item.at("kind").get<std::string>();
    e.response = item.at("response");
    if (e.kind != "chat" && e.kind != "embed") {
      throw PayloadError("oracle entry kind must be chat|embed: " + item.dump());
    }
    script.entries_.push_back(std::move(e));
  }
  return script;
}

nlohmann::json OracleScript::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : entries_) {
    entries.push_back({{"tag", e.tag}, {"digest", e.digest}, {"kind", e.kind},
                       {"response", e.response}});
  }
  return {{"strict", strict_}, {"entries", entries}};
}

void OracleScript::save(const std::filesystem::path& path) const {
  write_text_file_atomic(path, canonical_json(to_json()));
}

void OracleScript::add_entry(Entry entry) {
  entries_.push_back(std::move(entry));
}

void OracleScript::add_chat(const std::string& tag, const std::string& digest,
                            const ChatResponse& resp) {
  add_entry({tag, digest, "chat",
             {{"content", resp.content},
              {"prompt_tokens", resp.prompt_tokens},
              {"completion_tokens", resp.completion_tokens}}});
}

void OracleScript::add_embedding(const std::string& tag, const std::string& digest,
                                 const std::vector<double>& values, long prompt_tokens) {
  nlohmann::json resp = {{"values", values}};
  if (prompt_tokens > 0) {
    resp["prompt_tokens"] = prompt_tokens;
  }
  add_entry({tag, digest, "embed", std::move(resp)});
}

const OracleScript::Entry* OracleScript::next_in_queue(const std::string& tag,
                                                       const std::string& digest,
                                                       const std::string& kind) {
  std::vector<const Entry*> queue;
  for (const auto& e : entries_) {
    if (e.tag == tag && e.digest == digest && e.kind == kind) {
      queue.push_back(&e);
    }
  }
  if (queue.empty()) {
    return nullptr;
  }
  auto& cursor = cursors_[{tag, digest}];
  std::size_t index = std::min(cursor, queue.size() - 1);
  if (cursor < queue.size() - 1) {
    ++cursor;  // the last entry stays live for repeated lookups
  }
  return queue[index];
}

std::map<std::string, std::size_t> OracleScript::cursor_snapshot() const {
  std::map<std::string, std::size_t> snapshot;
  for (const auto& [key, position] : cursors_) {
    if (position > 0) {
      snapshot[key.first + '\x1f' + key.second] = position;
    }
  }
  return snapshot;
}

void OracleScript::restore_cursors(const std::map<std::string, std::size_t>& snapshot) {
  cursors_.clear();
  for (const auto& [key, position] : snapshot) {
    auto sep = key.find('\x1f');
    if (sep == std::string::npos) {
      throw PayloadError("malformed replay cursor key: " + key);
    }
    cursors_[{key.substr(0, sep), key.substr(sep + 1)}] = position;
  }
}

nlohmann::json OracleScript::lookup(const std::string& tag, const std::string& digest,
                                    const std::string& kind) {
  if (const Entry* e = next_in_queue(tag, digest, kind)) {
    return e->response;
  }
  if (!strict_) {
    if (const Entry* e = next_in_queue(tag, "*", kind)) {
      return e->response;
    }
  }
  throw ReplayMissError("replay miss: no scripted " + kind + " entry for tag \"" + tag +
                        "\" (digest " + digest.substr(0, 12) + "...)");
}

// ---------------------------------------------------------------------------
// Digests

std::string chat_content_digest(const ChatRequest& request) {
  std::string payload;
  for (const auto& msg : request.messages) {
    payload += to_string(msg.role);
    payload += '\x1f';
    payload += msg.content;
    payload += '\x1e';
  }
  return sha256_hex(payload);
}

std::string embed_content_digest(const std::string& text) {
  return sha256_hex(text);
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(GatewayConfig config) : config_(std::move(config)) {
  if (config_.mode == GatewayMode::replay) {
    if (config_.oracle_path.empty()) {
      throw PreconditionError("replay mode requires an oracle script path");
    }
    script_ = OracleScript::load(config_.oracle_path);
  } else {
    if (config_.chat_endpoint.empty() || config_.embed_endpoint.empty()) {
      throw PreconditionError(to_string(config_.mode) +
                              " mode requires chat and embedding endpoints");
    }
    if (config_.mode == GatewayMode::record) {
      if (config_.oracle_path.empty()) {
        throw PreconditionError("record mode requires an oracle script path");
      }
      script_.set_strict(config_.strict_replay);
    }
  }
}

void Gateway::record_cost(const std::string& tag, double cost_usd) {
  ledger_total_ += cost_usd;
  ledger_per_tag_[tag] += cost_usd;
}

Gateway::LedgerTotals Gateway::ledger_total() const {
  std::lock_guard lock(mutex_);
  return {ledger_total_, ledger_per_tag_};
}

void Gateway::restore_ledger(const LedgerTotals& totals) {
  std::lock_guard lock(mutex_);
  ledger_total_ = totals.total_usd;
  ledger_per_tag_ = totals.per_tag;
}

void Gateway::save_recording() const {
  std::lock_guard lock(mutex_);
  if (config_.mode == GatewayMode::record && !config_.oracle_path.empty()) {
    script_.save(config_.oracle_path);
  }
}

std::map<std::string, std::size_t> Gateway::replay_cursors() const {
  std::lock_guard lock(mutex_);
  return script_.cursor_snapshot();
}

void Gateway::restore_replay_cursors(const std::map<std::string, std::size_t>& snapshot) {
  std::lock_guard lock(mutex_);
  script_.restore_cursors(snapshot);
}

void Gateway::check_dim(std::size_t dim) {
  if (embedding_dim_ == 0) {
    embedding_dim_ = dim;
    return;
  }
  if (dim != embedding_dim_) {
    throw DimensionError("embedding dim " + std::to_string(dim) +
                         " differs from earlier vectors (" +
                         std::to_string(embedding_dim_) + ") in this run");
  }
}

nlohmann::json Gateway::http_post_json(const std::string& url, const nlohmann::json& body) {
  auto [base, path] = split_url(url);
  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, config_.max_retries); ++attempt) {
    if (attempt > 0) {
      auto delay = config_.retry_initial_delay_s * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    httplib::Client client(base);
    client.set_connection_timeout(config_.http_timeout_s);
    client.set_read_timeout(config_.http_timeout_s);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto result = client.Post(path, headers, body.dump(), "application/json");
    if (!result) {
      last_error = "transport failure: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status == 429 || result->status >= 500) {
      last_error = "HTTP " + std::to_string(result->status);
      continue;  // rate limit / transient server error: back off and retry
    }
    if (result->status != 200) {
      throw TransportError("HTTP " + std::to_string(result->status) + " from " + url +
                           ": " + tail_bytes(result->body, 300));
    }
    auto parsed = nlohmann::json::parse(result->body, nullptr, false);
    if (parsed.is_discarded()) {
      throw PayloadError("non-JSON response from " + url + ": " +
                         tail_bytes(result->body, 300));
    }
    return parsed;
  }
  throw TransportError("giving up on " + url + " after " +
                       std::to_string(config_.max_retries) + " attempts (" + last_error + ")");
}

ChatResponse Gateway::live_chat(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& msg : request.messages) {
    messages.push_back({{"role", to_string(msg.role)}, {"content", msg.content}});
  }
  nlohmann::json body = {{"model", request.model.empty() ? config_.chat_model : request.model},
                         {"messages", messages},
                         {"temperature", request.temperature},
                         {"max_tokens", request.max_output_tokens}};
  nlohmann::json doc = http_post_json(config_.chat_endpoint, body);
  ChatResponse resp;
  try {
    resp.content = doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw PayloadError("chat response missing choices[0].message.content: " +
                       doc.dump().substr(0, 300));
  }
  if (doc.contains("usage")) {
    resp.prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
    resp.completion_tokens = doc["usage"].value("completion_tokens", 0L);
  }
  return resp;
}

EmbeddingVector Gateway::live_embed(const std::string& text, long* prompt_tokens) {
  nlohmann::json body = {{"model", config_.embed_model}, {"input", text}};
  nlohmann::json doc = http_post_json(config_.embed_endpoint, body);
  EmbeddingVector vec;
  try {
    vec.values = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw PayloadError("embedding response missing data[0].embedding: " +
                       doc.dump().substr(0, 300));
  }
  if (prompt_tokens && doc.contains("usage")) {
    *prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
  }
  return vec;
}

ChatResponse Gateway::chat(const ChatRequest& request) {
  if (request.messages.empty()) {
    throw PreconditionError("chat: messages must be non-empty");
  }
  if (request.messages.front().role == Role::assistant) {
    throw PreconditionError("chat: first message must be system or user");
  }
  if (request.tag.empty()) {
    throw PreconditionError("chat: tag must be non-empty");
  }
  if (request.temperature < 0.0) {
    throw PreconditionError("chat: temperature must be >= 0");
  }

  const std::string digest = chat_content_digest(request);
  ChatResponse resp;
  if (config_.mode == GatewayMode::replay) {
    std::lock_guard lock(mutex_);
    nlohmann::json canned = script_.lookup(request.tag, digest, "chat");
    resp.content = canned.value("content", std::string());
    resp.prompt_tokens = canned.value("prompt_tokens", 0L);
    resp.completion_tokens = canned.value("completion_tokens", 0L);
    resp.cost_usd = token_cost(resp.prompt_tokens, resp.completion_tokens, config_.chat_rates);
    record_cost(request.tag, resp.cost_usd);
    return resp;
  }

  resp = live_chat(request);
  resp.cost_usd = token_cost(resp.prompt_tokens, resp.completion_tokens, config_.chat_rates);
  std::lock_guard lock(mutex_);
  record_cost(request.tag, resp.cost_usd);
  if (config_.mode == GatewayMode::record) {
    script_.add_chat(request.tag, digest, resp);
    script_.save(config_.oracle_path);
  }
  return resp;
}

EmbeddingVector Gateway::embed(const std::string& text, const std::string& tag) {
  if (text.empty()) {
    throw PreconditionError("embed: text must be non-empty");
  }
  if (tag.empty()) {
    throw PreconditionError("embed: tag must be non-empty");
  }

  const std::string digest = embed_content_digest(text);
  if (config_.mode == GatewayMode::replay) {
    std::lock_guard lock(mutex_);
    nlohmann::json canned = script_.lookup(tag, digest, "embed");
    EmbeddingVector vec;
    vec.values = canned.at("values").get<std::vector<double>>();
    long prompt_tokens = canned.value("prompt_tokens", 0L);
    double cost = token_cost(prompt_tokens, 0, config_.embed_rates);
    check_dim(vec.dim());
    if (!vec.valid()) {
      throw PayloadError("scripted embedding for tag \"" + tag + "\" is not finite/nonzero");
    }
    record_cost(tag, cost);
    return vec;
  }

  long prompt_tokens = 0;
  EmbeddingVector vec = live_embed(text, &prompt_tokens);
  std::lock_guard lock(mutex_);
  check_dim(vec.dim());
  if (!vec.valid()) {
    throw PayloadError("embedding endpoint returned a non-finite or zero vector");
  }
  record_cost(tag, token_cost(prompt_tokens, 0, config_.embed_rates));
  if (config_.mode == GatewayMode::record) {
    script_.add_embedding(tag, digest, vec.values, prompt_tokens);
    script_.save(config_.oracle_path);
  }
  return vec;
}

}  // namespace labloop
