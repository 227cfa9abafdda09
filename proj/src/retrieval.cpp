#include "labloop/retrieval.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>

#include "labloop/errors.hpp"
#include "labloop/util.hpp"

namespace labloop {

ScholarClient::ScholarClient(ScholarConfig config) : config_(std::move(config)) {}

std::vector<PaperRecord> ScholarClient::search(const std::string& query, int limit) {
  if (trim(query).empty()) {
    throw PreconditionError("search: query must be non-empty");
  }
  if (limit < 1) {
    throw PreconditionError("search: limit must be >= 1");
  }
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find({query, limit});
    if (it != cache_.end()) {
      return it->second;
    }
  }
  auto records = fetch(query, limit);
  std::lock_guard lock(mutex_);
  cache_[{query, limit}] = records;
  return records;
}

std::vector<PaperRecord> ScholarClient::fetch(const std::string& query, int limit) {
  if (!config_.fixture_path.empty()) {
    auto doc = nlohmann::json::parse(read_text_file(config_.fixture_path), nullptr, false);
    if (doc.is_discarded()) {
      throw PayloadError("search fixture is not valid JSON: " + config_.fixture_path);
    }
    return parse_search_payload(doc, limit);
  }

  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, config_.max_retries); ++attempt) {
    if (attempt > 0) {
      auto delay = config_.retry_initial_delay_s * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    httplib::Client client(config_.endpoint);
    client.set_connection_timeout(config_.http_timeout_s);
    client.set_read_timeout(config_.http_timeout_s);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str())) {
      headers.emplace("x-api-key", key);
    }
    httplib::Params params{{"query", query},
                           {"limit", std::to_string(limit)},
                           {"fields", "title,abstract,year"}};
    auto result = client.Get("/graph/v1/paper/search", params, headers);
    if (!result) {
      last_error = "transport failure: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status == 429 || result->status >= 500) {
      last_error = "HTTP " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200) {
      throw TransportError("scholarly search HTTP " + std::to_string(result->status) + ": " +
                           tail_bytes(result->body, 300));
    }
    auto doc = nlohmann::json::parse(result->body, nullptr, false);
    if (doc.is_discarded()) {
      throw PayloadError("scholarly search returned non-JSON: " +
                         tail_bytes(result->body, 300));
    }
    return parse_search_payload(doc, limit);
  }
  throw TransportError("scholarly search failed after " + std::to_string(config_.max_retries) +
                       " attempts (" + last_error + ")");
}

std::vector<PaperRecord> parse_search_payload(const nlohmann::json& doc, int limit) {
  if (!doc.is_object() || !doc.contains("data") || !doc["data"].is_array()) {
    throw PayloadError("search payload missing data array: " + doc.dump().substr(0, 300));
  }
  std::vector<PaperRecord> records;
  std::map<std::string, bool> seen;
  for (const auto& item : doc["data"]) {
    if (static_cast<int>(records.size()) >= limit) {
      break;
    }
    if (!item.is_object()) {
      throw PayloadError("search payload item is not an object: " + item.dump().substr(0, 300));
    }
    PaperRecord rec;
    rec.external_id = item.value("paperId", std::string());
    if (item.contains("title") && item["title"].is_string()) {
      rec.title = item["title"].get<std::string>();
    }
    if (trim(rec.title).empty()) {
      continue;  // a record we cannot name is useless downstream
    }
    if (rec.external_id.empty()) {
      // No stable id from the service: fall back to a title digest so dedup
      // still has a key.
      rec.external_id = "title:" + sha256_hex(rec.title).substr(0, 16);
    }
    if (seen.count(rec.external_id)) {
      continue;
    }
    seen[rec.external_id] = true;
    if (item.contains("abstract") && item["abstract"].is_string()) {
      rec.abstract = item["abstract"].get<std::string>();
    }
    if (item.contains("year") && item["year"].is_number_integer()) {
      rec.year = item["year"].get<int>();
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// ---------------------------------------------------------------------------
// PaperRanker

PaperRanker::PaperRanker(Gateway& gateway, const PromptLibrary& prompts)
    : gateway_(gateway), prompts_(prompts) {}

namespace {

std::optional<TaskAttributes> parse_attributes(const std::string& reply) {
  nlohmann::json doc = extract_json_block(reply);
  if (!doc.is_object()) {
    return std::nullopt;
  }
  TaskAttributes attrs;
  attrs.topic = trim(doc.value("topic", std::string()));
  attrs.model_inputs = trim(doc.value("model_inputs", std::string()));
  attrs.model_outputs = trim(doc.value("model_outputs", std::string()));
  attrs.other_characteristics = trim(doc.value("other_characteristics", std::string()));
  if (attrs.topic.empty() || attrs.model_inputs.empty() || attrs.model_outputs.empty() ||
      attrs.other_characteristics.empty()) {
    return std::nullopt;
  }
  return attrs;
}

}  // namespace

TaskAttributes PaperRanker::extract_task_attributes(const std::string& topic) {
  if (trim(topic).empty()) {
    throw PreconditionError("extract_task_attributes: topic must be non-empty");
  }
  std::string prompt = prompts_.render("task_attributes", {{"topic", topic}});
  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatRequest req;
    req.tag = "task_attributes";
    req.messages = {{Role::user, attempt == 0
                                     ? prompt
                                     : prompt + "\n\nYour previous reply was not a valid JSON "
                                       "object with all four non-empty fields. Reply again."}};
    auto resp = gateway_.chat(req);
    if (auto attrs = parse_attributes(resp.content)) {
      return *attrs;
    }
  }
  throw ModelReplyError("task attribute extraction failed for topic \"" + topic +
                        "\" after one re-ask");
}

std::optional<int> PaperRanker::ask_score(const PaperRecord& paper, const TaskAttributes& attrs,
                                          const std::string& extra_instruction) {
  std::string prompt = prompts_.render(
      "paper_scoring", {{"topic", attrs.topic},
                        {"model_inputs", attrs.model_inputs},
                        {"model_outputs", attrs.model_outputs},
                        {"other_characteristics", attrs.other_characteristics},
                        {"title", paper.title},
                        {"abstract", paper.abstract.empty() ? "(no abstract available)"
                                                            : paper.abstract}});
  if (!extra_instruction.empty()) {
    prompt += "\n\n" + extra_instruction;
  }
  ChatRequest req;
  req.tag = "paper_scoring";
  req.temperature = 0.0;
  req.messages = {{Role::user, prompt}};
  auto resp = gateway_.chat(req);

  static const std::regex score_re(R"(-?\d+)");
  std::smatch m;
  if (!std::regex_search(resp.content, m, score_re)) {
    return std::nullopt;
  }
  try {
    return std::stoi(m.str());
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void PaperRanker::score_papers(std::vector<PaperRecord>& papers, const TaskAttributes& attrs) {
  for (auto& paper : papers) {
    auto first = ask_score(paper, attrs, "");
    if (first && *first >= 1 && *first <= 10) {
      paper.score = *first;
      continue;
    }
    auto second = ask_score(paper, attrs,
                            "Your previous reply did not contain a single integer between 1 "
                            "and 10. Reply with exactly one line: Score: <integer 1-10>");
    if (second) {
      paper.score = std::clamp(*second, 1, 10);
    } else {
      // Conservative exclusion: an unscorable paper must not pass the filter.
      paper.score = 1;
      paper.score_flagged = true;
    }
  }
}

std::vector<PaperRecord> filter_by_score(const std::vector<PaperRecord>& papers,
                                         int min_score) {
  std::vector<PaperRecord> kept;
  for (const auto& paper : papers) {
    if (!paper.score) {
      throw PreconditionError("filter_by_score: unscored paper \"" + paper.title + "\"");
    }
    if (*paper.score >= min_score) {
      kept.push_back(paper);
    }
  }
  return kept;
}

std::map<std::string, long> keyword_frequency(const std::vector<PaperRecord>& papers,
                                              const std::vector<std::string>& keywords) {
  std::map<std::string, long> counts;
  for (const auto& keyword : keywords) {
    counts[keyword] = 0;
  }
  for (const auto& paper : papers) {
    const std::string text = paper.title + " " + paper.abstract;
    for (const auto& keyword : keywords) {
      counts[keyword] += count_occurrences(text, keyword);
    }
  }
  return counts;
}

std::string format_references(const std::vector<PaperRecord>& papers) {
  std::string out;
  int index = 1;
  for (const auto& paper : papers) {
    out += std::to_string(index++) + ". " + paper.title + "\n";
    if (!paper.abstract.empty()) {
      out += "   " + paper.abstract + "\n";
    }
  }
  if (out.empty()) {
    out = "(no reference papers available)\n";
  }
  return out;
}

}  // namespace labloop
