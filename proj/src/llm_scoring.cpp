#include "storyscore/llm_scoring.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>

#include "storyscore/features.hpp"
#include "storyscore/util.hpp"

// httplib drags in <resolv.h>, whose _res macro corrupts Eigen's headers,
// so the Eigen-bearing includes above must stay ahead of it.
#include <httplib.h>

namespace storyscore {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::string_view kInstructions =
    "Each of the above is a story followed with a score for NS, CQ and SC.\n"
    "NS and CQ are floating point numbers and SC is an ordinal category.\n"
    "Predict NS, CQ and SC for the following story. Only give the scores.\n";

std::string example_block(const std::string& transcript, const ScoreSet& scores) {
  std::string out = "Transcript: ";
  out += transcript;
  out += "\n";
  out += format_score_line(scores);
  out += "\n\n";
  return out;
}

std::string prompt_tail(const std::string& query_transcript) {
  std::string out(kInstructions);
  out += "\nTranscript: ";
  out += query_transcript;
  out += "\n";
  return out;
}

}  // namespace

std::string format_score_line(const ScoreSet& scores) {
  return "{NS: " + format_double(scores.ns) + "}, {CQ: " + format_double(scores.cq) +
         "}, {SC: " + std::to_string(scores.sc) + "}";
}

std::string build_prompt(const std::vector<std::pair<std::string, ScoreSet>>& examples,
                         const std::string& query_transcript) {
  std::string out;
  for (const auto& [transcript, scores] : examples) out += example_block(transcript, scores);
  out += prompt_tail(query_transcript);
  return out;
}

ScoreParseError::ScoreParseError(const std::string& message, std::string raw_response)
    : std::runtime_error(message), raw_(std::move(raw_response)) {}

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

std::optional<double> find_labelled_number(const std::string& text, std::string_view label) {
  constexpr std::string_view skip = " \t\r\n:={},";
  for (size_t pos = 0; pos + label.size() <= text.size(); ++pos) {
    bool match = true;
    for (size_t k = 0; k < label.size(); ++k) {
      if (std::tolower(static_cast<unsigned char>(text[pos + k])) !=
          std::tolower(static_cast<unsigned char>(label[k]))) {
        match = false;
        break;
      }
    }
    if (!match) continue;
    if (pos > 0 && is_word_char(static_cast<unsigned char>(text[pos - 1]))) continue;
    size_t after = pos + label.size();
    if (after < text.size() && is_word_char(static_cast<unsigned char>(text[after]))) continue;
    size_t i = after;
    while (i < text.size() && skip.find(text[i]) != std::string_view::npos) ++i;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + text.size(), value);
    (void)ptr;
    if (ec == std::errc() && std::isfinite(value)) return value;
  }
  return std::nullopt;
}

}  // namespace

ParsedScores parse_scores(const std::string& response) {
  auto ns = find_labelled_number(response, "NS");
  auto cq = find_labelled_number(response, "CQ");
  auto sc = find_labelled_number(response, "SC");
  if (ns && cq && sc) return {*ns, *cq, *sc};
  std::string missing;
  for (const auto& [label, ok] :
       {std::pair{"NS", ns.has_value()}, {"CQ", cq.has_value()}, {"SC", sc.has_value()}}) {
    if (ok) continue;
    if (!missing.empty()) missing += ", ";
    missing += label;
  }
  throw ScoreParseError("no " + missing + " value found in response", response);
}

ScoreSet scores_from_parsed(const ParsedScores& parsed) {
  ScoreSet s;
  s.ns = std::clamp(parsed.ns, 0.0, 16.0);
  s.cq = std::clamp(parsed.cq, 0.0, 10.0);
  s.sc = static_cast<int>(std::clamp(std::ceil(parsed.sc - 0.5), 1.0, 6.0));
  s.ri = intervention_from_sc(s.sc);
  return s;
}

namespace {

std::map<std::string, long> unigram_counts(const std::string& text) {
  std::map<std::string, long> counts;
  for (auto& tok : tokenize(text)) ++counts[tok];
  return counts;
}

double cosine_similarity(const std::map<std::string, long>& a,
                         const std::map<std::string, long>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [word, count] : a) {
    na += static_cast<double>(count) * count;
    auto it = b.find(word);
    if (it != b.end()) dot += static_cast<double>(count) * it->second;
  }
  for (const auto& [word, count] : b) nb += static_cast<double>(count) * count;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::string MockKnnBackend::complete(const std::string& prompt) {
  constexpr std::string_view marker = "Transcript: ";
  std::vector<std::pair<std::string, std::string>> examples;
  std::optional<std::string> query;
  size_t pos = 0;
  while (pos <= prompt.size()) {
    size_t end = prompt.find('\n', pos);
    if (end == std::string::npos) end = prompt.size();
    std::string_view line(prompt.data() + pos, end - pos);
    if (line.substr(0, marker.size()) == marker) {
      std::string transcript(line.substr(marker.size()));
      size_t next_start = end + 1;
      size_t next_end = prompt.find('\n', next_start);
      if (next_end == std::string::npos) next_end = prompt.size();
      std::string_view next_line =
          next_start <= prompt.size()
              ? std::string_view(prompt.data() + next_start,
                                 std::min(next_end, prompt.size()) - next_start)
              : std::string_view{};
      if (!next_line.empty() && next_line.front() == '{') {
        examples.emplace_back(std::move(transcript), std::string(next_line));
        pos = next_end + 1;
        continue;
      }
      query = std::move(transcript);
    }
    pos = end + 1;
  }
  if (!query || examples.empty())
    throw std::runtime_error("mock_knn: prompt has no scored examples and query transcript");

  std::map<std::string, long> query_counts = unigram_counts(*query);
  size_t best = 0;
  double best_sim = -1.0;
  for (size_t i = 0; i < examples.size(); ++i) {
    double sim = cosine_similarity(unigram_counts(examples[i].first), query_counts);
    if (sim > best_sim) {
      best_sim = sim;
      best = i;
    }
  }
  return examples[best].second;
}

std::atomic<std::uint64_t> HttpLlmBackend::requests_made{0};
std::atomic<std::uint64_t> HttpTranslator::requests_made{0};

namespace {

httplib::Headers auth_headers(const HttpEndpoint& endpoint) {
  httplib::Headers headers;
  if (!endpoint.credential_env.empty()) {
    const char* token = std::getenv(endpoint.credential_env.c_str());
    if (token && *token) headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  return headers;
}

std::string post_json(const HttpEndpoint& endpoint, const std::string& path,
                      const ordered_json& body, const char* who) {
  httplib::Client client(endpoint.base_url);
  auto timeout = std::chrono::milliseconds(
      static_cast<long long>(std::max(endpoint.timeout_s, 0.001) * 1000.0));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  auto res = client.Post(path, auth_headers(endpoint), body.dump(), "application/json");
  if (!res)
    throw std::runtime_error(std::string(who) + " request to " + endpoint.base_url + path +
                             " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw std::runtime_error(std::string(who) + " request to " + endpoint.base_url + path +
                             " returned status " + std::to_string(res->status));
  try {
    return json::parse(res->body).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string(who) + " returned a malformed payload: " + e.what());
  }
}

}  // namespace

HttpLlmBackend::HttpLlmBackend(HttpEndpoint endpoint, double temperature)
    : endpoint_(std::move(endpoint)), temperature_(temperature) {
  if (endpoint_.base_url.empty())
    throw std::invalid_argument("http llm backend needs a base_url");
}

std::string HttpLlmBackend::complete(const std::string& prompt) {
  ordered_json body;
  body["model"] = endpoint_.model;
  body["prompt"] = prompt;
  body["temperature"] = temperature_;
  ++requests_made;
  return post_json(endpoint_, "/complete", body, "llm backend");
}

HttpTranslator::HttpTranslator(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.base_url.empty())
    throw std::invalid_argument("http translator needs a base_url");
}

std::string HttpTranslator::translate(const std::string& text, Language source) {
  ordered_json body;
  body["text"] = text;
  body["source"] = to_string(source);
  body["target"] = "en";
  ++requests_made;
  return post_json(endpoint_, "/translate", body, "translator");
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  if (!enabled()) return std::nullopt;
  std::filesystem::path path = dir_ / (key + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    return json::parse(read_file(path)).at("response").get<std::string>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const ordered_json& record) const {
  if (!enabled()) return;
  write_file_atomic(dir_ / (key + ".json"), record.dump(2) + "\n");
}

namespace {

std::string digest_of_parts(std::initializer_list<std::string_view> parts) {
  std::string material;
  bool first = true;
  for (std::string_view part : parts) {
    if (!first) material.push_back('\0');
    first = false;
    material.append(part);
  }
  return digest_hex(material);
}

}  // namespace

std::string ResponseCache::llm_key(const std::string& backend, const std::string& model,
                                   const std::string& prompt) {
  return digest_of_parts({"llm", backend, model, prompt});
}

std::string ResponseCache::translation_key(const std::string& translator, Language source,
                                           const std::string& text) {
  return digest_of_parts({"translate", translator, to_string(source), text});
}

namespace {

ordered_json endpoint_to_json(const HttpEndpoint& e) {
  ordered_json j;
  j["base_url"] = e.base_url;
  j["model"] = e.model;
  j["credential_env"] = e.credential_env;
  j["timeout_s"] = e.timeout_s;
  return j;
}

HttpEndpoint endpoint_from_json(const json& j) {
  HttpEndpoint e;
  e.base_url = j.value("base_url", "");
  e.model = j.value("model", "");
  e.credential_env = j.value("credential_env", "");
  e.timeout_s = j.value("timeout_s", 30.0);
  return e;
}

}  // namespace

ordered_json backend_config_to_json(const BackendConfig& config) {
  ordered_json j;
  j["translator"] = config.translator;
  j["llm"] = config.llm;
  j["llm_endpoint"] = endpoint_to_json(config.llm_endpoint);
  j["translate_endpoint"] = endpoint_to_json(config.translate_endpoint);
  j["cache_dir"] = config.cache_dir;
  j["max_retries"] = config.max_retries;
  j["temperature"] = config.temperature;
  j["max_prompt_chars"] = config.max_prompt_chars;
  return j;
}

BackendConfig backend_config_from_json(const json& j) {
  BackendConfig c;
  c.translator = j.value("translator", c.translator);
  c.llm = j.value("llm", c.llm);
  if (j.contains("llm_endpoint")) c.llm_endpoint = endpoint_from_json(j.at("llm_endpoint"));
  if (j.contains("translate_endpoint"))
    c.translate_endpoint = endpoint_from_json(j.at("translate_endpoint"));
  c.cache_dir = j.value("cache_dir", c.cache_dir);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.temperature = j.value("temperature", c.temperature);
  c.max_prompt_chars = j.value("max_prompt_chars", c.max_prompt_chars);
  return c;
}

std::shared_ptr<LlmBackend> make_backend(const BackendConfig& config) {
  if (config.llm == "mock_knn" || config.llm == "mock")
    return std::make_shared<MockKnnBackend>();
  if (config.llm == "http")
    return std::make_shared<HttpLlmBackend>(config.llm_endpoint, config.temperature);
  throw std::invalid_argument("unknown llm backend '" + config.llm + "'");
}

std::shared_ptr<Translator> make_translator(const BackendConfig& config) {
  if (config.translator == "identity") return std::make_shared<IdentityTranslator>();
  if (config.translator == "http")
    return std::make_shared<HttpTranslator>(config.translate_endpoint);
  throw std::invalid_argument("unknown translator '" + config.translator + "'");
}

LlmScoringSession::LlmScoringSession(const Corpus& corpus, TranscriptVariant variant,
                                     BackendConfig config)
    : LlmScoringSession(corpus, variant, std::move(config), nullptr, nullptr) {}

LlmScoringSession::LlmScoringSession(const Corpus& corpus, TranscriptVariant variant,
                                     BackendConfig config,
                                     std::shared_ptr<LlmBackend> backend,
                                     std::shared_ptr<Translator> translator)
    : config_(std::move(config)), variant_(variant) {
  backend_ = backend ? std::move(backend) : make_backend(config_);
  translator_ = translator ? std::move(translator) : make_translator(config_);
  if (!config_.cache_dir.empty()) cache_ = ResponseCache(config_.cache_dir);

  auto train = corpus.split_records(Split::train);
  if (train.empty())
    throw std::invalid_argument("llm scoring: corpus has no training records");
  example_blocks_.reserve(train.size());
  for (const ChildRecord* rec : train) {
    if (!rec->truth)
      throw std::invalid_argument("llm scoring: training record " + rec->child_id +
                                  " has no scores to show as an example");
    std::string transcript = transcript_for(*rec, variant_);
    example_blocks_.push_back(
        example_block(maybe_translate(transcript, rec->language), *rec->truth));
  }
  prefix_chars_.resize(example_blocks_.size() + 1);
  prefix_chars_[0] = 0;
  for (size_t i = 0; i < example_blocks_.size(); ++i)
    prefix_chars_[i + 1] = prefix_chars_[i] + example_blocks_[i].size();

  std::string key_header = "llm";
  key_header += '\0';
  key_header += backend_->name();
  key_header += '\0';
  key_header += backend_->model_name();
  key_header += '\0';
  key_folds_.resize(example_blocks_.size() + 1);
  key_folds_[0] = fnv1a64(key_header);
  for (size_t i = 0; i < example_blocks_.size(); ++i)
    key_folds_[i + 1] = fnv1a64(example_blocks_[i], key_folds_[i]);
}

std::string LlmScoringSession::maybe_translate(const std::string& text, Language source) {
  if (translator_->name() == "identity") return translator_->translate(text, source);
  std::string key;
  if (cache_.enabled()) {
    key = ResponseCache::translation_key(translator_->name(), source, text);
    if (auto hit = cache_.get(key)) {
      ++cache_hits_;
      return *hit;
    }
  }
  int attempts = 1 + std::max(0, config_.max_retries);
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    try {
      std::string out = translator_->translate(text, source);
      if (cache_.enabled()) {
        ordered_json rec;
        rec["kind"] = "translate";
        rec["translator"] = translator_->name();
        rec["source"] = to_string(source);
        rec["text_digest"] = digest_hex(text);
        rec["response"] = out;
        cache_.put(key, rec);
      }
      return out;
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  throw std::runtime_error("translation failed after " + std::to_string(attempts) +
                           " attempts: " + last_error);
}

size_t LlmScoringSession::keep_for_tail(size_t tail_chars, size_t* dropped) {
  size_t keep = example_blocks_.size();
  if (config_.max_prompt_chars > 0) {
    while (keep > 0 && prefix_chars_[keep] + tail_chars > config_.max_prompt_chars) --keep;
    if (keep == 0)
      throw std::runtime_error("max_prompt_chars=" + std::to_string(config_.max_prompt_chars) +
                               " leaves no room for even one scored example");
  }
  size_t dropped_here = example_blocks_.size() - keep;
  max_examples_dropped_ = std::max(max_examples_dropped_, dropped_here);
  if (dropped) *dropped = dropped_here;
  return keep;
}

std::string LlmScoringSession::assemble_prompt(size_t keep, const std::string& tail) const {
  std::string prompt;
  prompt.reserve(prefix_chars_[keep] + tail.size());
  for (size_t i = 0; i < keep; ++i) prompt += example_blocks_[i];
  prompt += tail;
  return prompt;
}

std::string LlmScoringSession::prompt_for(const std::string& transcript, Language language,
                                          size_t* dropped) {
  std::string tail = prompt_tail(maybe_translate(transcript, language));
  return assemble_prompt(keep_for_tail(tail.size(), dropped), tail);
}

LlmScore LlmScoringSession::score(const ChildRecord& record) {
  return score_transcript(transcript_for(record, variant_), record.child_id, record.language);
}

LlmScore LlmScoringSession::score_transcript(const std::string& transcript,
                                             const std::string& child_id, Language language) {
  std::string tail;
  size_t keep = 0;
  try {
    tail = prompt_tail(maybe_translate(transcript, language));
    keep = keep_for_tail(tail.size(), nullptr);
  } catch (const std::exception& e) {
    throw std::runtime_error("llm scoring failed for " + child_id + ": " + e.what());
  }

  // The digest ResponseCache::llm_key would give for the full prompt, continued
  // from the per-session fold so a cache hit never has to materialize it.
  std::string key = hex16(fnv1a64(tail, key_folds_[keep]));
  if (cache_.enabled()) {
    if (auto hit = cache_.get(key)) {
      ++cache_hits_;
      LlmScore out;
      out.raw_response = *hit;
      out.scores = scores_from_parsed(parse_scores(*hit));
      out.cache_hit = true;
      return out;
    }
  }

  std::string prompt = assemble_prompt(keep, tail);
  int attempts = 1 + std::max(0, config_.max_retries);
  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    try {
      ++backend_calls_;
      std::string raw = backend_->complete(prompt);
      LlmScore out;
      out.scores = scores_from_parsed(parse_scores(raw));
      out.raw_response = std::move(raw);
      out.cache_hit = false;
      if (cache_.enabled()) {
        ordered_json rec;
        rec["kind"] = "llm";
        rec["backend"] = backend_->name();
        rec["model"] = backend_->model_name();
        rec["prompt_digest"] = digest_hex(prompt);
        rec["response"] = out.raw_response;
        cache_.put(key, rec);
      }
      return out;
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  throw std::runtime_error("llm scoring failed for " + child_id + " after " +
                           std::to_string(attempts) + " attempts: " + last_error);
}

LlmScore score_with_llm(const Corpus& corpus, TranscriptVariant variant,
                        const BackendConfig& config, const std::string& transcript,
                        const std::string& child_id, Language language) {
  LlmScoringSession session(corpus, variant, config);
  return session.score_transcript(transcript, child_id, language);
}

}  // namespace storyscore
