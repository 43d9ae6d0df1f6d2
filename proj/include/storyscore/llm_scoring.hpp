#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storyscore/corpus.hpp"

namespace storyscore {

// One example line as it appears in a prompt: {NS: 8.25}, {CQ: 5.5}, {SC: 3}
std::string format_score_line(const ScoreSet& scores);

// Few-shot prompt: every example as a transcript plus its score line, then the
// instruction block, then the unscored query transcript.
std::string build_prompt(const std::vector<std::pair<std::string, ScoreSet>>& examples,
                         const std::string& query_transcript);

struct ParsedScores {
  double ns = 0.0;
  double cq = 0.0;
  double sc = 0.0;
};

class ScoreParseError : public std::runtime_error {
 public:
  ScoreParseError(const std::string& message, std::string raw_response);
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Pulls NS, CQ and SC values out of a model response. Labels match
// case-insensitively on word boundaries; the first labelled number wins.
// Throws ScoreParseError when any of the three is missing.
ParsedScores parse_scores(const std::string& response);

// Clamps into range and derives the intervention flag. SC rounds half away
// from the milder category (2.5 becomes 2).
ScoreSet scores_from_parsed(const ParsedScores& parsed);

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string name() const = 0;
  virtual std::string model_name() const = 0;
};

class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::string translate(const std::string& text, Language source) = 0;
  virtual std::string name() const = 0;
};

class IdentityTranslator : public Translator {
 public:
  std::string translate(const std::string& text, Language) override { return text; }
  std::string name() const override { return "identity"; }
};

// Offline stand-in for a hosted model. It reads the prompt the same way a
// human would: collects the scored example transcripts, finds the one most
// similar to the query under unigram cosine similarity, and answers with that
// example's score line verbatim.
class MockKnnBackend : public LlmBackend {
 public:
  std::string complete(const std::string& prompt) override;
  std::string name() const override { return "mock_knn"; }
  std::string model_name() const override { return "knn-1"; }
};

struct HttpEndpoint {
  std::string base_url;
  std::string model;
  std::string credential_env;
  double timeout_s = 30.0;

  bool operator==(const HttpEndpoint&) const = default;
};

// POST {base_url}/complete with {"model", "prompt", "temperature"}, expecting
// {"text": "..."}. The bearer token is read from the environment variable
// named in the endpoint at call time and never stored.
class HttpLlmBackend : public LlmBackend {
 public:
  HttpLlmBackend(HttpEndpoint endpoint, double temperature);
  std::string complete(const std::string& prompt) override;
  std::string name() const override { return "http"; }
  std::string model_name() const override { return endpoint_.model; }

  static std::atomic<std::uint64_t> requests_made;

 private:
  HttpEndpoint endpoint_;
  double temperature_ = 0.0;
};

// POST {base_url}/translate with {"text", "source", "target": "en"},
// expecting {"text": "..."}.
class HttpTranslator : public Translator {
 public:
  explicit HttpTranslator(HttpEndpoint endpoint);
  std::string translate(const std::string& text, Language source) override;
  std::string name() const override { return "http"; }

  static std::atomic<std::uint64_t> requests_made;

 private:
  HttpEndpoint endpoint_;
};

// One JSON file per request under the cache directory, keyed by a digest of
// the request inputs. Writes are atomic so a crash cannot leave a torn file.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir);

  bool enabled() const { return !dir_.empty(); }
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const nlohmann::ordered_json& record) const;

  static std::string llm_key(const std::string& backend, const std::string& model,
                             const std::string& prompt);
  static std::string translation_key(const std::string& translator, Language source,
                                     const std::string& text);

 private:
  std::filesystem::path dir_;
};

struct BackendConfig {
  std::string translator = "identity";  // identity | http
  std::string llm = "mock_knn";         // mock_knn | http
  HttpEndpoint llm_endpoint;
  HttpEndpoint translate_endpoint;
  std::string cache_dir;    // empty disables caching
  int max_retries = 3;      // extra attempts after the first
  double temperature = 0.0;
  size_t max_prompt_chars = 0;  // 0 means unlimited

  bool operator==(const BackendConfig&) const = default;
};

nlohmann::ordered_json backend_config_to_json(const BackendConfig& config);
BackendConfig backend_config_from_json(const nlohmann::json& j);

std::shared_ptr<LlmBackend> make_backend(const BackendConfig& config);
std::shared_ptr<Translator> make_translator(const BackendConfig& config);

struct LlmScore {
  ScoreSet scores;
  std::string raw_response;
  bool cache_hit = false;
};

// Holds the scored training examples for a corpus and answers queries against
// them. The translated example block is built once per session, so scoring n
// records costs n backend round trips, not n translations of the whole
// training set.
class LlmScoringSession {
 public:
  LlmScoringSession(const Corpus& corpus, TranscriptVariant variant, BackendConfig config);
  LlmScoringSession(const Corpus& corpus, TranscriptVariant variant, BackendConfig config,
                    std::shared_ptr<LlmBackend> backend,
                    std::shared_ptr<Translator> translator);

  LlmScore score(const ChildRecord& record);
  LlmScore score_transcript(const std::string& transcript, const std::string& child_id,
                            Language language);

  std::string prompt_for(const std::string& transcript, Language language,
                         size_t* dropped = nullptr);

  size_t example_count() const { return example_blocks_.size(); }
  size_t max_examples_dropped() const { return max_examples_dropped_; }
  size_t backend_calls() const { return backend_calls_; }
  size_t cache_hits() const { return cache_hits_; }
  const BackendConfig& config() const { return config_; }

 private:
  std::string maybe_translate(const std::string& text, Language source);
  size_t keep_for_tail(size_t tail_chars, size_t* dropped);
  std::string assemble_prompt(size_t keep, const std::string& tail) const;

  BackendConfig config_;
  TranscriptVariant variant_ = TranscriptVariant::oracle;
  std::shared_ptr<LlmBackend> backend_;
  std::shared_ptr<Translator> translator_;
  ResponseCache cache_;
  std::vector<std::string> example_blocks_;
  std::vector<size_t> prefix_chars_;  // prefix_chars_[m] = chars in first m blocks
  // key_folds_[m] = digest state of the cache-key material through the first m
  // blocks, so a query's key needs only its own tail, not the whole prompt.
  std::vector<std::uint64_t> key_folds_;
  size_t max_examples_dropped_ = 0;
  size_t backend_calls_ = 0;
  size_t cache_hits_ = 0;
};

// Convenience wrapper for scoring a single transcript against a corpus.
LlmScore score_with_llm(const Corpus& corpus, TranscriptVariant variant,
                        const BackendConfig& config, const std::string& transcript,
                        const std::string& child_id, Language language);

}  // namespace storyscore
