#include "storyscore/llm_scoring.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <thread>

#include <doctest.h>

#include "storyscore/util.hpp"
#include "testutil.hpp"

// httplib drags in <resolv.h>, whose _res macro corrupts Eigen's headers,
// so the Eigen-bearing includes above must stay ahead of it.
#include <httplib.h>

using namespace storyscore;

namespace {

// Small corpus with hand-written transcripts so nearest-neighbour behaviour
// is predictable: the test record repeats the words of train record one.
Corpus example_corpus() {
  Corpus corpus;
  corpus.language = Language::afrikaans;
  corpus.records.push_back(testutil::make_record(
      "afr-train-000", Split::train, {"die hond blaf hard"}, ScoreSet{8.25, 5.5, 3, false}));
  corpus.records.push_back(testutil::make_record(
      "afr-train-001", Split::train, {"die kat slaap lank"}, ScoreSet{12.0, 7.0, 5, false}));
  corpus.records.push_back(testutil::make_record(
      "afr-train-002", Split::train, {"eend swem ver weg"}, ScoreSet{2.0, 1.0, 1, true}));
  corpus.records.push_back(testutil::make_record(
      "afr-test-000", Split::test, {"die kat slaap weer lank"}, ScoreSet{11.0, 7.5, 5, false}));
  rebuild_vocabulary(corpus, TranscriptVariant::oracle);
  return corpus;
}

class ScriptedBackend : public LlmBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> responses, int failures_first = 0)
      : responses_(std::move(responses)), failures_first_(failures_first) {}

  std::string complete(const std::string&) override {
    ++calls;
    if (calls <= failures_first_) throw std::runtime_error("scripted outage");
    const std::string& r = responses_[std::min(static_cast<size_t>(calls - failures_first_) - 1,
                                               responses_.size() - 1)];
    return r;
  }
  std::string name() const override { return "scripted"; }
  std::string model_name() const override { return "scripted-1"; }

  int calls = 0;

 private:
  std::vector<std::string> responses_;
  int failures_first_ = 0;
};

class CountingTranslator : public Translator {
 public:
  std::string translate(const std::string& text, Language) override {
    ++calls;
    return "[en] " + text;
  }
  std::string name() const override { return "counting"; }

  int calls = 0;
};

}  // namespace

TEST_CASE("score lines print shortest round-trip numbers") {
  CHECK(format_score_line({8.25, 5.5, 3, false}) == "{NS: 8.25}, {CQ: 5.5}, {SC: 3}");
  CHECK(format_score_line({12.0, 7.0, 5, false}) == "{NS: 12}, {CQ: 7}, {SC: 5}");
  CHECK(format_score_line({0.1, 10.0, 1, true}) == "{NS: 0.1}, {CQ: 10}, {SC: 1}");
}

TEST_CASE("build_prompt matches the golden transcript byte for byte") {
  std::vector<std::pair<std::string, ScoreSet>> examples = {
      {"die hond blaf", {8.25, 5.5, 3, false}},
      {"die kat slaap", {12.0, 7.0, 5, false}},
  };
  std::string prompt = build_prompt(examples, "die kind speel");
  std::string golden = read_file(std::filesystem::path(GOLDEN_DIR) / "prompt_two_examples.txt");
  CHECK(prompt == golden);
  CHECK(prompt.find("Only give the scores.\n") != std::string::npos);
}

TEST_CASE("parse_scores inverts format_score_line") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    ScoreSet s;
    s.ns = uniform_real(rng, 0.0, 16.0);
    s.cq = uniform_real(rng, 0.0, 10.0);
    s.sc = uniform_int(rng, 1, 6);
    s.ri = intervention_from_sc(s.sc);
    ParsedScores p = parse_scores(format_score_line(s));
    CHECK(p.ns == s.ns);
    CHECK(p.cq == s.cq);
    CHECK(p.sc == static_cast<double>(s.sc));
  }
}

TEST_CASE("parse_scores tolerates label and separator variations") {
  ParsedScores p = parse_scores("ns=3.5, CQ: 4 {sc 2}");
  CHECK(p.ns == 3.5);
  CHECK(p.cq == 4.0);
  CHECK(p.sc == 2.0);

  // A label embedded in a longer word does not count; the detached one wins.
  ParsedScores q = parse_scores("TRANSCRIPT bonscore NS: 7\ncq 3, sc 4");
  CHECK(q.ns == 7.0);

  // The first occurrence that actually carries a number wins.
  ParsedScores r = parse_scores("NS: unsure, NS: 9, NS: 2, CQ: 1, SC: 6");
  CHECK(r.ns == 9.0);

  // Non-finite numbers are not scores.
  ParsedScores t = parse_scores("NS: inf NS: 4 CQ: 2 SC: 3");
  CHECK(t.ns == 4.0);
}

TEST_CASE("parse_scores rejects responses with missing labels") {
  const std::string cases[] = {
      "I think the story was lovely.",
      "NS: high, CQ: 5, SC: 2",
      "",
  };
  for (const std::string& text : cases) {
    CHECK_THROWS_AS((void)parse_scores(text), ScoreParseError);
  }
  try {
    parse_scores("NS: high, CQ: 5, SC: 2");
    FAIL("expected ScoreParseError");
  } catch (const ScoreParseError& e) {
    CHECK(e.raw() == "NS: high, CQ: 5, SC: 2");
    CHECK(std::string(e.what()).find("NS") != std::string::npos);
  }
  CHECK_THROWS_WITH_AS((void)parse_scores("blah"),
                       doctest::Contains("no NS, CQ, SC value found"), ScoreParseError);
}

TEST_CASE("scores_from_parsed clamps and derives the flag") {
  ScoreSet a = scores_from_parsed({20.0, -1.0, 2.5});
  CHECK(a.ns == 16.0);
  CHECK(a.cq == 0.0);
  CHECK(a.sc == 2);
  CHECK(a.ri == true);

  ScoreSet b = scores_from_parsed({-3.0, 12.0, 2.6});
  CHECK(b.ns == 0.0);
  CHECK(b.cq == 10.0);
  CHECK(b.sc == 3);
  CHECK(b.ri == false);

  CHECK(scores_from_parsed({1.0, 1.0, 0.0}).sc == 1);
  CHECK(scores_from_parsed({1.0, 1.0, 9.7}).sc == 6);
  CHECK(scores_from_parsed({1.0, 1.0, 3.0}).sc == 3);
}

TEST_CASE("mock backend answers with the most similar example's score line") {
  std::vector<std::pair<std::string, ScoreSet>> examples = {
      {"die hond blaf hard", {8.25, 5.5, 3, false}},
      {"die kat slaap lank", {12.0, 7.0, 5, false}},
  };
  MockKnnBackend backend;
  std::string response = backend.complete(build_prompt(examples, "die kat slaap weer"));
  CHECK(response == "{NS: 12}, {CQ: 7}, {SC: 5}");

  // No token overlap at all ties every similarity at zero; the first wins.
  std::string none = backend.complete(build_prompt(examples, "umntwana uyagula"));
  CHECK(none == "{NS: 8.25}, {CQ: 5.5}, {SC: 3}");

  CHECK_THROWS_AS((void)backend.complete("no transcript lines here"), std::runtime_error);
  CHECK_THROWS_AS((void)backend.complete(build_prompt({}, "query")), std::runtime_error);
}

TEST_CASE("response cache stores and replays by key") {
  testutil::TempDir dir("cache");
  ResponseCache cache(dir.path / "c");
  std::string key = ResponseCache::llm_key("mock_knn", "knn-1", "prompt text");
  CHECK_FALSE(cache.get(key).has_value());
  nlohmann::ordered_json rec;
  rec["kind"] = "llm";
  rec["response"] = "{NS: 1}, {CQ: 2}, {SC: 3}";
  cache.put(key, rec);
  auto hit = cache.get(key);
  REQUIRE(hit.has_value());
  CHECK(*hit == "{NS: 1}, {CQ: 2}, {SC: 3}");

  // A torn or corrupt cache file must behave like a miss, not an error.
  write_file_atomic(dir.path / "c" / (key + ".json"), "{not json");
  CHECK_FALSE(cache.get(key).has_value());

  ResponseCache disabled;
  CHECK_FALSE(disabled.enabled());
  CHECK_FALSE(disabled.get(key).has_value());

  CHECK(ResponseCache::llm_key("a", "m", "p") != ResponseCache::llm_key("b", "m", "p"));
  CHECK(ResponseCache::llm_key("a", "m", "p") != ResponseCache::llm_key("a", "n", "p"));
  CHECK(ResponseCache::llm_key("a", "m", "p") != ResponseCache::llm_key("a", "m", "q"));
  CHECK(ResponseCache::translation_key("t", Language::afrikaans, "x") !=
        ResponseCache::translation_key("t", Language::isixhosa, "x"));
}

TEST_CASE("session scores a record end to end with the mock backend") {
  Corpus corpus = example_corpus();
  BackendConfig config;
  LlmScoringSession session(corpus, TranscriptVariant::oracle, config);
  CHECK(session.example_count() == 3);

  LlmScore result = session.score(*corpus.find("afr-test-000"));
  CHECK(result.scores.ns == 12.0);
  CHECK(result.scores.cq == 7.0);
  CHECK(result.scores.sc == 5);
  CHECK(result.scores.ri == false);
  CHECK(result.cache_hit == false);
  CHECK(result.raw_response == "{NS: 12}, {CQ: 7}, {SC: 5}");
  CHECK(session.backend_calls() == 1);
  CHECK(session.cache_hits() == 0);
  CHECK(session.max_examples_dropped() == 0);
}

TEST_CASE("a warm cache answers without touching the backend") {
  Corpus corpus = example_corpus();
  testutil::TempDir dir("warm");
  BackendConfig config;
  config.cache_dir = (dir.path / "cache").string();

  auto backend1 = std::make_shared<ScriptedBackend>(
      std::vector<std::string>{"{NS: 4}, {CQ: 3}, {SC: 2}"});
  LlmScoringSession cold(corpus, TranscriptVariant::oracle, config, backend1, nullptr);
  LlmScore first = cold.score(*corpus.find("afr-test-000"));
  CHECK(first.cache_hit == false);
  CHECK(backend1->calls == 1);

  // The session files the entry under the documented key for the full prompt.
  std::string prompt = cold.prompt_for(oracle_transcript(*corpus.find("afr-test-000")),
                                       Language::afrikaans);
  std::string key = ResponseCache::llm_key("scripted", "scripted-1", prompt);
  CHECK(std::filesystem::exists(dir.path / "cache" / (key + ".json")));

  auto backend2 = std::make_shared<ScriptedBackend>(
      std::vector<std::string>{"{NS: 9}, {CQ: 9}, {SC: 6}"});
  LlmScoringSession warm(corpus, TranscriptVariant::oracle, config, backend2, nullptr);
  LlmScore second = warm.score(*corpus.find("afr-test-000"));
  CHECK(second.cache_hit == true);
  CHECK(second.raw_response == first.raw_response);
  CHECK(second.scores == first.scores);
  CHECK(backend2->calls == 0);
  CHECK(warm.backend_calls() == 0);
  CHECK(warm.cache_hits() == 1);
}

TEST_CASE("backend outages are retried and eventually reported with the child id") {
  Corpus corpus = example_corpus();
  BackendConfig config;
  config.max_retries = 2;

  auto flaky = std::make_shared<ScriptedBackend>(
      std::vector<std::string>{"{NS: 4}, {CQ: 3}, {SC: 2}"}, 2);
  LlmScoringSession session(corpus, TranscriptVariant::oracle, config, flaky, nullptr);
  LlmScore ok = session.score(*corpus.find("afr-test-000"));
  CHECK(ok.scores.sc == 2);
  CHECK(flaky->calls == 3);
  CHECK(session.backend_calls() == 3);

  auto dead = std::make_shared<ScriptedBackend>(std::vector<std::string>{"ignored"}, 100);
  LlmScoringSession failing(corpus, TranscriptVariant::oracle, config, dead, nullptr);
  CHECK_THROWS_WITH_AS(
      (void)failing.score(*corpus.find("afr-test-000")),
      doctest::Contains("llm scoring failed for afr-test-000 after 3 attempts"),
      std::runtime_error);
}

TEST_CASE("unparseable responses burn retries like outages") {
  Corpus corpus = example_corpus();
  BackendConfig config;
  config.max_retries = 1;
  auto vague = std::make_shared<ScriptedBackend>(std::vector<std::string>{"a nice story"});
  LlmScoringSession session(corpus, TranscriptVariant::oracle, config, vague, nullptr);
  CHECK_THROWS_WITH_AS((void)session.score(*corpus.find("afr-test-000")),
                       doctest::Contains("after 2 attempts"), std::runtime_error);
  CHECK(vague->calls == 2);
}

TEST_CASE("translation runs once per distinct text when cached") {
  Corpus corpus = example_corpus();
  testutil::TempDir dir("translate");
  BackendConfig config;
  config.translator = "counting";
  config.cache_dir = (dir.path / "cache").string();

  auto backend = std::make_shared<MockKnnBackend>();
  auto translator1 = std::make_shared<CountingTranslator>();
  LlmScoringSession cold(corpus, TranscriptVariant::oracle, config, backend, translator1);
  (void)cold.score(*corpus.find("afr-test-000"));
  // Three example transcripts plus the query.
  CHECK(translator1->calls == 4);

  auto translator2 = std::make_shared<CountingTranslator>();
  LlmScoringSession warm(corpus, TranscriptVariant::oracle, config, backend, translator2);
  (void)warm.score(*corpus.find("afr-test-000"));
  CHECK(translator2->calls == 0);
  CHECK(warm.cache_hits() >= 4);

  // The prompt actually carries the translated text.
  LlmScoringSession direct(corpus, TranscriptVariant::oracle, BackendConfig{}, backend,
                           std::make_shared<CountingTranslator>());
  std::string prompt = direct.prompt_for("die kat", Language::afrikaans);
  CHECK(prompt.find("Transcript: [en] die kat") != std::string::npos);
}

TEST_CASE("identity translation is never cached") {
  Corpus corpus = example_corpus();
  testutil::TempDir dir("identity");
  BackendConfig config;
  config.cache_dir = (dir.path / "cache").string();
  LlmScoringSession session(corpus, TranscriptVariant::oracle, config);
  (void)session.score(*corpus.find("afr-test-000"));

  size_t cache_files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir.path / "cache")) {
    (void)entry;
    ++cache_files;
  }
  CHECK(cache_files == 1);  // just the llm response
}

TEST_CASE("prompt budget drops examples from the end") {
  Corpus corpus = example_corpus();
  BackendConfig config;
  LlmScoringSession unlimited(corpus, TranscriptVariant::oracle, config);
  std::string full = unlimited.prompt_for("die kat", Language::afrikaans);

  config.max_prompt_chars = full.size() - 1;
  LlmScoringSession tight(corpus, TranscriptVariant::oracle, config);
  size_t dropped = 0;
  std::string trimmed = tight.prompt_for("die kat", Language::afrikaans, &dropped);
  CHECK(dropped == 1);
  CHECK(trimmed.size() <= config.max_prompt_chars);
  CHECK(trimmed.find("eend swem") == std::string::npos);
  CHECK(trimmed.find("die hond blaf hard") != std::string::npos);
  CHECK(tight.max_examples_dropped() == 1);

  config.max_prompt_chars = 40;
  LlmScoringSession hopeless(corpus, TranscriptVariant::oracle, config);
  CHECK_THROWS_WITH_AS((void)hopeless.prompt_for("die kat", Language::afrikaans),
                       doctest::Contains("no room for even one scored example"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS((void)hopeless.score(*corpus.find("afr-test-000")),
                       doctest::Contains("llm scoring failed for afr-test-000"),
                       std::runtime_error);
}

TEST_CASE("sessions require scored training records") {
  Corpus corpus = example_corpus();
  BackendConfig config;
  corpus.records[1].truth.reset();
  CHECK_THROWS_WITH_AS(LlmScoringSession(corpus, TranscriptVariant::oracle, config),
                       doctest::Contains("afr-train-001"), std::invalid_argument);

  Corpus only_test;
  only_test.language = Language::afrikaans;
  only_test.records.push_back(
      testutil::make_record("afr-test-000", Split::test, {"die kat"}, std::nullopt));
  CHECK_THROWS_WITH_AS(LlmScoringSession(only_test, TranscriptVariant::oracle, config),
                       doctest::Contains("no training records"), std::invalid_argument);
}

TEST_CASE("score_with_llm wraps a one-shot session") {
  Corpus corpus = example_corpus();
  LlmScore result = score_with_llm(corpus, TranscriptVariant::oracle, BackendConfig{},
                                   "die hond blaf baie hard", "adhoc", Language::afrikaans);
  CHECK(result.scores.ns == 8.25);
}

TEST_CASE("backend config round-trips through JSON without credentials") {
  BackendConfig config;
  config.translator = "http";
  config.llm = "http";
  config.llm_endpoint = {"http://127.0.0.1:9", "test-model", "LLM_TOKEN", 12.5};
  config.translate_endpoint = {"http://127.0.0.1:9", "", "TRANSLATE_TOKEN", 3.0};
  config.cache_dir = "/tmp/cache";
  config.max_retries = 5;
  config.temperature = 0.25;
  config.max_prompt_chars = 9000;

  nlohmann::ordered_json j = backend_config_to_json(config);
  CHECK(j.dump().find("LLM_TOKEN") != std::string::npos);  // the env var NAME is config
  BackendConfig back = backend_config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back == config);

  BackendConfig bad_llm;
  bad_llm.llm = "banana";
  CHECK_THROWS_AS((void)make_backend(bad_llm), std::invalid_argument);
  BackendConfig bad_translate;
  bad_translate.translator = "banana";
  CHECK_THROWS_AS((void)make_translator(bad_translate), std::invalid_argument);
  BackendConfig mock_alias;
  mock_alias.llm = "mock";
  CHECK(make_backend(mock_alias)->name() == "mock_knn");
}

TEST_CASE("http backend and translator speak to a local server") {
  httplib::Server server;
  std::atomic<int> complete_calls{0};
  std::string seen_auth;
  std::string seen_model;
  server.Post("/complete", [&](const httplib::Request& req, httplib::Response& res) {
    int call = ++complete_calls;
    seen_auth = req.get_header_value("Authorization");
    seen_model = nlohmann::json::parse(req.body).at("model").get<std::string>();
    if (call == 1) {
      res.status = 503;
      return;
    }
    res.set_content("{\"text\": \"{NS: 6}, {CQ: 4}, {SC: 3}\"}", "application/json");
  });
  server.Post("/translate", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json out;
    out["text"] = "[" + body.at("source").get<std::string>() + "] " +
                  body.at("text").get<std::string>();
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  std::string base = "http://127.0.0.1:" + std::to_string(port);

  setenv("STORYSCORE_TEST_TOKEN", "sekret", 1);
  std::uint64_t llm_before = HttpLlmBackend::requests_made.load();
  std::uint64_t tr_before = HttpTranslator::requests_made.load();

  Corpus corpus = example_corpus();
  BackendConfig config;
  config.llm = "http";
  config.translator = "http";
  config.llm_endpoint = {base, "test-model", "STORYSCORE_TEST_TOKEN", 5.0};
  config.translate_endpoint = {base, "", "", 5.0};
  config.max_retries = 2;

  LlmScoringSession session(corpus, TranscriptVariant::oracle, config);
  LlmScore result = session.score(*corpus.find("afr-test-000"));
  CHECK(result.scores.ns == 6.0);
  CHECK(result.scores.sc == 3);
  CHECK(complete_calls.load() == 2);  // one 503, one success
  CHECK(seen_auth == "Bearer sekret");
  CHECK(seen_model == "test-model");
  CHECK(HttpLlmBackend::requests_made.load() == llm_before + 2);
  // Three examples plus the query, translated through the server.
  CHECK(HttpTranslator::requests_made.load() == tr_before + 4);
  std::string prompt = session.prompt_for("die kat", Language::afrikaans);
  CHECK(prompt.find("[afrikaans] die kat") != std::string::npos);

  unsetenv("STORYSCORE_TEST_TOKEN");
  HttpLlmBackend direct(config.llm_endpoint, 0.0);
  (void)direct.complete("NS CQ SC?");
  CHECK(seen_auth.empty());

  HttpEndpoint unreachable{"http://127.0.0.1:1", "m", "", 0.3};
  HttpLlmBackend down(unreachable, 0.0);
  CHECK_THROWS_WITH_AS((void)down.complete("x"), doctest::Contains("llm backend request"),
                       std::runtime_error);

  server.stop();
  server_thread.join();
}

TEST_CASE("malformed payloads name the failing component") {
  httplib::Server server;
  server.Post("/complete", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"answer\": 42}", "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpEndpoint endpoint{"http://127.0.0.1:" + std::to_string(port), "m", "", 5.0};
  HttpLlmBackend backend(endpoint, 0.0);
  CHECK_THROWS_WITH_AS((void)backend.complete("x"),
                       doctest::Contains("llm backend returned a malformed payload"),
                       std::runtime_error);

  // A route the server does not serve surfaces as a status error.
  HttpTranslator translator(endpoint);
  CHECK_THROWS_WITH_AS((void)translator.translate("x", Language::afrikaans),
                       doctest::Contains("returned status 404"), std::runtime_error);

  server.stop();
  server_thread.join();
}
