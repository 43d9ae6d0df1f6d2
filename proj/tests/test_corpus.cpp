#include "storyscore/corpus.hpp"

#include <algorithm>
#include <random>
#include <set>

#include <doctest.h>

#include "oracles.hpp"
#include "storyscore/features.hpp"
#include "storyscore/util.hpp"
#include "testutil.hpp"

using namespace storyscore;
using testutil::make_record;

TEST_CASE("enum names round-trip") {
  for (auto l : {Language::afrikaans, Language::isixhosa}) CHECK(parse_language(to_string(l)) == l);
  for (auto s : {Split::train, Split::dev, Split::test}) CHECK(parse_split(to_string(s)) == s);
  for (auto v : {TranscriptVariant::oracle, TranscriptVariant::asr})
    CHECK(parse_variant(to_string(v)) == v);
  for (auto t : {Task::ns, Task::cq, Task::sc, Task::ri}) CHECK(parse_task(to_string(t)) == t);
  CHECK_THROWS_AS(parse_language("zulu"), std::invalid_argument);
  CHECK_THROWS_AS(parse_split("validation"), std::invalid_argument);
  CHECK_THROWS_AS(parse_variant("gold"), std::invalid_argument);
  CHECK_THROWS_AS(parse_task("nq"), std::invalid_argument);
}

TEST_CASE("intervention flag holds exactly for the two most severe categories") {
  CHECK(intervention_from_sc(1));
  CHECK(intervention_from_sc(2));
  for (int sc = 3; sc <= 6; ++sc) CHECK_FALSE(intervention_from_sc(sc));
}

TEST_CASE("validate_scoreset enforces ranges and flag consistency") {
  CHECK_NOTHROW(validate_scoreset({8.5, 7.0, 3, false}, "t"));
  CHECK_NOTHROW(validate_scoreset({16.0, 0.0, 6, false}, "t"));
  CHECK_NOTHROW(validate_scoreset({0.0, 10.0, 1, true}, "t"));
  CHECK_THROWS_AS(validate_scoreset({-0.1, 5.0, 3, false}, "t"), std::runtime_error);
  CHECK_THROWS_AS(validate_scoreset({16.2, 5.0, 3, false}, "t"), std::runtime_error);
  CHECK_THROWS_AS(validate_scoreset({8.0, -1.0, 3, false}, "t"), std::runtime_error);
  CHECK_THROWS_AS(validate_scoreset({8.0, 10.5, 3, false}, "t"), std::runtime_error);
  CHECK_THROWS_AS(validate_scoreset({8.0, 5.0, 0, true}, "t"), std::runtime_error);
  CHECK_THROWS_AS(validate_scoreset({8.0, 5.0, 7, false}, "t"), std::runtime_error);
  CHECK_THROWS_AS(validate_scoreset({8.0, 5.0, 2, false}, "t"), std::runtime_error);
  CHECK_THROWS_AS(validate_scoreset({8.0, 5.0, 4, true}, "t"), std::runtime_error);
}

TEST_CASE("oracle transcript falls back to joined utterances") {
  ChildRecord rec = make_record("afr-train-000", Split::train,
                                {"die hond blaf", "die kat slaap"}, std::nullopt);
  CHECK(oracle_transcript(rec) == "die hond blaf die kat slaap");
  rec.transcript_oracle = "iets anders";
  CHECK(oracle_transcript(rec) == "iets anders");
  CHECK(transcript_for(rec, TranscriptVariant::oracle) == "iets anders");
  CHECK_FALSE(has_variant(rec, TranscriptVariant::asr));
  CHECK_THROWS_WITH_AS((void)transcript_for(rec, TranscriptVariant::asr),
                       doctest::Contains("afr-train-000"), std::runtime_error);
  rec.transcript_asr = "iets anbers";
  CHECK(has_variant(rec, TranscriptVariant::asr));
  CHECK(transcript_for(rec, TranscriptVariant::asr) == "iets anbers");
}

TEST_CASE("vocabulary comes from train records only, sorted and distinct") {
  std::vector<ChildRecord> records;
  records.push_back(make_record("a1", Split::train, {"die hond blaf", "blaf hond"}, std::nullopt));
  records.push_back(make_record("a2", Split::train, {"die kat"}, std::nullopt));
  records.push_back(make_record("a3", Split::dev, {"onbekende woord"}, std::nullopt));
  records.push_back(make_record("a4", Split::test, {"nog n woord"}, std::nullopt));
  auto vocab = derive_vocabulary(records, TranscriptVariant::oracle);
  CHECK(vocab == std::vector<std::string>{"blaf", "die", "hond", "kat"});
}

TEST_CASE("corpus JSONL round-trips exactly") {
  Corpus corpus;
  corpus.language = Language::afrikaans;
  corpus.records.push_back(make_record("afr-train-000", Split::train, {"die hond blaf"},
                                       ScoreSet{8.25, 5.5, 3, false}));
  corpus.records.push_back(make_record("afr-dev-000", Split::dev, {"die kat slaap", "lank"},
                                       ScoreSet{12.0, 7.0, 5, false}));
  corpus.records.push_back(make_record("afr-test-000", Split::test, {"die kind speel"},
                                       std::nullopt));
  corpus.records[1].transcript_asr = "die kat slaap lonk";
  rebuild_vocabulary(corpus, TranscriptVariant::oracle);

  std::string jsonl = corpus_to_jsonl(corpus);
  Corpus back = parse_corpus_jsonl(jsonl, TranscriptVariant::oracle, "mem");
  CHECK(back == corpus);
  CHECK(corpus_to_jsonl(back) == jsonl);

  testutil::TempDir dir("corpus");
  save_corpus(corpus, dir.path / "c.jsonl");
  Corpus loaded = load_corpus(dir.path / "c.jsonl", TranscriptVariant::oracle);
  CHECK(loaded == corpus);
}

TEST_CASE("corpus parsing rejects malformed input with the line number") {
  auto line = [](const ChildRecord& rec) {
    Corpus c;
    c.records.push_back(rec);
    return corpus_to_jsonl(c);
  };
  std::string good = line(make_record("a1", Split::train, {"die hond"}, std::nullopt));

  CHECK_THROWS_WITH_AS(
      (void)parse_corpus_jsonl(good + "not json\n", TranscriptVariant::oracle, "mem"),
      doctest::Contains("mem:2"), std::runtime_error);
  CHECK_THROWS_WITH_AS((void)parse_corpus_jsonl(good + good, TranscriptVariant::oracle, "mem"),
                       doctest::Contains("duplicate child_id"), std::runtime_error);
  CHECK_THROWS_WITH_AS((void)parse_corpus_jsonl("", TranscriptVariant::oracle, "mem"),
                       doctest::Contains("no records"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      (void)parse_corpus_jsonl(good, TranscriptVariant::asr, "mem"),
      doctest::Contains("missing transcript variant 'asr'"), std::runtime_error);

  ChildRecord bad_times = make_record("a2", Split::train, {"die hond"}, std::nullopt);
  bad_times.utterances[0].end_s = bad_times.utterances[0].start_s;
  CHECK_THROWS_WITH_AS(
      (void)parse_corpus_jsonl(line(bad_times), TranscriptVariant::oracle, "mem"),
      doctest::Contains("end_s must exceed start_s"), std::runtime_error);

  ChildRecord overlap = make_record("a3", Split::train, {"een", "twee"}, std::nullopt);
  overlap.utterances[1].start_s = overlap.utterances[0].end_s - 0.5;
  CHECK_THROWS_WITH_AS(
      (void)parse_corpus_jsonl(line(overlap), TranscriptVariant::oracle, "mem"),
      doctest::Contains("overlap"), std::runtime_error);

  ChildRecord blank = make_record("a4", Split::train, {"  "}, std::nullopt);
  CHECK_THROWS_WITH_AS((void)parse_corpus_jsonl(line(blank), TranscriptVariant::oracle, "mem"),
                       doctest::Contains("empty text"), std::runtime_error);

  ChildRecord empty = make_record("a5", Split::train, {}, std::nullopt);
  empty.transcript_oracle = "iets";
  CHECK_THROWS_WITH_AS((void)parse_corpus_jsonl(line(empty), TranscriptVariant::oracle, "mem"),
                       doctest::Contains("no utterances"), std::runtime_error);

  std::string xho =
      line(make_record("x1", Split::train, {"umntwana"}, std::nullopt, Language::isixhosa));
  CHECK_THROWS_WITH_AS((void)parse_corpus_jsonl(good + xho, TranscriptVariant::oracle, "mem"),
                       doctest::Contains("differs from corpus language"), std::runtime_error);
}

TEST_CASE("split_records and find") {
  SynthSpec spec;
  spec.train = 6;
  spec.dev = 3;
  spec.test = 2;
  spec.vocab_size = 10;
  Corpus corpus = synthesize_corpus(spec, 5).corpus;
  CHECK(corpus.split_records(Split::train).size() == 6);
  CHECK(corpus.split_records(Split::dev).size() == 3);
  CHECK(corpus.split_records(Split::test).size() == 2);
  CHECK(corpus.find("afr-dev-001") != nullptr);
  CHECK(corpus.find("afr-dev-001")->split == Split::dev);
  CHECK(corpus.find("afr-dev-009") == nullptr);
}

TEST_CASE("measure_cer counts edits over reference characters") {
  CHECK(measure_cer("kitten", "sitting") == 0.5);
  CHECK(measure_cer("die hond", "die hond") == 0.0);
  CHECK(measure_cer("ab", "") == 1.0);
  CHECK(measure_cer("ab", "abcd") == 1.0);
  CHECK(measure_cer("abcd", "ab") == 0.5);
  CHECK(measure_cer("m\xc3\xb4re", "m\xc3\xb4re") == 0.0);
  CHECK(measure_cer("\xc3\xa9\xc3\xa9", "\xc3\xa9m") == 0.5);
  CHECK_THROWS_AS((void)measure_cer("", "iets"), std::invalid_argument);
}

TEST_CASE("corrupt_transcript validates inputs") {
  CHECK_THROWS_AS((void)corrupt_transcript("die hond", 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)corrupt_transcript("die hond", 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)corrupt_transcript("die hond", -0.2, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)corrupt_transcript("die hond", 1.5, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)corrupt_transcript("", 0.2, 1), std::invalid_argument);
}

TEST_CASE("corrupt_transcript is deterministic and stays in the input alphabet") {
  std::string text = "die klein hond blaf baie hard in die nag";
  std::string a = corrupt_transcript(text, 0.3, 42);
  std::string b = corrupt_transcript(text, 0.3, 42);
  CHECK(a == b);
  CHECK(corrupt_transcript(text, 0.3, 43) != a);

  std::set<std::string> inventory;
  for (const auto& c : utf8_chars(text)) inventory.insert(c);
  for (const auto& c : utf8_chars(a)) CHECK(inventory.count(c) == 1);
}

TEST_CASE("corrupted text lands near the requested error rate") {
  std::string text;
  while (text.size() < 12000) text += "die klein hond blaf baie hard in die koue nag ";
  double cer28 = measure_cer(text, corrupt_transcript(text, 0.28, 7));
  CHECK(cer28 >= 0.26);
  CHECK(cer28 <= 0.30);
  double cer10 = measure_cer(text, corrupt_transcript(text, 0.10, 8));
  CHECK(cer10 >= 0.08);
  CHECK(cer10 <= 0.12);
}

TEST_CASE("corrupt_corpus keys noise on the child, not record order") {
  SynthSpec spec;
  spec.train = 5;
  spec.dev = 2;
  spec.test = 2;
  spec.vocab_size = 12;
  Corpus a = synthesize_corpus(spec, 9).corpus;
  Corpus b = a;
  std::reverse(b.records.begin(), b.records.end());
  corrupt_corpus(a, 0.28, 3);
  corrupt_corpus(b, 0.28, 3);
  for (const auto& rec : a.records) {
    const ChildRecord* twin = b.find(rec.child_id);
    REQUIRE(twin != nullptr);
    CHECK(rec.transcript_asr == twin->transcript_asr);
    CHECK(*rec.transcript_asr != oracle_transcript(rec));
  }

  Corpus c = synthesize_corpus(spec, 9).corpus;
  corrupt_corpus(c, 0.28, 4);
  CHECK(*c.records[0].transcript_asr != *a.records[0].transcript_asr);
}

TEST_CASE("synthesize_corpus is deterministic and honors the spec") {
  SynthSpec spec;
  spec.train = 12;
  spec.dev = 4;
  spec.test = 3;
  spec.vocab_size = 15;
  SynthResult one = synthesize_corpus(spec, 21);
  SynthResult two = synthesize_corpus(spec, 21);
  CHECK(corpus_to_jsonl(one.corpus) == corpus_to_jsonl(two.corpus));
  CHECK(corpus_to_jsonl(one.corpus) != corpus_to_jsonl(synthesize_corpus(spec, 22).corpus));

  CHECK(one.corpus.split_records(Split::train).size() == 12);
  CHECK(one.corpus.split_records(Split::dev).size() == 4);
  CHECK(one.corpus.split_records(Split::test).size() == 3);
  CHECK(one.corpus.vocabulary.size() == 15);
  CHECK(one.corpus.records[0].child_id == "afr-train-000");
  CHECK(one.planted_ns.terms.size() == 3);
  CHECK(one.planted_cq.terms.size() == 3);

  for (const auto& rec : one.corpus.records) {
    REQUIRE(rec.truth.has_value());
    CHECK_NOTHROW(validate_scoreset(*rec.truth, rec.child_id));
  }

  // Every vocabulary word is attested in some train transcript.
  auto train_vocab = derive_vocabulary(one.corpus.records, TranscriptVariant::oracle);
  CHECK(train_vocab == one.corpus.vocabulary);

  SynthSpec xho = spec;
  xho.language = Language::isixhosa;
  Corpus xc = synthesize_corpus(xho, 21).corpus;
  CHECK(xc.records[0].child_id == "xho-train-000");
  CHECK(xc.language == Language::isixhosa);
}

TEST_CASE("synthesize_corpus rejects infeasible specs") {
  SynthSpec spec;
  spec.train = 0;
  spec.dev = 0;
  spec.test = 0;
  CHECK_THROWS_AS((void)synthesize_corpus(spec, 1), std::invalid_argument);
  spec = SynthSpec{};
  spec.vocab_size = 3;
  spec.active_features = 3;
  CHECK_THROWS_AS((void)synthesize_corpus(spec, 1), std::invalid_argument);
  spec = SynthSpec{};
  spec.noise_sigma = -0.1;
  CHECK_THROWS_AS((void)synthesize_corpus(spec, 1), std::invalid_argument);
}

TEST_CASE("noiseless synthetic scores follow the planted model exactly") {
  SynthSpec spec;
  spec.train = 60;
  spec.dev = 5;
  spec.test = 5;
  spec.vocab_size = 20;
  spec.noise_sigma = 0.0;
  SynthResult synth = synthesize_corpus(spec, 33);

  auto train = synth.corpus.split_records(Split::train);
  const auto& terms = synth.planted_ns.terms;
  Eigen::MatrixXd X(static_cast<Eigen::Index>(train.size()),
                    static_cast<Eigen::Index>(terms.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(train.size()));
  for (size_t i = 0; i < train.size(); ++i) {
    auto tokens = tokenize(oracle_transcript(*train[i]));
    for (size_t j = 0; j < terms.size(); ++j) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(
          std::count(tokens.begin(), tokens.end(), terms[j].first));
    }
    y(static_cast<Eigen::Index>(i)) = train[i]->truth->ns;
  }

  auto [intercept, coef] = oracles::ols_coefficients(X, y);
  CHECK(intercept == doctest::Approx(synth.planted_ns.intercept).epsilon(1e-8));
  for (size_t j = 0; j < terms.size(); ++j) {
    CHECK(coef(static_cast<Eigen::Index>(j)) == doctest::Approx(terms[j].second).epsilon(1e-8));
  }
}
