#include "storyscore/features.hpp"

#include <cmath>

#include <doctest.h>

#include "storyscore/corpus.hpp"
#include "testutil.hpp"

using namespace storyscore;
using testutil::make_record;

TEST_CASE("tokenize lowercases, strips punctuation and keeps UTF-8 bytes") {
  CHECK(tokenize("Die hond, BLAF!") == std::vector<std::string>{"die", "hond", "blaf"});
  CHECK(tokenize("3 honde") == std::vector<std::string>{"3", "honde"});
  CHECK(tokenize("  een\ttwee\nDRIE ") == std::vector<std::string>{"een", "twee", "drie"});
  CHECK(tokenize("m\xc3\xb4re vroeg") == std::vector<std::string>{"m\xc3\xb4re", "vroeg"});
  CHECK(tokenize("?! ... --") == std::vector<std::string>{});
  CHECK(tokenize("") == std::vector<std::string>{});
}

TEST_CASE("count_syllables counts maximal vowel runs with a floor of one") {
  CHECK(count_syllables("hond") == 1);
  CHECK(count_syllables("hondjie") == 2);
  CHECK(count_syllables("skoolbus") == 2);
  CHECK(count_syllables("aeiou") == 1);
  CHECK(count_syllables("baai") == 1);
  CHECK(count_syllables("brr") == 1);
  CHECK(count_syllables("m\xc3\xb4re") == 2);
  CHECK(count_syllables("s\xc3\xaa") == 1);
  CHECK_THROWS_AS((void)count_syllables(""), std::invalid_argument);
}

TEST_CASE("flesch reading ease follows the standard formula") {
  CHECK(flesch_from_counts(1, 5, 7) ==
        doctest::Approx(206.835 - 1.015 * 5.0 - 84.6 * (7.0 / 5.0)).epsilon(1e-12));
  CHECK(flesch_reading_ease({{"die", "hond", "blaf"}, {"die", "kat"}}) ==
        doctest::Approx(206.835 - 1.015 * (5.0 / 2.0) - 84.6 * 1.0).epsilon(1e-12));
  CHECK_THROWS_AS((void)flesch_from_counts(0, 5, 7), std::invalid_argument);
  CHECK_THROWS_AS((void)flesch_from_counts(2, 0, 0), std::invalid_argument);
}

TEST_CASE("feature schema is the fixed block plus word counts in vocabulary order") {
  CHECK(fixed_feature_names() ==
        std::vector<std::string>{"duration_total_s", "utterance_len_mean_s",
                                 "utterance_len_std_s", "token_count", "type_count",
                                 "flesch_reading_ease"});
  FeatureSchema schema{{"blaf", "die", "hond"}};
  CHECK(schema.size() == 9);
  auto names = schema.feature_names();
  CHECK(names.size() == 9);
  CHECK(names[5] == "flesch_reading_ease");
  CHECK(names[6] == "word:blaf");
  CHECK(names[8] == "word:hond");
}

TEST_CASE("extract_features computes timing and lexical features by hand") {
  ChildRecord rec = make_record("afr-test-000", Split::test,
                                {"Die hond blaf.", "Die hond slaap"}, std::nullopt);
  rec.utterances[1].end_s = rec.utterances[1].start_s + 3.0;
  FeatureSchema schema{{"blaf", "die", "kat"}};
  FeatureVector fv = extract_features(rec, schema, TranscriptVariant::oracle);

  REQUIRE(fv.values.size() == 9);
  CHECK(fv.values[0] == doctest::Approx(5.0));          // 2.0 + 3.0
  CHECK(fv.values[1] == doctest::Approx(2.5));
  CHECK(fv.values[2] == doctest::Approx(0.5));          // population std of {2, 3}
  CHECK(fv.values[3] == 6.0);                           // die hond blaf die hond slaap
  CHECK(fv.values[4] == 4.0);                           // die, hond, blaf, slaap
  // 2 sentences, 6 words, 6 syllables ("aa" in slaap is one run)
  CHECK(fv.values[5] == doctest::Approx(206.835 - 1.015 * 3.0 - 84.6 * (6.0 / 6.0)));
  CHECK(fv.values[6] == 1.0);                           // blaf
  CHECK(fv.values[7] == 2.0);                           // die
  CHECK(fv.values[8] == 0.0);                           // kat never appears
}

TEST_CASE("a transcript with no alphanumeric content yields zero lexical features") {
  ChildRecord rec = make_record("afr-test-001", Split::test, {"?!"}, std::nullopt);
  FeatureVector fv = extract_features(rec, FeatureSchema{}, TranscriptVariant::oracle);
  CHECK(fv.values[3] == 0.0);
  CHECK(fv.values[4] == 0.0);
  CHECK(fv.values[5] == 0.0);
}

TEST_CASE("timing features ignore the transcript variant") {
  ChildRecord rec = make_record("afr-test-002", Split::test,
                                {"die hond blaf", "die kat slaap"}, std::nullopt);
  rec.transcript_asr = "dxe hnd blf kt slp";
  FeatureSchema schema{{"die", "hond"}};
  FeatureVector oracle = extract_features(rec, schema, TranscriptVariant::oracle);
  FeatureVector asr = extract_features(rec, schema, TranscriptVariant::asr);
  for (int j = 0; j < 3; ++j) CHECK(oracle.values[j] == asr.values[j]);
  CHECK(oracle.values[3] != asr.values[3]);
  CHECK(oracle.values[7] != asr.values[7]);
}

TEST_CASE("build_feature_matrix keeps record order") {
  SynthSpec spec;
  spec.train = 5;
  spec.dev = 2;
  spec.test = 2;
  spec.vocab_size = 10;
  Corpus corpus = synthesize_corpus(spec, 13).corpus;
  FeatureSchema schema{corpus.vocabulary};
  FeatureMatrix m = build_feature_matrix(corpus, schema, TranscriptVariant::oracle);
  CHECK(m.child_ids.size() == 9);
  CHECK(m.values.rows() == 9);
  CHECK(m.values.cols() == static_cast<long>(schema.size()));
  for (size_t i = 0; i < m.child_ids.size(); ++i) {
    CHECK(m.child_ids[i] == corpus.records[i].child_id);
    FeatureVector fv = extract_features(corpus.records[i], schema, TranscriptVariant::oracle);
    CHECK((m.values.row(static_cast<long>(i)).transpose() - fv.values).norm() == 0.0);
  }
}

TEST_CASE("feature matrix CSV round-trips bit-exactly") {
  SynthSpec spec;
  spec.train = 4;
  spec.dev = 1;
  spec.test = 1;
  spec.vocab_size = 8;
  Corpus corpus = synthesize_corpus(spec, 14).corpus;
  FeatureMatrix m = build_feature_matrix(corpus, FeatureSchema{corpus.vocabulary},
                                         TranscriptVariant::oracle);
  std::string csv = feature_matrix_to_csv(m);
  FeatureMatrix back = feature_matrix_from_csv(csv, "mem");
  CHECK(back.child_ids == m.child_ids);
  CHECK(back.names == m.names);
  REQUIRE(back.values.rows() == m.values.rows());
  REQUIRE(back.values.cols() == m.values.cols());
  CHECK((back.values - m.values).norm() == 0.0);
  CHECK(feature_matrix_to_csv(back) == csv);
}

TEST_CASE("feature matrix CSV rejects malformed input") {
  FeatureMatrix unsafe;
  unsafe.child_ids = {"a,b"};
  unsafe.names = {"token_count"};
  unsafe.values = Eigen::MatrixXd::Zero(1, 1);
  CHECK_THROWS_AS((void)feature_matrix_to_csv(unsafe), std::invalid_argument);

  CHECK_THROWS_WITH_AS((void)feature_matrix_from_csv("", "mem"),
                       doctest::Contains("empty"), std::runtime_error);
  CHECK_THROWS_WITH_AS((void)feature_matrix_from_csv("id,token_count\na,1\n", "mem"),
                       doctest::Contains("child_id"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      (void)feature_matrix_from_csv("child_id,token_count\na,1,2\n", "mem"),
      doctest::Contains("mem:2"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      (void)feature_matrix_from_csv("child_id,token_count\na,veel\n", "mem"),
      doctest::Contains("not a number"), std::runtime_error);
}
