#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "storyscore/corpus.hpp"

namespace storyscore {

// Lowercased tokens, punctuation stripped, split on whitespace. Bytes outside
// ASCII pass through unchanged so UTF-8 words keep their diacritics.
std::vector<std::string> tokenize(std::string_view text);

// Number of maximal contiguous vowel-group runs (a, e, i, o, u and their
// Latin-1 diacritic variants), minimum 1.
int count_syllables(std::string_view word);

// 206.835 - 1.015*(words/sentences) - 84.6*(syllables/words), each utterance
// counting as one sentence.
double flesch_reading_ease(const std::vector<std::vector<std::string>>& tokens_per_sentence);
double flesch_from_counts(size_t sentences, size_t words, size_t syllables);

const std::vector<std::string>& fixed_feature_names();

// Fixed feature block followed by one count feature per vocabulary word, in
// vocabulary order.
struct FeatureSchema {
  std::vector<std::string> vocabulary;
  size_t size() const { return fixed_feature_names().size() + vocabulary.size(); }
  std::vector<std::string> feature_names() const;
};

struct FeatureVector {
  std::vector<std::string> names;
  Eigen::VectorXd values;
};

struct FeatureMatrix {
  std::vector<std::string> child_ids;
  std::vector<std::string> names;
  Eigen::MatrixXd values;
};

FeatureVector extract_features(const ChildRecord& rec, const FeatureSchema& schema,
                               TranscriptVariant v);
FeatureMatrix build_feature_matrix(const std::vector<const ChildRecord*>& records,
                                   const FeatureSchema& schema, TranscriptVariant v);
FeatureMatrix build_feature_matrix(const Corpus& corpus, const FeatureSchema& schema,
                                   TranscriptVariant v);

std::string feature_matrix_to_csv(const FeatureMatrix& m);
FeatureMatrix feature_matrix_from_csv(std::string_view text, const std::string& source_name);

}  // namespace storyscore
