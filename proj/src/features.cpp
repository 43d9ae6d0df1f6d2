#include "storyscore/features.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "storyscore/util.hpp"

namespace storyscore {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (c >= 0x80) {
      cur += ch;
    } else if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    }
    // remaining ASCII is punctuation and is dropped
  }
  flush();
  return out;
}

namespace {

bool is_vowel_codepoint(unsigned int cp) {
  switch (cp) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
    case 'A': case 'E': case 'I': case 'O': case 'U':
      return true;
    default:
      break;
  }
  // Latin-1 diacritic vowels, both cases
  return (cp >= 0xc0 && cp <= 0xc5) || (cp >= 0xe0 && cp <= 0xe5) ||  // a
         (cp >= 0xc8 && cp <= 0xcb) || (cp >= 0xe8 && cp <= 0xeb) ||  // e
         (cp >= 0xcc && cp <= 0xcf) || (cp >= 0xec && cp <= 0xef) ||  // i
         (cp >= 0xd2 && cp <= 0xd6) || (cp >= 0xf2 && cp <= 0xf6) ||  // o
         (cp >= 0xd9 && cp <= 0xdc) || (cp >= 0xf9 && cp <= 0xfc);    // u
}

}  // namespace

int count_syllables(std::string_view word) {
  if (word.empty()) throw std::invalid_argument("count_syllables: empty word");
  int runs = 0;
  bool in_run = false;
  size_t i = 0;
  while (i < word.size()) {
    unsigned char lead = static_cast<unsigned char>(word[i]);
    unsigned int cp = lead;
    size_t len = 1;
    if ((lead & 0xe0) == 0xc0) len = 2;
    else if ((lead & 0xf0) == 0xe0) len = 3;
    else if ((lead & 0xf8) == 0xf0) len = 4;
    if (i + len > word.size()) len = 1;
    if (len == 2 && lead == 0xc3)
      cp = 0xc0 + (static_cast<unsigned char>(word[i + 1]) & 0x3f);
    bool vowel = is_vowel_codepoint(cp);
    if (vowel && !in_run) ++runs;
    in_run = vowel;
    i += len;
  }
  return std::max(1, runs);
}

double flesch_from_counts(size_t sentences, size_t words, size_t syllables) {
  if (sentences == 0 || words == 0)
    throw std::invalid_argument("flesch_reading_ease: zero sentences or zero words");
  double s = static_cast<double>(sentences);
  double w = static_cast<double>(words);
  double y = static_cast<double>(syllables);
  return 206.835 - 1.015 * (w / s) - 84.6 * (y / w);
}

double flesch_reading_ease(const std::vector<std::vector<std::string>>& tokens_per_sentence) {
  size_t words = 0, syllables = 0;
  for (const auto& sent : tokens_per_sentence) {
    words += sent.size();
    for (const auto& tok : sent) syllables += static_cast<size_t>(count_syllables(tok));
  }
  return flesch_from_counts(tokens_per_sentence.size(), words, syllables);
}

const std::vector<std::string>& fixed_feature_names() {
  static const std::vector<std::string> names = {
      "duration_total_s",     "utterance_len_mean_s", "utterance_len_std_s",
      "token_count",          "type_count",           "flesch_reading_ease"};
  return names;
}

std::vector<std::string> FeatureSchema::feature_names() const {
  std::vector<std::string> names = fixed_feature_names();
  names.reserve(size());
  for (const auto& w : vocabulary) names.push_back("word:" + w);
  return names;
}

namespace {

std::unordered_map<std::string_view, size_t> vocab_index(const FeatureSchema& schema) {
  std::unordered_map<std::string_view, size_t> idx;
  idx.reserve(schema.vocabulary.size());
  for (size_t i = 0; i < schema.vocabulary.size(); ++i) idx.emplace(schema.vocabulary[i], i);
  return idx;
}

Eigen::VectorXd features_row(const ChildRecord& rec, const FeatureSchema& schema,
                             const std::unordered_map<std::string_view, size_t>& idx,
                             TranscriptVariant v) {
  if (rec.utterances.empty())
    throw std::runtime_error("record " + rec.child_id + ": has no utterances");
  size_t nfixed = fixed_feature_names().size();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<long>(schema.size()));

  double total = 0.0;
  for (const auto& u : rec.utterances) total += u.end_s - u.start_s;
  double mean = total / static_cast<double>(rec.utterances.size());
  double var = 0.0;
  for (const auto& u : rec.utterances) {
    double d = (u.end_s - u.start_s) - mean;
    var += d * d;
  }
  var /= static_cast<double>(rec.utterances.size());

  std::vector<std::string> tokens = tokenize(transcript_for(rec, v));
  std::unordered_set<std::string_view> types(tokens.begin(), tokens.end());
  size_t syllables = 0;
  for (const auto& t : tokens) syllables += static_cast<size_t>(count_syllables(t));
  double flesch =
      tokens.empty() ? 0.0
                     : flesch_from_counts(rec.utterances.size(), tokens.size(), syllables);

  x[0] = total;
  x[1] = mean;
  x[2] = std::sqrt(std::max(0.0, var));
  x[3] = static_cast<double>(tokens.size());
  x[4] = static_cast<double>(types.size());
  x[5] = flesch;
  for (const auto& t : tokens) {
    auto it = idx.find(t);
    if (it != idx.end()) x[static_cast<long>(nfixed + it->second)] += 1.0;
  }
  return x;
}

}  // namespace

FeatureVector extract_features(const ChildRecord& rec, const FeatureSchema& schema,
                               TranscriptVariant v) {
  auto idx = vocab_index(schema);
  FeatureVector fv;
  fv.names = schema.feature_names();
  fv.values = features_row(rec, schema, idx, v);
  return fv;
}

FeatureMatrix build_feature_matrix(const std::vector<const ChildRecord*>& records,
                                   const FeatureSchema& schema, TranscriptVariant v) {
  auto idx = vocab_index(schema);
  FeatureMatrix m;
  m.names = schema.feature_names();
  m.values.resize(static_cast<long>(records.size()), static_cast<long>(schema.size()));
  m.child_ids.reserve(records.size());
  for (size_t r = 0; r < records.size(); ++r) {
    m.child_ids.push_back(records[r]->child_id);
    m.values.row(static_cast<long>(r)) = features_row(*records[r], schema, idx, v);
  }
  return m;
}

FeatureMatrix build_feature_matrix(const Corpus& corpus, const FeatureSchema& schema,
                                   TranscriptVariant v) {
  std::vector<const ChildRecord*> recs;
  recs.reserve(corpus.records.size());
  for (const auto& r : corpus.records) recs.push_back(&r);
  return build_feature_matrix(recs, schema, v);
}

std::string feature_matrix_to_csv(const FeatureMatrix& m) {
  auto check_field = [](const std::string& f) {
    if (f.find_first_of(",\"\n\r") != std::string::npos)
      throw std::invalid_argument("feature_matrix_to_csv: field not CSV-safe: '" + f + "'");
  };
  std::string out = "child_id";
  for (const auto& n : m.names) {
    check_field(n);
    out += ',';
    out += n;
  }
  out += '\n';
  for (size_t r = 0; r < m.child_ids.size(); ++r) {
    check_field(m.child_ids[r]);
    out += m.child_ids[r];
    for (long c = 0; c < m.values.cols(); ++c) {
      out += ',';
      out += format_double(m.values(static_cast<long>(r), c));
    }
    out += '\n';
  }
  return out;
}

FeatureMatrix feature_matrix_from_csv(std::string_view text, const std::string& source_name) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  size_t line_no = 1;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error(source_name + ":" + std::to_string(line_no) + ": " + msg);
  };
  for (size_t i = 0; i <= text.size(); ++i) {
    char c = i < text.size() ? text[i] : '\n';
    if (c == ',') {
      row.push_back(cell);
      cell.clear();
    } else if (c == '\n') {
      if (!cell.empty() || !row.empty()) {
        row.push_back(cell);
        cell.clear();
        rows.push_back(std::move(row));
        row.clear();
      }
      ++line_no;
    } else if (c != '\r') {
      cell += c;
    }
  }
  line_no = 1;
  if (rows.empty()) fail("empty feature matrix file");
  const auto& header = rows.front();
  if (header.size() < 2 || header[0] != "child_id") fail("header must start with child_id");
  FeatureMatrix m;
  m.names.assign(header.begin() + 1, header.end());
  m.values.resize(static_cast<long>(rows.size()) - 1, static_cast<long>(m.names.size()));
  for (size_t r = 1; r < rows.size(); ++r) {
    line_no = r + 1;
    if (rows[r].size() != header.size()) fail("row width differs from header");
    m.child_ids.push_back(rows[r][0]);
    for (size_t c = 1; c < rows[r].size(); ++c) {
      const std::string& s = rows[r][c];
      double v = 0.0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        fail("cell is not a number: '" + s + "'");
      m.values(static_cast<long>(r) - 1, static_cast<long>(c) - 1) = v;
    }
  }
  return m;
}

}  // namespace storyscore
