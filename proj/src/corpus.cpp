#include "storyscore/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "storyscore/features.hpp"
#include "storyscore/util.hpp"

namespace storyscore {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Language l) {
  return l == Language::afrikaans ? "afrikaans" : "isixhosa";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    default: return "test";
  }
}

std::string to_string(TranscriptVariant v) {
  return v == TranscriptVariant::oracle ? "oracle" : "asr";
}

Language parse_language(std::string_view s) {
  if (s == "afrikaans") return Language::afrikaans;
  if (s == "isixhosa") return Language::isixhosa;
  throw std::invalid_argument("unknown language: '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split: '" + std::string(s) + "'");
}

TranscriptVariant parse_variant(std::string_view s) {
  if (s == "oracle") return TranscriptVariant::oracle;
  if (s == "asr") return TranscriptVariant::asr;
  throw std::invalid_argument("unknown transcript variant: '" + std::string(s) + "'");
}

std::string to_string(Task t) {
  switch (t) {
    case Task::ns: return "ns";
    case Task::cq: return "cq";
    case Task::sc: return "sc";
    default: return "ri";
  }
}

Task parse_task(std::string_view s) {
  if (s == "ns") return Task::ns;
  if (s == "cq") return Task::cq;
  if (s == "sc") return Task::sc;
  if (s == "ri") return Task::ri;
  throw std::invalid_argument("unknown task: '" + std::string(s) + "'");
}

bool intervention_from_sc(int sc) { return sc <= 2; }

void validate_scoreset(const ScoreSet& s, const std::string& context) {
  if (!(s.ns >= 0.0 && s.ns <= 16.0) || !std::isfinite(s.ns))
    throw std::runtime_error(context + ": ns out of range [0,16]: " + format_double(s.ns));
  if (!(s.cq >= 0.0 && s.cq <= 10.0) || !std::isfinite(s.cq))
    throw std::runtime_error(context + ": cq out of range [0,10]: " + format_double(s.cq));
  if (s.sc < 1 || s.sc > 6)
    throw std::runtime_error(context + ": sc out of range [1,6]: " + std::to_string(s.sc));
  if (s.ri != intervention_from_sc(s.sc))
    throw std::runtime_error(context + ": ri=" + (s.ri ? "true" : "false") +
                             " inconsistent with sc=" + std::to_string(s.sc) +
                             " (ri must hold exactly when sc <= 2)");
}

std::string oracle_transcript(const ChildRecord& rec) {
  if (rec.transcript_oracle) return *rec.transcript_oracle;
  std::string out;
  for (const auto& u : rec.utterances) {
    if (!out.empty()) out += ' ';
    out += u.text;
  }
  return out;
}

bool has_variant(const ChildRecord& rec, TranscriptVariant v) {
  if (v == TranscriptVariant::oracle) return rec.transcript_oracle || !rec.utterances.empty();
  return rec.transcript_asr.has_value();
}

std::string transcript_for(const ChildRecord& rec, TranscriptVariant v) {
  if (v == TranscriptVariant::oracle) return oracle_transcript(rec);
  if (!rec.transcript_asr)
    throw std::runtime_error("record " + rec.child_id + ": missing transcript variant 'asr'");
  return *rec.transcript_asr;
}

std::vector<const ChildRecord*> Corpus::split_records(Split s) const {
  std::vector<const ChildRecord*> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(&r);
  return out;
}

const ChildRecord* Corpus::find(std::string_view child_id) const {
  for (const auto& r : records)
    if (r.child_id == child_id) return &r;
  return nullptr;
}

std::vector<std::string> derive_vocabulary(const std::vector<ChildRecord>& records,
                                           TranscriptVariant v) {
  std::set<std::string> types;
  for (const auto& rec : records) {
    if (rec.split != Split::train) continue;
    for (auto& tok : tokenize(transcript_for(rec, v))) types.insert(std::move(tok));
  }
  return std::vector<std::string>(types.begin(), types.end());
}

void rebuild_vocabulary(Corpus& corpus, TranscriptVariant v) {
  corpus.vocabulary = derive_vocabulary(corpus.records, v);
  corpus.vocab_variant = v;
}

namespace {

double require_number(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw std::runtime_error(ctx + ": missing key '" + key + "'");
  if (!j[key].is_number()) throw std::runtime_error(ctx + ": '" + key + "' must be a number");
  return j[key].get<double>();
}

int require_integer(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw std::runtime_error(ctx + ": missing key '" + key + "'");
  const json& v = j[key];
  if (v.is_number_integer() || v.is_number_unsigned()) return v.get<int>();
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (d == std::floor(d) && std::abs(d) < 1e9) return static_cast<int>(d);
  }
  throw std::runtime_error(ctx + ": '" + key + "' must be an integer");
}

std::string require_string(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw std::runtime_error(ctx + ": missing key '" + key + "'");
  if (!j[key].is_string()) throw std::runtime_error(ctx + ": '" + key + "' must be a string");
  return j[key].get<std::string>();
}

ChildRecord parse_record(const json& j, const std::string& where) {
  if (!j.is_object()) throw std::runtime_error(where + ": record must be a JSON object");
  ChildRecord rec;
  rec.child_id = require_string(j, "child_id", where);
  std::string ctx = where + " (child " + rec.child_id + ")";
  try {
    rec.language = parse_language(require_string(j, "language", ctx));
    rec.split = parse_split(require_string(j, "split", ctx));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(ctx + ": " + e.what());
  }
  if (!j.contains("utterances") || !j["utterances"].is_array())
    throw std::runtime_error(ctx + ": missing or non-array 'utterances'");
  if (j["utterances"].empty())
    throw std::runtime_error(ctx + ": record has no utterances");
  double prev_end = 0.0;
  for (const auto& ju : j["utterances"]) {
    Utterance u;
    u.text = require_string(ju, "text", ctx);
    u.start_s = require_number(ju, "start_s", ctx);
    u.end_s = require_number(ju, "end_s", ctx);
    if (trim(u.text).empty()) throw std::runtime_error(ctx + ": utterance with empty text");
    if (!(u.start_s >= 0.0) || !std::isfinite(u.end_s))
      throw std::runtime_error(ctx + ": utterance start_s must be >= 0 and times finite");
    if (!(u.end_s > u.start_s))
      throw std::runtime_error(ctx + ": utterance end_s must exceed start_s");
    if (!rec.utterances.empty() && u.start_s < prev_end - 1e-9)
      throw std::runtime_error(ctx + ": utterances overlap or are out of time order");
    prev_end = u.end_s;
    rec.utterances.push_back(std::move(u));
  }
  if (j.contains("transcript_oracle"))
    rec.transcript_oracle = require_string(j, "transcript_oracle", ctx);
  if (j.contains("transcript_asr"))
    rec.transcript_asr = require_string(j, "transcript_asr", ctx);
  if (j.contains("truth")) {
    const json& jt = j["truth"];
    if (!jt.is_object()) throw std::runtime_error(ctx + ": 'truth' must be an object");
    ScoreSet s;
    s.ns = require_number(jt, "ns", ctx);
    s.cq = require_number(jt, "cq", ctx);
    s.sc = require_integer(jt, "sc", ctx);
    if (!jt.contains("ri") || !jt["ri"].is_boolean())
      throw std::runtime_error(ctx + ": 'ri' must be a boolean");
    s.ri = jt["ri"].get<bool>();
    validate_scoreset(s, ctx);
    rec.truth = s;
  }
  return rec;
}

ordered_json record_to_json(const ChildRecord& rec) {
  ordered_json j;
  j["child_id"] = rec.child_id;
  j["language"] = to_string(rec.language);
  j["split"] = to_string(rec.split);
  ordered_json utts = ordered_json::array();
  for (const auto& u : rec.utterances) {
    ordered_json ju;
    ju["text"] = u.text;
    ju["start_s"] = u.start_s;
    ju["end_s"] = u.end_s;
    utts.push_back(std::move(ju));
  }
  j["utterances"] = std::move(utts);
  if (rec.transcript_oracle) j["transcript_oracle"] = *rec.transcript_oracle;
  if (rec.transcript_asr) j["transcript_asr"] = *rec.transcript_asr;
  if (rec.truth) {
    ordered_json jt;
    jt["ns"] = rec.truth->ns;
    jt["cq"] = rec.truth->cq;
    jt["sc"] = rec.truth->sc;
    jt["ri"] = rec.truth->ri;
    j["truth"] = std::move(jt);
  }
  return j;
}

}  // namespace

Corpus parse_corpus_jsonl(std::string_view text, TranscriptVariant v,
                          const std::string& source_name, bool with_vocabulary) {
  Corpus corpus;
  std::unordered_set<std::string> seen_ids;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (trim(line).empty()) continue;
    std::string where = source_name + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(where + ": JSON parse error: " + e.what());
    }
    ChildRecord rec = parse_record(j, where);
    if (!seen_ids.insert(rec.child_id).second)
      throw std::runtime_error(where + ": duplicate child_id '" + rec.child_id + "'");
    if (!has_variant(rec, v))
      throw std::runtime_error(where + " (child " + rec.child_id +
                               "): missing transcript variant '" + to_string(v) + "'");
    corpus.records.push_back(std::move(rec));
  }
  if (corpus.records.empty()) throw std::runtime_error(source_name + ": corpus has no records");
  corpus.language = corpus.records.front().language;
  for (const auto& rec : corpus.records)
    if (rec.language != corpus.language)
      throw std::runtime_error("record " + rec.child_id + ": language " +
                               to_string(rec.language) + " differs from corpus language " +
                               to_string(corpus.language));
  corpus.vocab_variant = v;
  if (with_vocabulary) corpus.vocabulary = derive_vocabulary(corpus.records, v);
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, TranscriptVariant v,
                   bool with_vocabulary) {
  return parse_corpus_jsonl(read_file(path), v, path.string(), with_vocabulary);
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& rec : corpus.records) {
    out += record_to_json(rec).dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, corpus_to_jsonl(corpus));
}

double measure_cer(std::string_view reference, std::string_view hypothesis) {
  std::vector<std::string_view> ref = utf8_char_views(reference);
  std::vector<std::string_view> hyp = utf8_char_views(hypothesis);
  if (ref.empty()) throw std::invalid_argument("measure_cer: empty reference");
  size_t n = ref.size(), m = hyp.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  for (size_t jj = 0; jj <= m; ++jj) prev[jj] = jj;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t jj = 1; jj <= m; ++jj) {
      size_t sub = prev[jj - 1] + (ref[i - 1] == hyp[jj - 1] ? 0 : 1);
      cur[jj] = std::min({prev[jj] + 1, cur[jj - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(n);
}

std::string corrupt_transcript(std::string_view text, double target_cer, uint64_t seed) {
  if (!(target_cer > 0.0 && target_cer < 1.0))
    throw std::invalid_argument("corrupt_transcript: target_cer must be in (0,1)");
  std::vector<std::string_view> chars = utf8_char_views(text);
  if (chars.empty()) throw std::invalid_argument("corrupt_transcript: empty text");
  // Sorted unique characters; a byte-presence scan gives the same order as a
  // lexicographic sort when every character is a single byte.
  std::vector<std::string_view> inventory;
  bool multibyte = false;
  for (std::string_view c : chars)
    if (c.size() != 1) {
      multibyte = true;
      break;
    }
  if (!multibyte) {
    const char* first_at[256] = {};
    for (std::string_view c : chars) {
      unsigned char b = static_cast<unsigned char>(c[0]);
      if (!first_at[b]) first_at[b] = c.data();
    }
    for (int b = 0; b < 256; ++b)
      if (first_at[b]) inventory.emplace_back(first_at[b], 1);
  } else {
    inventory = chars;
    std::sort(inventory.begin(), inventory.end());
    inventory.erase(std::unique(inventory.begin(), inventory.end()), inventory.end());
  }
  std::mt19937_64 rng(seed);
  std::string out;
  out.reserve(text.size());
  for (std::string_view c : chars) {
    if (u01(rng) >= target_cer) {
      out += c;
      continue;
    }
    int op = uniform_int(rng, 0, 2);
    if (op == 0) {
      if (inventory.size() < 2) {
        out += c;
        continue;
      }
      size_t self = static_cast<size_t>(
          std::lower_bound(inventory.begin(), inventory.end(), c) - inventory.begin());
      size_t j = static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(inventory.size()) - 2));
      if (j >= self) ++j;
      out += inventory[j];
    } else if (op == 1) {
      out += inventory[static_cast<size_t>(
          uniform_int(rng, 0, static_cast<int>(inventory.size()) - 1))];
      out += c;
    }
    // op == 2 deletes the character
  }
  return out;
}

void corrupt_corpus(Corpus& corpus, double target_cer, uint64_t seed) {
  for (auto& rec : corpus.records) {
    uint64_t rec_seed = derive_seed(seed, rec.child_id);
    rec.transcript_asr = corrupt_transcript(oracle_transcript(rec), target_cer, rec_seed);
  }
}

namespace {

std::string make_word(std::mt19937_64& rng) {
  static const std::string cons = "bdfghjklmnpqrstvwyz";
  static const std::string vows = "aeiou";
  int syllables = uniform_int(rng, 2, 4);
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += cons[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(cons.size()) - 1))];
    w += vows[static_cast<size_t>(uniform_int(rng, 0, 4))];
  }
  return w;
}

PlantedModel default_planted(const std::vector<std::string>& active_words, double intercept,
                             double range_hi, const std::vector<double>& magnitudes, int cmax) {
  PlantedModel m;
  m.intercept = intercept;
  std::vector<double> w(active_words.size());
  for (size_t i = 0; i < w.size(); ++i) {
    double mag = magnitudes[i % magnitudes.size()];
    w[i] = (i % 2 == 0) ? mag : -mag;
  }
  double pos = 0.0, neg = 0.0;
  for (double x : w) (x > 0 ? pos : neg) += std::abs(x) * cmax;
  const double margin = 0.5;
  double scale = 1.0;
  if (pos > range_hi - intercept - margin) scale = std::min(scale, (range_hi - intercept - margin) / pos);
  if (neg > intercept - margin) scale = std::min(scale, (intercept - margin) / neg);
  for (size_t i = 0; i < w.size(); ++i) m.terms.emplace_back(active_words[i], w[i] * scale);
  return m;
}

double planted_value(const PlantedModel& m, const std::unordered_map<std::string, int>& counts) {
  double v = m.intercept;
  for (const auto& [word, weight] : m.terms) {
    auto it = counts.find(word);
    if (it != counts.end()) v += weight * it->second;
  }
  return v;
}

std::string pad3(int n) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", n);
  return buf;
}

}  // namespace

SynthResult synthesize_corpus(const SynthSpec& spec, uint64_t seed) {
  if (spec.train < 0 || spec.dev < 0 || spec.test < 0 ||
      spec.train + spec.dev + spec.test < 1)
    throw std::invalid_argument("synthesize_corpus: need at least one record");
  if (spec.vocab_size < 1) throw std::invalid_argument("synthesize_corpus: zero vocabulary");
  if (spec.active_count_max < 1 || spec.mean_utterances < 1.0 ||
      spec.mean_filler_tokens < 1.0 || spec.noise_sigma < 0.0)
    throw std::invalid_argument("synthesize_corpus: infeasible spec");

  std::mt19937_64 rng(derive_seed(seed, "synth"));

  // Active words come from the planted models when the caller supplies them,
  // otherwise they are the first generated words.
  std::vector<std::string> actives;
  if (spec.planted_ns || spec.planted_cq) {
    std::set<std::string> uniq;
    for (const auto* pm : {&spec.planted_ns, &spec.planted_cq}) {
      if (!*pm) continue;
      for (const auto& [word, weight] : (**pm).terms) {
        (void)weight;
        if (tokenize(word) != std::vector<std::string>{word})
          throw std::invalid_argument("synthesize_corpus: planted word '" + word +
                                      "' is not a single clean token");
        if (uniq.insert(word).second) actives.push_back(word);
      }
    }
  }

  std::set<std::string> vocab_set(actives.begin(), actives.end());
  std::vector<std::string> vocab = actives;
  if (!spec.planted_ns && !spec.planted_cq) {
    if (spec.active_features < 1 || spec.active_features >= spec.vocab_size)
      throw std::invalid_argument("synthesize_corpus: active_features must be in [1, vocab_size)");
    while (static_cast<int>(vocab.size()) < spec.active_features) {
      std::string w = make_word(rng);
      if (vocab_set.insert(w).second) vocab.push_back(w);
    }
    actives = vocab;
  }
  if (static_cast<int>(actives.size()) >= spec.vocab_size)
    throw std::invalid_argument("synthesize_corpus: vocab_size leaves no filler words");
  while (static_cast<int>(vocab.size()) < spec.vocab_size) {
    std::string w = make_word(rng);
    if (vocab_set.insert(w).second) vocab.push_back(w);
  }
  std::vector<std::string> fillers(vocab.begin() + static_cast<long>(actives.size()), vocab.end());

  PlantedModel ns_model = spec.planted_ns
                              ? *spec.planted_ns
                              : default_planted(actives, 8.0, 16.0,
                                                {0.55, 0.8, 0.35, 0.6, 0.45},
                                                spec.active_count_max);
  PlantedModel cq_model = spec.planted_cq
                              ? *spec.planted_cq
                              : default_planted(actives, 5.0, 10.0,
                                                {0.3, 0.35, 0.25, 0.3, 0.2},
                                                spec.active_count_max);

  Corpus corpus;
  corpus.language = spec.language;
  std::string lang3 = spec.language == Language::afrikaans ? "afr" : "xho";
  int mu = std::max(1, static_cast<int>(std::llround(spec.mean_utterances)));

  const std::pair<Split, int> plan[] = {
      {Split::train, spec.train}, {Split::dev, spec.dev}, {Split::test, spec.test}};
  for (const auto& [split, count] : plan) {
    for (int i = 0; i < count; ++i) {
      ChildRecord rec;
      rec.child_id = lang3 + "-" + to_string(split) + "-" + pad3(i);
      rec.language = spec.language;
      rec.split = split;

      std::vector<std::string> tokens;
      for (const std::string& w : actives) {
        int c = uniform_int(rng, 0, spec.active_count_max);
        for (int k = 0; k < c; ++k) tokens.push_back(w);
      }
      double verbosity = uniform_real(rng, 0.6, 1.4);
      int u = uniform_int(rng, std::max(1, mu - 3), mu + 3);
      long nf = std::max<long>(u, std::llround(verbosity * spec.mean_filler_tokens));
      for (long k = 0; k < nf; ++k)
        tokens.push_back(fillers[static_cast<size_t>(
            uniform_int(rng, 0, static_cast<int>(fillers.size()) - 1))]);
      if (split == Split::train && spec.train > 0) {
        // Every vocabulary word is attested in the train split: train record
        // i carries word j whenever j == i (mod train size).
        for (size_t j = static_cast<size_t>(i); j < vocab.size();
             j += static_cast<size_t>(spec.train))
          tokens.push_back(vocab[j]);
      }
      shuffle_portable(tokens, rng);

      std::unordered_map<std::string, int> counts;
      for (const std::string& t : tokens) ++counts[t];

      double t0 = 0.0;
      size_t base = tokens.size() / static_cast<size_t>(u);
      size_t rem = tokens.size() % static_cast<size_t>(u);
      size_t at = 0;
      auto round3 = [](double x) { return std::llround(x * 1000.0) / 1000.0; };
      for (int k = 0; k < u; ++k) {
        size_t len = base + (static_cast<size_t>(k) < rem ? 1 : 0);
        std::string text;
        for (size_t t = 0; t < len; ++t) {
          if (!text.empty()) text += ' ';
          text += tokens[at++];
        }
        double dur = 0.35 * static_cast<double>(len) + uniform_real(rng, 0.3, 0.9);
        Utterance utt;
        utt.text = std::move(text);
        utt.start_s = round3(t0);
        utt.end_s = round3(t0 + dur);
        rec.utterances.push_back(std::move(utt));
        t0 += dur + uniform_real(rng, 0.2, 1.0);
      }

      std::string transcript;
      for (const auto& utt : rec.utterances) {
        if (!transcript.empty()) transcript += ' ';
        transcript += utt.text;
      }
      rec.transcript_oracle = std::move(transcript);

      double zn = normal(rng, 0.0, 1.0);
      double zc = normal(rng, 0.0, 1.0);
      ScoreSet truth;
      truth.ns = std::clamp(planted_value(ns_model, counts) + spec.noise_sigma * zn, 0.0, 16.0);
      truth.cq = std::clamp(planted_value(cq_model, counts) + spec.noise_sigma * zc, 0.0, 10.0);
      truth.sc = std::clamp(1 + static_cast<int>(std::floor(truth.ns * 6.0 / 16.0)), 1, 6);
      truth.ri = intervention_from_sc(truth.sc);
      validate_scoreset(truth, "synthesized record " + rec.child_id);
      rec.truth = truth;

      corpus.records.push_back(std::move(rec));
    }
  }

  corpus.vocab_variant = TranscriptVariant::oracle;
  corpus.vocabulary = derive_vocabulary(corpus.records, TranscriptVariant::oracle);
  return SynthResult{std::move(corpus), std::move(ns_model), std::move(cq_model)};
}

}  // namespace storyscore
