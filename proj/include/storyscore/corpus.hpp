#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace storyscore {

enum class Language { afrikaans, isixhosa };
enum class Split { train, dev, test };
enum class TranscriptVariant { oracle, asr };
enum class Task { ns, cq, sc, ri };

std::string to_string(Language l);
std::string to_string(Split s);
std::string to_string(TranscriptVariant v);
std::string to_string(Task t);
Language parse_language(std::string_view s);
Split parse_split(std::string_view s);
TranscriptVariant parse_variant(std::string_view s);
Task parse_task(std::string_view s);

struct Utterance {
  std::string text;
  double start_s = 0.0;
  double end_s = 0.0;
  friend bool operator==(const Utterance&, const Utterance&) = default;
};

// One narrative assessment: narrative structure (0..16), comprehension
// quality (0..10), severity category (1..6, lower is more severe) and the
// intervention flag, which is true exactly when sc <= 2.
struct ScoreSet {
  double ns = 0.0;
  double cq = 0.0;
  int sc = 1;
  bool ri = true;
  friend bool operator==(const ScoreSet&, const ScoreSet&) = default;
};

bool intervention_from_sc(int sc);
void validate_scoreset(const ScoreSet& s, const std::string& context);

struct ChildRecord {
  std::string child_id;
  Language language = Language::afrikaans;
  Split split = Split::train;
  std::vector<Utterance> utterances;
  std::optional<std::string> transcript_oracle;
  std::optional<std::string> transcript_asr;
  std::optional<ScoreSet> truth;
  friend bool operator==(const ChildRecord&, const ChildRecord&) = default;
};

// The oracle transcript falls back to the concatenated utterance texts when
// no explicit transcript_oracle is stored.
std::string oracle_transcript(const ChildRecord& rec);
bool has_variant(const ChildRecord& rec, TranscriptVariant v);
std::string transcript_for(const ChildRecord& rec, TranscriptVariant v);

struct Corpus {
  std::vector<ChildRecord> records;
  Language language = Language::afrikaans;
  // Sorted distinct token types over train-split transcripts of
  // vocab_variant. Never derived from dev or test records.
  std::vector<std::string> vocabulary;
  TranscriptVariant vocab_variant = TranscriptVariant::oracle;
  friend bool operator==(const Corpus&, const Corpus&) = default;

  std::vector<const ChildRecord*> split_records(Split s) const;
  const ChildRecord* find(std::string_view child_id) const;
};

std::vector<std::string> derive_vocabulary(const std::vector<ChildRecord>& records,
                                           TranscriptVariant v);
void rebuild_vocabulary(Corpus& corpus, TranscriptVariant v);

// JSONL, one record per line. Loading validates every record and throws with
// the line number and child_id on the first problem found. Callers that never
// touch features can pass with_vocabulary=false to skip tokenizing the
// training split; the vocabulary comes back empty.
Corpus load_corpus(const std::filesystem::path& path, TranscriptVariant v,
                   bool with_vocabulary = true);
Corpus parse_corpus_jsonl(std::string_view text, TranscriptVariant v,
                          const std::string& source_name, bool with_vocabulary = true);
std::string corpus_to_jsonl(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Character error rate of hypothesis against reference: Levenshtein distance
// over UTF-8 characters with unit costs, divided by reference length.
double measure_cer(std::string_view reference, std::string_view hypothesis);

// Simulate transcription noise. Each character independently suffers an edit
// with probability target_cer; the edit is a substitution, an insertion or a
// deletion with equal probability, replacement characters drawn from the
// input's own character inventory.
std::string corrupt_transcript(std::string_view text, double target_cer, uint64_t seed);

// Fill transcript_asr for every record by corrupting its oracle transcript.
// Per-record seeds are derived from the child_id so record order does not
// matter. Does not touch the vocabulary; call rebuild_vocabulary if features
// for the ASR variant are wanted.
void corrupt_corpus(Corpus& corpus, double target_cer, uint64_t seed);

// Linear ground-truth model planted by the synthesizer: score =
// intercept + sum(weight * count of word in the transcript), before noise
// and clamping.
struct PlantedModel {
  double intercept = 0.0;
  std::vector<std::pair<std::string, double>> terms;
};

struct SynthSpec {
  int train = 200;
  int dev = 38;
  int test = 28;
  int vocab_size = 50;
  int active_features = 3;
  int active_count_max = 8;
  double mean_utterances = 8.0;
  double mean_filler_tokens = 28.0;
  double noise_sigma = 0.1;
  Language language = Language::afrikaans;
  std::optional<PlantedModel> planted_ns;
  std::optional<PlantedModel> planted_cq;
};

struct SynthResult {
  Corpus corpus;
  PlantedModel planted_ns;
  PlantedModel planted_cq;
};

// Generate a corpus of pseudo-word narratives whose NS and CQ scores follow
// the planted linear models exactly (plus Gaussian noise), with SC binned
// from NS and RI derived from SC. Deterministic in (spec, seed).
SynthResult synthesize_corpus(const SynthSpec& spec, uint64_t seed);

}  // namespace storyscore
