#include <cstdint>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "storyscore/features.hpp"
#include "storyscore/harness.hpp"
#include "storyscore/linear_models.hpp"
#include "storyscore/llm_scoring.hpp"
#include "storyscore/metrics.hpp"
#include "storyscore/util.hpp"

namespace ss = storyscore;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Rebuilds the feature schema a model was trained with from its stored
// feature names, so prediction does not depend on the query corpus having the
// same vocabulary.
ss::FeatureSchema schema_from_names(const std::vector<std::string>& names) {
  const auto& fixed = ss::fixed_feature_names();
  if (names.size() < fixed.size())
    throw std::runtime_error("model has fewer feature names than the fixed block");
  for (size_t i = 0; i < fixed.size(); ++i)
    if (names[i] != fixed[i])
      throw std::runtime_error("model feature names do not start with the fixed block ('" +
                               names[i] + "' where '" + fixed[i] + "' was expected)");
  ss::FeatureSchema schema;
  for (size_t i = fixed.size(); i < names.size(); ++i) {
    if (names[i].rfind("word:", 0) != 0)
      throw std::runtime_error("unexpected model feature name '" + names[i] + "'");
    schema.vocabulary.push_back(names[i].substr(5));
  }
  return schema;
}

std::vector<const ss::ChildRecord*> records_for_split(const ss::Corpus& corpus,
                                                      const std::string& split) {
  if (split == "all") {
    std::vector<const ss::ChildRecord*> out;
    for (const auto& rec : corpus.records) out.push_back(&rec);
    return out;
  }
  return corpus.split_records(ss::parse_split(split));
}

void add_backend_options(CLI::App* cmd, ss::BackendConfig& backend) {
  cmd->add_option("--backend", backend.llm, "scoring backend: mock|http")
      ->check(CLI::IsMember({"mock", "mock_knn", "http"}));
  cmd->add_option("--translate", backend.translator, "translator: identity|http")
      ->check(CLI::IsMember({"identity", "http"}));
  cmd->add_option("--cache", backend.cache_dir, "response cache directory");
  cmd->add_option("--llm-url", backend.llm_endpoint.base_url, "llm endpoint base url");
  cmd->add_option("--llm-model", backend.llm_endpoint.model, "llm model name");
  cmd->add_option("--llm-credential-env", backend.llm_endpoint.credential_env,
                  "environment variable holding the llm bearer token");
  cmd->add_option("--llm-timeout", backend.llm_endpoint.timeout_s, "llm timeout seconds");
  cmd->add_option("--translate-url", backend.translate_endpoint.base_url,
                  "translator endpoint base url");
  cmd->add_option("--translate-credential-env", backend.translate_endpoint.credential_env,
                  "environment variable holding the translator bearer token");
  cmd->add_option("--translate-timeout", backend.translate_endpoint.timeout_s,
                  "translator timeout seconds");
  cmd->add_option("--max-retries", backend.max_retries, "extra attempts per request");
  cmd->add_option("--temperature", backend.temperature, "sampling temperature");
  cmd->add_option("--max-prompt-chars", backend.max_prompt_chars,
                  "prompt budget in bytes, 0 = unlimited");
}

struct ValidateArgs {
  std::string path;
  std::string variant = "oracle";
};

void run_validate(const ValidateArgs& a) {
  ss::Corpus corpus = ss::load_corpus(a.path, ss::parse_variant(a.variant));
  size_t train = corpus.split_records(ss::Split::train).size();
  size_t dev = corpus.split_records(ss::Split::dev).size();
  size_t test = corpus.split_records(ss::Split::test).size();
  std::cout << "valid: " << corpus.records.size() << " records (" << train << " train, "
            << dev << " dev, " << test << " test), language "
            << ss::to_string(corpus.language) << ", " << corpus.vocabulary.size()
            << " vocabulary types over " << a.variant << " transcripts\n";
}

struct SynthArgs {
  ss::SynthSpec spec;
  std::string language = "afrikaans";
  std::uint64_t seed = 1;
  std::string out;
  std::string planted_out;
};

void run_synth(const SynthArgs& a) {
  ss::SynthSpec spec = a.spec;
  spec.language = ss::parse_language(a.language);
  ss::SynthResult result = ss::synthesize_corpus(spec, a.seed);
  ss::save_corpus(result.corpus, a.out);
  if (!a.planted_out.empty()) {
    auto planted_json = [](const ss::PlantedModel& m) {
      ordered_json j;
      j["intercept"] = m.intercept;
      ordered_json terms = ordered_json::array();
      for (const auto& [word, weight] : m.terms)
        terms.push_back(ordered_json{{"word", word}, {"weight", weight}});
      j["terms"] = std::move(terms);
      return j;
    };
    ordered_json j;
    j["ns"] = planted_json(result.planted_ns);
    j["cq"] = planted_json(result.planted_cq);
    ss::write_file_atomic(a.planted_out, j.dump(2) + "\n");
  }
  std::cout << "wrote " << result.corpus.records.size() << " records to " << a.out << "\n";
}

struct CorruptArgs {
  double cer = 0.28;
  std::uint64_t seed = 1;
  std::string in;
  std::string out;
};

void run_corrupt(const CorruptArgs& a) {
  ss::Corpus corpus = ss::load_corpus(a.in, ss::TranscriptVariant::oracle);
  ss::corrupt_corpus(corpus, a.cer, a.seed);
  ss::save_corpus(corpus, a.out);
  double total = 0.0;
  for (const auto& rec : corpus.records)
    total += ss::measure_cer(ss::oracle_transcript(rec), *rec.transcript_asr);
  std::cout << "wrote " << corpus.records.size() << " records to " << a.out
            << ", mean measured cer " << ss::format_double(total / corpus.records.size())
            << "\n";
}

struct FeaturizeArgs {
  std::string corpus;
  std::string variant = "oracle";
  std::string out;
};

void run_featurize(const FeaturizeArgs& a) {
  ss::TranscriptVariant v = ss::parse_variant(a.variant);
  ss::Corpus corpus = ss::load_corpus(a.corpus, v);
  ss::FeatureSchema schema{corpus.vocabulary};
  ss::FeatureMatrix m = ss::build_feature_matrix(corpus, schema, v);
  ss::write_file_atomic(a.out, ss::feature_matrix_to_csv(m));
  std::cout << "wrote " << m.child_ids.size() << " x " << m.names.size()
            << " feature matrix to " << a.out << "\n";
}

double best_grid_score(const std::vector<std::pair<double, double>>& grid_scores,
                       double best_alpha) {
  for (const auto& [alpha, score] : grid_scores)
    if (alpha == best_alpha) return score;
  return 0.0;
}

struct TrainArgs {
  std::string task;
  std::string corpus;
  std::string variant = "oracle";
  std::string out;
  int grid_size = 50;
  double min_ratio = 1e-4;
  double alpha = -1.0;  // negative means tune on dev
};

void run_train(const TrainArgs& a) {
  ss::Task task = ss::parse_task(a.task);
  ss::TranscriptVariant v = ss::parse_variant(a.variant);
  std::string bytes = ss::read_file(a.corpus);
  std::string fingerprint = ss::digest_hex(bytes);
  ss::Corpus corpus = ss::parse_corpus_jsonl(bytes, v, a.corpus);
  auto train = corpus.split_records(ss::Split::train);
  auto dev = corpus.split_records(ss::Split::dev);
  if (train.empty()) throw std::runtime_error("corpus has no train records");
  for (const auto* rec : train)
    if (!rec->truth) throw std::runtime_error("train record '" + rec->child_id + "' has no truth");

  ss::FeatureSchema schema{corpus.vocabulary};
  ss::FeatureMatrix Xtr = ss::build_feature_matrix(train, schema, v);
  bool regression = task == ss::Task::ns || task == ss::Task::cq;

  auto value_of = [&](const ss::ScoreSet& s) { return task == ss::Task::ns ? s.ns : s.cq; };
  auto label_of = [&](const ss::ScoreSet& s) {
    return task == ss::Task::sc ? s.sc : (s.ri ? 1 : 0);
  };

  Eigen::VectorXd ytr(static_cast<long>(train.size()));
  std::vector<int> ltr(train.size());
  for (size_t i = 0; i < train.size(); ++i) {
    if (regression)
      ytr[static_cast<long>(i)] = value_of(*train[i]->truth);
    else
      ltr[i] = label_of(*train[i]->truth);
  }

  ss::AnyModel model{ss::LassoModel{}};
  double chosen_alpha = 0.0;
  std::string note;
  if (a.alpha >= 0.0) {
    if (regression) {
      ss::LassoModel m = ss::fit_lasso(Xtr.values, ytr, a.alpha, Xtr.names, task);
      chosen_alpha = m.alpha;
      model = std::move(m);
    } else {
      ss::LogisticModel m = ss::fit_logistic_l1(Xtr.values, ltr, a.alpha,
                                                ss::target_classes(task), Xtr.names, task);
      chosen_alpha = m.alpha;
      model = std::move(m);
    }
    note = "fixed alpha";
  } else {
    if (dev.empty()) throw std::runtime_error("tuning needs dev records (or pass --alpha)");
    for (const auto* rec : dev)
      if (!rec->truth) throw std::runtime_error("dev record '" + rec->child_id + "' has no truth");
    ss::FeatureMatrix Xdev = ss::build_feature_matrix(dev, schema, v);
    if (regression) {
      Eigen::VectorXd ydev(static_cast<long>(dev.size()));
      for (size_t i = 0; i < dev.size(); ++i)
        ydev[static_cast<long>(i)] = value_of(*dev[i]->truth);
      auto grid = ss::default_alpha_grid(ss::lasso_alpha_max(Xtr.values, ytr), a.grid_size,
                                         a.min_ratio);
      ss::TunedLasso tuned =
          ss::tune_alpha(Xtr.values, ytr, Xdev.values, ydev, task, Xtr.names, grid);
      chosen_alpha = tuned.best_alpha;
      note = "dev score " + ss::format_double(best_grid_score(tuned.grid_scores, tuned.best_alpha));
      model = std::move(tuned.model);
    } else {
      std::vector<int> ldev(dev.size());
      for (size_t i = 0; i < dev.size(); ++i) ldev[i] = label_of(*dev[i]->truth);
      auto grid = ss::default_alpha_grid(
          ss::logistic_alpha_max(Xtr.values, ltr, ss::target_classes(task)), a.grid_size,
          a.min_ratio);
      ss::TunedLogistic tuned =
          ss::tune_alpha(Xtr.values, ltr, Xdev.values, ldev, task, Xtr.names, grid);
      chosen_alpha = tuned.best_alpha;
      note = "dev score " + ss::format_double(best_grid_score(tuned.grid_scores, tuned.best_alpha));
      model = std::move(tuned.model);
    }
  }
  std::visit([&](auto& m) { m.corpus_fingerprint = fingerprint; }, model);
  ss::save_model(model, a.out);
  std::cout << "wrote " << a.task << " model to " << a.out << " (alpha "
            << ss::format_double(chosen_alpha) << ", " << note << ")\n";
}

struct PredictArgs {
  std::vector<std::string> models;
  std::string corpus;
  std::string variant = "oracle";
  std::string split = "all";
  std::string out;
};

void run_predict(const PredictArgs& a) {
  std::map<ss::Task, ss::AnyModel> models;
  for (const std::string& path : a.models) {
    ss::AnyModel m = ss::load_model(path);
    ss::Task task = std::visit([](const auto& mm) { return mm.target; }, m);
    if (!models.emplace(task, std::move(m)).second)
      throw std::runtime_error("two models for task " + ss::to_string(task));
  }
  for (ss::Task t : {ss::Task::ns, ss::Task::cq, ss::Task::sc, ss::Task::ri})
    if (!models.count(t))
      throw std::runtime_error("predict needs one model per task; missing " + ss::to_string(t));

  const auto& names =
      std::visit([](const auto& m) -> const std::vector<std::string>& { return m.feature_names; },
                 models.at(ss::Task::ns));
  ss::FeatureSchema schema = schema_from_names(names);
  ss::TranscriptVariant v = ss::parse_variant(a.variant);
  ss::Corpus corpus = ss::load_corpus(a.corpus, v);
  auto records = records_for_split(corpus, a.split);
  if (records.empty()) throw std::runtime_error("no records in split '" + a.split + "'");
  ss::FeatureMatrix X = ss::build_feature_matrix(records, schema, v);

  Eigen::VectorXd ns = ss::predict(std::get<ss::LassoModel>(models.at(ss::Task::ns)), X);
  Eigen::VectorXd cq = ss::predict(std::get<ss::LassoModel>(models.at(ss::Task::cq)), X);
  std::vector<int> sc = ss::predict(std::get<ss::LogisticModel>(models.at(ss::Task::sc)), X);
  std::vector<int> ri = ss::predict(std::get<ss::LogisticModel>(models.at(ss::Task::ri)), X);

  std::vector<ss::PredRow> rows(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    rows[i].child_id = X.child_ids[i];
    rows[i].ns = ns[static_cast<long>(i)];
    rows[i].cq = cq[static_cast<long>(i)];
    rows[i].sc = sc[i];
    rows[i].ri = ri[i] == 1;
  }
  ss::write_file_atomic(a.out, ss::predictions_to_jsonl(rows));
  std::cout << "wrote " << rows.size() << " predictions to " << a.out << "\n";
}

struct WeightsArgs {
  std::string model;
  size_t top = 20;
};

void run_weights(const WeightsArgs& a) {
  ss::AnyModel model = ss::load_model(a.model);
  ss::WeightReport report =
      std::visit([&](const auto& m) { return ss::inspect_weights(m, a.top); }, model);
  std::visit(
      [&](const auto& m) {
        std::cout << ss::to_string(m.target) << " model, alpha "
                  << ss::format_double(m.alpha) << "\n";
      },
      model);
  std::cout << report.nonzero << " nonzero weights, " << report.zeroed << " zeroed\n";
  for (const ss::WeightEntry& e : report.top)
    std::cout << "  " << e.name << " " << ss::format_double(e.weight) << "\n";
}

struct ScoreLlmArgs {
  std::string corpus;
  std::string variant = "oracle";
  std::string split = "test";
  std::string out;
  ss::BackendConfig backend;
};

void run_score_llm(const ScoreLlmArgs& a) {
  ss::TranscriptVariant v = ss::parse_variant(a.variant);
  ss::Corpus corpus = ss::load_corpus(a.corpus, v);
  auto records = records_for_split(corpus, a.split);
  if (records.empty()) throw std::runtime_error("no records in split '" + a.split + "'");
  ss::LlmScoringSession session(corpus, v, a.backend);
  std::vector<ss::PredRow> rows;
  rows.reserve(records.size());
  for (const ss::ChildRecord* rec : records) {
    ss::LlmScore s = session.score(*rec);
    rows.push_back({rec->child_id, s.scores.ns, s.scores.cq, s.scores.sc, s.scores.ri});
  }
  ss::write_file_atomic(a.out, ss::predictions_to_jsonl(rows));
  std::cout << "wrote " << rows.size() << " predictions to " << a.out << " ("
            << session.backend_calls() << " backend calls, " << session.cache_hits()
            << " cache hits, max " << session.max_examples_dropped()
            << " examples dropped)\n";
}

struct EvaluateArgs {
  std::string truth;
  std::string pred;
  std::string out;
};

void run_evaluate(const EvaluateArgs& a) {
  ss::Corpus corpus = ss::load_corpus(a.truth, ss::TranscriptVariant::oracle);
  std::vector<ss::PredRow> preds = ss::load_predictions(a.pred);
  ss::ScoreComparison cmp = ss::evaluate_predictions(corpus, preds);
  if (!a.out.empty()) ss::write_file_atomic(a.out, cmp.to_json().dump(2) + "\n");
  for (const ss::EvalReport* r : {&cmp.ns, &cmp.cq, &cmp.sc, &cmp.ri})
    std::cout << ss::render_report(*r) << "\n";
}

struct GridArgs {
  std::string config_path;
  std::string corpus;
  std::string out;
  std::uint64_t seed = 1;
  std::vector<std::string> scorers;
  std::vector<std::string> variants;
  double corrupt_cer = 0.28;
  std::string human;
  ss::LinearSettings linear;
  ss::BackendConfig backend;

  CLI::Option* corpus_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* scorers_opt = nullptr;
  CLI::Option* variants_opt = nullptr;
  CLI::Option* cer_opt = nullptr;
  CLI::Option* human_opt = nullptr;
  CLI::Option* grid_size_opt = nullptr;
  CLI::Option* min_ratio_opt = nullptr;
};

void run_grid_cmd(GridArgs& a, CLI::App* cmd) {
  std::string corpus;
  std::string out_dir;
  std::uint64_t seed = 1;
  std::vector<std::string> scorers = {"linear", "llm"};
  std::vector<std::string> variants = {"oracle", "asr"};
  std::optional<double> corrupt_cer;
  std::optional<std::string> language;
  std::string human;
  ss::LinearSettings linear;
  ss::BackendConfig backend;

  if (!a.config_path.empty()) {
    json j = json::parse(ss::read_file(a.config_path));
    corpus = j.value("corpus", corpus);
    out_dir = j.value("out_dir", out_dir);
    seed = j.value("seed", seed);
    if (j.contains("scorers")) scorers = j["scorers"].get<std::vector<std::string>>();
    if (j.contains("variants")) variants = j["variants"].get<std::vector<std::string>>();
    if (j.contains("corrupt_cer") && !j["corrupt_cer"].is_null())
      corrupt_cer = j["corrupt_cer"].get<double>();
    if (j.contains("language")) language = j["language"].get<std::string>();
    human = j.value("human_scores", human);
    if (j.contains("linear")) {
      linear.grid_size = j["linear"].value("grid_size", linear.grid_size);
      linear.alpha_min_ratio = j["linear"].value("alpha_min_ratio", linear.alpha_min_ratio);
    }
    if (j.contains("backend")) backend = ss::backend_config_from_json(j["backend"]);
  }

  if (a.corpus_opt->count()) corpus = a.corpus;
  if (a.out_opt->count()) out_dir = a.out;
  if (a.seed_opt->count()) seed = a.seed;
  if (a.scorers_opt->count()) scorers = a.scorers;
  if (a.variants_opt->count()) variants = a.variants;
  if (a.cer_opt->count()) corrupt_cer = a.corrupt_cer;
  if (a.human_opt->count()) human = a.human;
  if (a.grid_size_opt->count()) linear.grid_size = a.linear.grid_size;
  if (a.min_ratio_opt->count()) linear.alpha_min_ratio = a.linear.alpha_min_ratio;

  // Backend flags parse straight into a.backend; copy each field the user
  // actually passed over the config file's values.
  auto passed = [&](const std::string& flag) {
    const CLI::Option* opt = cmd->get_option_no_throw(flag);
    return opt && opt->count() > 0;
  };
  if (passed("--backend")) backend.llm = a.backend.llm;
  if (passed("--translate")) backend.translator = a.backend.translator;
  if (passed("--cache")) backend.cache_dir = a.backend.cache_dir;
  if (passed("--llm-url")) backend.llm_endpoint.base_url = a.backend.llm_endpoint.base_url;
  if (passed("--llm-model")) backend.llm_endpoint.model = a.backend.llm_endpoint.model;
  if (passed("--llm-credential-env"))
    backend.llm_endpoint.credential_env = a.backend.llm_endpoint.credential_env;
  if (passed("--llm-timeout")) backend.llm_endpoint.timeout_s = a.backend.llm_endpoint.timeout_s;
  if (passed("--translate-url"))
    backend.translate_endpoint.base_url = a.backend.translate_endpoint.base_url;
  if (passed("--translate-credential-env"))
    backend.translate_endpoint.credential_env = a.backend.translate_endpoint.credential_env;
  if (passed("--translate-timeout"))
    backend.translate_endpoint.timeout_s = a.backend.translate_endpoint.timeout_s;
  if (passed("--max-retries")) backend.max_retries = a.backend.max_retries;
  if (passed("--temperature")) backend.temperature = a.backend.temperature;
  if (passed("--max-prompt-chars")) backend.max_prompt_chars = a.backend.max_prompt_chars;

  if (corpus.empty()) throw std::runtime_error("grid needs a corpus (--corpus or config)");
  if (out_dir.empty()) throw std::runtime_error("grid needs an output directory (--out or config)");
  if (backend.llm == "mock") backend.llm = "mock_knn";

  std::vector<ss::RunConfig> configs;
  for (const std::string& s : scorers) {
    for (const std::string& v : variants) {
      ss::RunConfig c;
      c.corpus_path = corpus;
      if (language) c.language = ss::parse_language(*language);
      c.variant = ss::parse_variant(v);
      c.scorer = ss::parse_scorer(s);
      if (c.variant == ss::TranscriptVariant::asr && corrupt_cer) c.corrupt_cer = corrupt_cer;
      c.seed = seed;
      c.linear = linear;
      c.backend = backend;
      c.out_dir = std::filesystem::path(out_dir) / (s + "_" + v);
      configs.push_back(std::move(c));
    }
  }

  std::vector<ss::PredRow> human_rows;
  if (!human.empty()) human_rows = ss::load_predictions(human);

  ss::GridResult result = ss::run_grid(configs, human_rows);
  ss::write_file_atomic(std::filesystem::path(out_dir) / "table.txt", result.table_text);
  ss::write_file_atomic(std::filesystem::path(out_dir) / "table.json",
                        result.table_json.dump(2) + "\n");
  std::cout << result.table_text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oral narrative scoring pipeline"};
  app.require_subcommand(1);

  auto validate_args = std::make_shared<ValidateArgs>();
  CLI::App* validate = app.add_subcommand("validate", "check a corpus file");
  validate->add_option("path", validate_args->path, "corpus JSONL file")->required();
  validate->add_option("--variant", validate_args->variant, "required transcript variant")
      ->check(CLI::IsMember({"oracle", "asr"}));
  validate->callback([validate_args] { run_validate(*validate_args); });

  auto synth_args = std::make_shared<SynthArgs>();
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--train", synth_args->spec.train, "train records");
  synth->add_option("--dev", synth_args->spec.dev, "dev records");
  synth->add_option("--test", synth_args->spec.test, "test records");
  synth->add_option("--vocab", synth_args->spec.vocab_size, "vocabulary size");
  synth->add_option("--active", synth_args->spec.active_features, "planted active words");
  synth->add_option("--sigma", synth_args->spec.noise_sigma, "score noise sigma");
  synth->add_option("--language", synth_args->language, "corpus language")
      ->check(CLI::IsMember({"afrikaans", "isixhosa"}));
  synth->add_option("--seed", synth_args->seed, "random seed");
  synth->add_option("--out", synth_args->out, "output corpus path")->required();
  synth->add_option("--planted-out", synth_args->planted_out,
                    "also write the planted models as JSON");
  synth->callback([synth_args] { run_synth(*synth_args); });

  auto corrupt_args = std::make_shared<CorruptArgs>();
  CLI::App* corrupt = app.add_subcommand("corrupt", "fill asr transcripts with noisy copies");
  corrupt->add_option("--cer", corrupt_args->cer, "target character error rate")->required();
  corrupt->add_option("--seed", corrupt_args->seed, "random seed");
  corrupt->add_option("--in", corrupt_args->in, "input corpus")->required();
  corrupt->add_option("--out", corrupt_args->out, "output corpus")->required();
  corrupt->callback([corrupt_args] { run_corrupt(*corrupt_args); });

  auto feat_args = std::make_shared<FeaturizeArgs>();
  CLI::App* featurize = app.add_subcommand("featurize", "write the feature matrix as CSV");
  featurize->add_option("--corpus", feat_args->corpus, "corpus JSONL file")->required();
  featurize->add_option("--variant", feat_args->variant, "transcript variant")
      ->check(CLI::IsMember({"oracle", "asr"}));
  featurize->add_option("--out", feat_args->out, "output CSV path")->required();
  featurize->callback([feat_args] { run_featurize(*feat_args); });

  auto train_args = std::make_shared<TrainArgs>();
  CLI::App* train = app.add_subcommand("train", "fit one scoring model");
  train->add_option("--task", train_args->task, "ns|cq|sc|ri")
      ->required()
      ->check(CLI::IsMember({"ns", "cq", "sc", "ri"}));
  train->add_option("--corpus", train_args->corpus, "corpus JSONL file")->required();
  train->add_option("--variant", train_args->variant, "transcript variant")
      ->check(CLI::IsMember({"oracle", "asr"}));
  train->add_option("--out", train_args->out, "output model path")->required();
  train->add_option("--grid-size", train_args->grid_size, "alpha grid size");
  train->add_option("--min-ratio", train_args->min_ratio, "grid floor as a fraction of alpha_max");
  train->add_option("--alpha", train_args->alpha, "skip tuning and fit at this alpha");
  train->callback([train_args] { run_train(*train_args); });

  auto predict_args = std::make_shared<PredictArgs>();
  CLI::App* predict = app.add_subcommand("predict", "score a corpus with trained models");
  predict->add_option("--model", predict_args->models, "model file, once per task")
      ->required()
      ->expected(1, 4);
  predict->add_option("--corpus", predict_args->corpus, "corpus JSONL file")->required();
  predict->add_option("--variant", predict_args->variant, "transcript variant")
      ->check(CLI::IsMember({"oracle", "asr"}));
  predict->add_option("--split", predict_args->split, "records to score")
      ->check(CLI::IsMember({"train", "dev", "test", "all"}));
  predict->add_option("--out", predict_args->out, "output predictions path")->required();
  predict->callback([predict_args] { run_predict(*predict_args); });

  auto weights_args = std::make_shared<WeightsArgs>();
  CLI::App* weights = app.add_subcommand("weights", "inspect a model's nonzero weights");
  weights->add_option("--model", weights_args->model, "model file")->required();
  weights->add_option("--top", weights_args->top, "entries to print");
  weights->callback([weights_args] { run_weights(*weights_args); });

  auto score_llm_args = std::make_shared<ScoreLlmArgs>();
  CLI::App* score_llm = app.add_subcommand("score-llm", "score records with the llm backend");
  score_llm->add_option("--corpus", score_llm_args->corpus, "corpus JSONL file")->required();
  score_llm->add_option("--variant", score_llm_args->variant, "transcript variant")
      ->check(CLI::IsMember({"oracle", "asr"}));
  score_llm->add_option("--split", score_llm_args->split, "records to score")
      ->check(CLI::IsMember({"train", "dev", "test", "all"}));
  score_llm->add_option("--out", score_llm_args->out, "output predictions path")->required();
  add_backend_options(score_llm, score_llm_args->backend);
  score_llm->callback([score_llm_args] {
    if (score_llm_args->backend.llm == "mock") score_llm_args->backend.llm = "mock_knn";
    run_score_llm(*score_llm_args);
  });

  auto eval_args = std::make_shared<EvaluateArgs>();
  CLI::App* evaluate = app.add_subcommand("evaluate", "compare predictions against truth");
  evaluate->add_option("--truth", eval_args->truth, "truth corpus JSONL file")->required();
  evaluate->add_option("--pred", eval_args->pred, "predictions JSONL file")->required();
  evaluate->add_option("--out", eval_args->out, "report JSON path");
  evaluate->callback([eval_args] { run_evaluate(*eval_args); });

  auto grid_args = std::make_shared<GridArgs>();
  CLI::App* grid = app.add_subcommand("grid", "run the scorer x variant comparison grid");
  grid->add_option("--config", grid_args->config_path, "grid config JSON file");
  grid_args->corpus_opt = grid->add_option("--corpus", grid_args->corpus, "corpus JSONL file");
  grid_args->out_opt = grid->add_option("--out", grid_args->out, "output directory");
  grid_args->seed_opt = grid->add_option("--seed", grid_args->seed, "random seed");
  grid_args->scorers_opt =
      grid->add_option("--scorers", grid_args->scorers, "scorers to run")->delimiter(',');
  grid_args->variants_opt =
      grid->add_option("--variants", grid_args->variants, "variants to run")->delimiter(',');
  grid_args->cer_opt =
      grid->add_option("--corrupt-cer", grid_args->corrupt_cer, "corrupt asr cells at this cer");
  grid_args->human_opt =
      grid->add_option("--human", grid_args->human, "human scores predictions file");
  grid_args->grid_size_opt =
      grid->add_option("--grid-size", grid_args->linear.grid_size, "alpha grid size");
  grid_args->min_ratio_opt = grid->add_option("--alpha-min-ratio",
                                              grid_args->linear.alpha_min_ratio,
                                              "grid floor as a fraction of alpha_max");
  add_backend_options(grid, grid_args->backend);
  grid->callback([grid_args, grid] { run_grid_cmd(*grid_args, grid); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
