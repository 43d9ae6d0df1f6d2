#include "storyscore/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <map>
#include <set>
#include <type_traits>

#include "storyscore/features.hpp"
#include "storyscore/util.hpp"

namespace storyscore {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Scorer s) { return s == Scorer::linear ? "linear" : "llm"; }

Scorer parse_scorer(std::string_view s) {
  if (s == "linear") return Scorer::linear;
  if (s == "llm") return Scorer::llm;
  throw std::invalid_argument("unknown scorer: '" + std::string(s) + "'");
}

ordered_json run_config_to_json(const RunConfig& config) {
  ordered_json j;
  j["corpus"] = config.corpus_path.string();
  if (config.language) j["language"] = to_string(*config.language);
  j["variant"] = to_string(config.variant);
  j["scorer"] = to_string(config.scorer);
  if (config.corrupt_cer) j["corrupt_cer"] = *config.corrupt_cer;
  j["seed"] = config.seed;
  j["linear"] = ordered_json{{"grid_size", config.linear.grid_size},
                             {"alpha_min_ratio", config.linear.alpha_min_ratio}};
  j["backend"] = backend_config_to_json(config.backend);
  j["out_dir"] = config.out_dir.string();
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.corpus_path = j.value("corpus", "");
  if (j.contains("language") && !j["language"].is_null())
    c.language = parse_language(j["language"].get<std::string>());
  c.variant = parse_variant(j.value("variant", "oracle"));
  c.scorer = parse_scorer(j.value("scorer", "linear"));
  if (j.contains("corrupt_cer") && !j["corrupt_cer"].is_null())
    c.corrupt_cer = j["corrupt_cer"].get<double>();
  c.seed = j.value("seed", std::uint64_t{1});
  if (j.contains("linear")) {
    const json& l = j["linear"];
    c.linear.grid_size = l.value("grid_size", c.linear.grid_size);
    c.linear.alpha_min_ratio = l.value("alpha_min_ratio", c.linear.alpha_min_ratio);
  }
  if (j.contains("backend")) c.backend = backend_config_from_json(j["backend"]);
  c.out_dir = j.value("out_dir", "");
  return c;
}

std::string run_config_digest(const RunConfig& config) {
  return digest_hex(run_config_to_json(config).dump());
}

std::string predictions_to_jsonl(const std::vector<PredRow>& rows) {
  std::string out;
  for (const PredRow& r : rows) {
    ordered_json j;
    j["child_id"] = r.child_id;
    j["ns"] = r.ns;
    j["cq"] = r.cq;
    j["sc"] = r.sc;
    j["ri"] = r.ri;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PredRow> predictions_from_jsonl(std::string_view text,
                                            const std::string& source_name) {
  std::vector<PredRow> rows;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (trim(line).empty()) continue;
    std::string where = source_name + ":" + std::to_string(line_no);
    try {
      json j = json::parse(line);
      PredRow r;
      r.child_id = j.at("child_id").get<std::string>();
      r.ns = j.at("ns").get<double>();
      r.cq = j.at("cq").get<double>();
      r.sc = j.at("sc").get<int>();
      r.ri = j.at("ri").get<bool>();
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw std::runtime_error(where + ": bad prediction row: " + e.what());
    }
  }
  return rows;
}

std::vector<PredRow> load_predictions(const std::filesystem::path& path) {
  return predictions_from_jsonl(read_file(path), path.string());
}

ScoreComparison evaluate_predictions(const Corpus& truth, const std::vector<PredRow>& preds) {
  if (preds.empty()) throw std::runtime_error("evaluate_predictions: no predictions");
  std::set<std::string> seen;
  std::vector<double> tns, pns, tcq, pcq;
  std::vector<int> tsc, psc;
  std::vector<bool> tri, pri;
  for (const PredRow& row : preds) {
    if (!seen.insert(row.child_id).second)
      throw std::runtime_error("evaluate_predictions: duplicate prediction for child '" +
                               row.child_id + "'");
    const ChildRecord* rec = truth.find(row.child_id);
    if (!rec)
      throw std::runtime_error("evaluate_predictions: prediction for unknown child '" +
                               row.child_id + "'");
    if (!rec->truth)
      throw std::runtime_error("evaluate_predictions: no truth scores for child '" +
                               row.child_id + "'");
    tns.push_back(rec->truth->ns);
    pns.push_back(row.ns);
    tcq.push_back(rec->truth->cq);
    pcq.push_back(row.cq);
    tsc.push_back(rec->truth->sc);
    psc.push_back(row.sc);
    tri.push_back(rec->truth->ri);
    pri.push_back(row.ri);
  }
  ScoreComparison out;
  out.ns = regression_report(Task::ns, tns, pns);
  out.cq = regression_report(Task::cq, tcq, pcq);
  out.sc = ordinal_report(tsc, psc);
  out.ri = flag_report(tri, pri);
  return out;
}

namespace {

template <typename F>
auto run_stage(std::vector<StageTiming>& timings, const std::string& stage, F&& f)
    -> std::invoke_result_t<F> {
  auto t0 = std::chrono::steady_clock::now();
  auto record = [&] {
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    timings.push_back({stage, seconds});
  };
  try {
    if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
      f();
      record();
    } else {
      auto out = f();
      record();
      return out;
    }
  } catch (const std::exception& e) {
    throw std::runtime_error("stage " + stage + ": " + e.what());
  }
}

Eigen::VectorXd truth_vector(const std::vector<const ChildRecord*>& records, Task task) {
  Eigen::VectorXd y(static_cast<long>(records.size()));
  for (size_t i = 0; i < records.size(); ++i) {
    const ScoreSet& s = *records[i]->truth;
    y[static_cast<long>(i)] = task == Task::ns ? s.ns : s.cq;
  }
  return y;
}

std::vector<int> truth_labels(const std::vector<const ChildRecord*>& records, Task task) {
  std::vector<int> y(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    const ScoreSet& s = *records[i]->truth;
    y[i] = task == Task::sc ? s.sc : (s.ri ? 1 : 0);
  }
  return y;
}

void require_truth(const std::vector<const ChildRecord*>& records, const char* split_name) {
  for (const ChildRecord* rec : records)
    if (!rec->truth)
      throw std::runtime_error(std::string(split_name) + " record '" + rec->child_id +
                               "' has no truth scores");
}

struct Artifact {
  std::string name;
  std::string content;
};

}  // namespace

ordered_json RunManifest::to_json() const {
  ordered_json j;
  j["config_digest"] = config_digest;
  j["config"] = config;
  j["corpus_fingerprint"] = corpus_fingerprint;
  j["scorer"] = storyscore::to_string(scorer);
  j["variant"] = storyscore::to_string(variant);
  ordered_json arts = ordered_json::array();
  for (const ArtifactRef& a : artifacts)
    arts.push_back(ordered_json{{"path", a.path}, {"digest", a.digest}});
  j["artifacts"] = std::move(arts);
  j["reports"] = reports.to_json();
  ordered_json times = ordered_json::array();
  for (const StageTiming& t : timings)
    times.push_back(ordered_json{{"stage", t.stage}, {"seconds", t.seconds}});
  j["timings"] = std::move(times);
  j["examples_dropped"] = examples_dropped;
  j["backend_calls"] = backend_calls;
  j["cache_hits"] = cache_hits;
  return j;
}

RunManifest RunManifest::from_json(const ordered_json& j) {
  RunManifest m;
  m.config_digest = j.at("config_digest").get<std::string>();
  m.config = j.at("config");
  m.corpus_fingerprint = j.at("corpus_fingerprint").get<std::string>();
  m.scorer = parse_scorer(j.at("scorer").get<std::string>());
  m.variant = parse_variant(j.at("variant").get<std::string>());
  for (const ordered_json& a : j.at("artifacts"))
    m.artifacts.push_back({a.at("path").get<std::string>(), a.at("digest").get<std::string>()});
  const ordered_json& r = j.at("reports");
  m.reports.ns = EvalReport::from_json(r.at("ns"));
  m.reports.cq = EvalReport::from_json(r.at("cq"));
  m.reports.sc = EvalReport::from_json(r.at("sc"));
  m.reports.ri = EvalReport::from_json(r.at("ri"));
  for (const ordered_json& t : j.value("timings", ordered_json::array()))
    m.timings.push_back({t.at("stage").get<std::string>(), t.at("seconds").get<double>()});
  m.examples_dropped = j.value("examples_dropped", size_t{0});
  m.backend_calls = j.value("backend_calls", size_t{0});
  m.cache_hits = j.value("cache_hits", size_t{0});
  return m;
}

RunManifest run_experiment(const RunConfig& config) {
  if (config.out_dir.empty())
    throw std::invalid_argument("run_experiment: out_dir is empty");
  if (config.corrupt_cer && config.variant != TranscriptVariant::asr)
    throw std::invalid_argument("run_experiment: corrupt_cer requires variant=asr");

  RunManifest manifest;
  manifest.config = run_config_to_json(config);
  manifest.config_digest = run_config_digest(config);
  manifest.scorer = config.scorer;
  manifest.variant = config.variant;
  std::vector<StageTiming>& timings = manifest.timings;

  Corpus corpus = run_stage(timings, "load", [&] {
    std::string bytes = read_file(config.corpus_path);
    manifest.corpus_fingerprint = digest_hex(bytes);
    TranscriptVariant need =
        config.corrupt_cer ? TranscriptVariant::oracle : config.variant;
    Corpus c = parse_corpus_jsonl(bytes, need, config.corpus_path.string(),
                                  config.scorer == Scorer::linear);
    if (config.language && *config.language != c.language)
      throw std::runtime_error("corpus language " + to_string(c.language) +
                               " does not match configured language " +
                               to_string(*config.language));
    return c;
  });

  if (config.corrupt_cer) {
    run_stage(timings, "corrupt", [&] {
      corrupt_corpus(corpus, *config.corrupt_cer, derive_seed(config.seed, "corrupt"));
      // Only the linear scorer reads the vocabulary; prompts use raw text.
      if (config.scorer == Scorer::linear) rebuild_vocabulary(corpus, TranscriptVariant::asr);
    });
  }

  auto test_records = corpus.split_records(Split::test);
  if (test_records.empty())
    throw std::runtime_error("run_experiment: corpus has no test records");

  std::vector<PredRow> rows;
  std::vector<Artifact> artifacts;

  if (config.scorer == Scorer::linear) {
    auto train = corpus.split_records(Split::train);
    auto dev = corpus.split_records(Split::dev);
    if (train.empty()) throw std::runtime_error("run_experiment: corpus has no train records");
    if (dev.empty()) throw std::runtime_error("run_experiment: corpus has no dev records");
    require_truth(train, "train");
    require_truth(dev, "dev");

    FeatureSchema schema{corpus.vocabulary};
    FeatureMatrix Xtr, Xdev, Xtest;
    run_stage(timings, "featurize", [&] {
      Xtr = build_feature_matrix(train, schema, config.variant);
      Xdev = build_feature_matrix(dev, schema, config.variant);
      Xtest = build_feature_matrix(test_records, schema, config.variant);
    });

    TunedLasso ns, cq;
    TunedLogistic sc, ri;
    run_stage(timings, "train", [&] {
      Eigen::VectorXd ytr_ns = truth_vector(train, Task::ns);
      Eigen::VectorXd ytr_cq = truth_vector(train, Task::cq);
      Eigen::VectorXd ydev_ns = truth_vector(dev, Task::ns);
      Eigen::VectorXd ydev_cq = truth_vector(dev, Task::cq);
      std::vector<int> ytr_sc = truth_labels(train, Task::sc);
      std::vector<int> ytr_ri = truth_labels(train, Task::ri);
      std::vector<int> ydev_sc = truth_labels(dev, Task::sc);
      std::vector<int> ydev_ri = truth_labels(dev, Task::ri);

      auto grid_for = [&](double alpha_max) {
        return default_alpha_grid(alpha_max, config.linear.grid_size,
                                  config.linear.alpha_min_ratio);
      };
      ns = tune_alpha(Xtr.values, ytr_ns, Xdev.values, ydev_ns, Task::ns, Xtr.names,
                      grid_for(lasso_alpha_max(Xtr.values, ytr_ns)));
      cq = tune_alpha(Xtr.values, ytr_cq, Xdev.values, ydev_cq, Task::cq, Xtr.names,
                      grid_for(lasso_alpha_max(Xtr.values, ytr_cq)));
      sc = tune_alpha(Xtr.values, ytr_sc, Xdev.values, ydev_sc, Task::sc, Xtr.names,
                      grid_for(logistic_alpha_max(Xtr.values, ytr_sc, target_classes(Task::sc))));
      ri = tune_alpha(Xtr.values, ytr_ri, Xdev.values, ydev_ri, Task::ri, Xtr.names,
                      grid_for(logistic_alpha_max(Xtr.values, ytr_ri, target_classes(Task::ri))));
      ns.model.corpus_fingerprint = manifest.corpus_fingerprint;
      cq.model.corpus_fingerprint = manifest.corpus_fingerprint;
      sc.model.corpus_fingerprint = manifest.corpus_fingerprint;
      ri.model.corpus_fingerprint = manifest.corpus_fingerprint;
    });

    run_stage(timings, "score", [&] {
      Eigen::VectorXd pns = predict(ns.model, Xtest);
      Eigen::VectorXd pcq = predict(cq.model, Xtest);
      std::vector<int> psc = predict(sc.model, Xtest);
      std::vector<int> pri = predict(ri.model, Xtest);
      rows.reserve(test_records.size());
      for (size_t i = 0; i < test_records.size(); ++i) {
        PredRow r;
        r.child_id = Xtest.child_ids[i];
        r.ns = pns[static_cast<long>(i)];
        r.cq = pcq[static_cast<long>(i)];
        r.sc = psc[i];
        r.ri = pri[i] == 1;
        rows.push_back(std::move(r));
      }
    });

    artifacts.push_back({"model_ns.json", model_to_json(ns.model).dump(2) + "\n"});
    artifacts.push_back({"model_cq.json", model_to_json(cq.model).dump(2) + "\n"});
    artifacts.push_back({"model_sc.json", model_to_json(sc.model).dump(2) + "\n"});
    artifacts.push_back({"model_ri.json", model_to_json(ri.model).dump(2) + "\n"});
  } else {
    run_stage(timings, "score", [&] {
      LlmScoringSession session(corpus, config.variant, config.backend);
      std::string responses;
      rows.reserve(test_records.size());
      for (const ChildRecord* rec : test_records) {
        LlmScore s = session.score(*rec);
        PredRow r;
        r.child_id = rec->child_id;
        r.ns = s.scores.ns;
        r.cq = s.scores.cq;
        r.sc = s.scores.sc;
        r.ri = s.scores.ri;
        rows.push_back(std::move(r));
        ordered_json resp;
        resp["child_id"] = rec->child_id;
        resp["response"] = s.raw_response;
        responses += resp.dump();
        responses += '\n';
      }
      manifest.examples_dropped = session.max_examples_dropped();
      manifest.backend_calls = session.backend_calls();
      manifest.cache_hits = session.cache_hits();
      artifacts.push_back({"responses.jsonl", std::move(responses)});
    });
  }

  run_stage(timings, "evaluate", [&] {
    std::vector<PredRow> with_truth;
    for (const PredRow& r : rows) {
      const ChildRecord* rec = corpus.find(r.child_id);
      if (rec && rec->truth) with_truth.push_back(r);
    }
    if (with_truth.empty())
      throw std::runtime_error("no test records carry truth scores to evaluate against");
    manifest.reports = evaluate_predictions(corpus, with_truth);
  });

  artifacts.push_back({"predictions.jsonl", predictions_to_jsonl(rows)});
  artifacts.push_back({"reports.json", manifest.reports.to_json().dump(2) + "\n"});

  run_stage(timings, "write", [&] {
    std::filesystem::create_directories(config.out_dir);
    for (const Artifact& a : artifacts) {
      write_file_atomic(config.out_dir / a.name, a.content);
      manifest.artifacts.push_back({a.name, digest_hex(a.content)});
    }
  });
  write_file_atomic(config.out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

RunManifest verify_manifest(const std::filesystem::path& out_dir) {
  RunManifest m =
      RunManifest::from_json(ordered_json::parse(read_file(out_dir / "manifest.json")));
  for (const ArtifactRef& a : m.artifacts) {
    std::filesystem::path p = out_dir / a.path;
    if (!std::filesystem::exists(p))
      throw std::runtime_error("manifest artifact missing: " + p.string());
    std::string digest = digest_hex(read_file(p));
    if (digest != a.digest)
      throw std::runtime_error("artifact digest mismatch for " + p.string() + ": recorded " +
                               a.digest + ", found " + digest);
  }
  return m;
}

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string pad_left(const std::string& s, size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

struct TableCells {
  std::string ns, cq, sc, ri;
};

TableCells cells_from_reports(const ScoreComparison& r) {
  TableCells c;
  c.ns = r.ns.r2 ? fmt2(*r.ns.r2) : "-";
  c.cq = r.cq.r2 ? fmt2(*r.cq.r2) : "-";
  c.sc = r.sc.kappa ? fmt2(*r.sc.kappa) : "-";
  c.ri = r.ri.accuracy ? std::to_string(std::llround(*r.ri.accuracy * 100.0)) : "-";
  return c;
}

ordered_json cells_to_json(const ScoreComparison& r) {
  auto opt = [](const std::optional<double>& v) -> ordered_json {
    if (!v) return nullptr;
    return *v;
  };
  ordered_json j;
  j["ns_r2"] = opt(r.ns.r2);
  j["cq_r2"] = opt(r.cq.r2);
  j["sc_kappa"] = opt(r.sc.kappa);
  j["ri_acc_pct"] = r.ri.accuracy ? ordered_json(std::llround(*r.ri.accuracy * 100.0))
                                  : ordered_json(nullptr);
  return j;
}

}  // namespace

GridResult run_grid(const std::vector<RunConfig>& configs,
                    const std::vector<PredRow>& human_scores) {
  if (configs.empty()) throw std::invalid_argument("run_grid: no configs");
  for (const RunConfig& c : configs)
    if (c.corpus_path != configs.front().corpus_path)
      throw std::invalid_argument("run_grid: configs use different corpus files (" +
                                  configs.front().corpus_path.string() + " vs " +
                                  c.corpus_path.string() + ")");

  GridResult out;
  std::vector<std::future<RunManifest>> futures;
  futures.reserve(configs.size());
  for (const RunConfig& c : configs)
    futures.push_back(std::async(std::launch::async, [&c] { return run_experiment(c); }));
  for (auto& f : futures) out.manifests.push_back(f.get());

  std::vector<Scorer> scorers;
  std::vector<TranscriptVariant> variants;
  std::map<std::pair<std::string, std::string>, const RunManifest*> by_cell;
  for (const RunManifest& m : out.manifests) {
    if (std::find(scorers.begin(), scorers.end(), m.scorer) == scorers.end())
      scorers.push_back(m.scorer);
    if (std::find(variants.begin(), variants.end(), m.variant) == variants.end())
      variants.push_back(m.variant);
    auto key = std::make_pair(to_string(m.scorer), to_string(m.variant));
    if (!by_cell.emplace(key, &m).second)
      throw std::invalid_argument("run_grid: duplicate cell for scorer " + key.first +
                                  " and variant " + key.second);
  }

  std::optional<ScoreComparison> human;
  if (!human_scores.empty()) {
    Corpus truth = load_corpus(configs.front().corpus_path, TranscriptVariant::oracle);
    human = evaluate_predictions(truth, human_scores);
  }

  struct Row {
    std::string label;
    std::vector<std::optional<ScoreComparison>> per_variant;
  };
  std::vector<Row> rows;
  for (Scorer s : scorers) {
    Row row{to_string(s), {}};
    for (TranscriptVariant v : variants) {
      auto it = by_cell.find({to_string(s), to_string(v)});
      if (it == by_cell.end())
        row.per_variant.push_back(std::nullopt);
      else
        row.per_variant.push_back(it->second->reports);
    }
    rows.push_back(std::move(row));
  }
  if (human) {
    Row row{"human", {}};
    row.per_variant.push_back(*human);
    for (size_t i = 1; i < variants.size(); ++i) row.per_variant.push_back(std::nullopt);
    rows.push_back(std::move(row));
  }

  const std::vector<std::string> metric_headers = {"NS r2", "CQ r2", "SC kappa", "RI %"};
  size_t label_width = std::string("scorer").size();
  for (const Row& r : rows) label_width = std::max(label_width, r.label.size());
  const size_t cell_width = 9;

  std::string text;
  text += pad_right("", label_width);
  for (TranscriptVariant v : variants) {
    std::string group = to_string(v);
    text += "  " + pad_right(group, cell_width * metric_headers.size() +
                                        2 * (metric_headers.size() - 1));
  }
  text += '\n';
  text += pad_right("scorer", label_width);
  for (size_t vi = 0; vi < variants.size(); ++vi)
    for (const std::string& h : metric_headers) text += "  " + pad_left(h, cell_width);
  text += '\n';
  for (const Row& r : rows) {
    text += pad_right(r.label, label_width);
    for (const auto& reports : r.per_variant) {
      TableCells c =
          reports ? cells_from_reports(*reports) : TableCells{"-", "-", "-", "-"};
      for (const std::string& v : {c.ns, c.cq, c.sc, c.ri}) text += "  " + pad_left(v, cell_width);
    }
    text += '\n';
  }
  out.table_text = std::move(text);

  ordered_json jt;
  ordered_json jvariants = ordered_json::array();
  for (TranscriptVariant v : variants) jvariants.push_back(to_string(v));
  jt["variants"] = std::move(jvariants);
  jt["tasks"] = {"ns_r2", "cq_r2", "sc_kappa", "ri_acc_pct"};
  ordered_json jrows = ordered_json::array();
  for (const Row& r : rows) {
    ordered_json jr;
    jr["scorer"] = r.label;
    ordered_json jcells = ordered_json::object();
    for (size_t vi = 0; vi < variants.size(); ++vi)
      jcells[to_string(variants[vi])] =
          r.per_variant[vi] ? cells_to_json(*r.per_variant[vi]) : ordered_json();
    jr["cells"] = std::move(jcells);
    jrows.push_back(std::move(jr));
  }
  jt["rows"] = std::move(jrows);
  out.table_json = std::move(jt);
  return out;
}

}  // namespace storyscore
