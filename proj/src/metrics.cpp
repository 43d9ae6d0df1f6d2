#include "storyscore/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "storyscore/util.hpp"

namespace storyscore {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_lengths(size_t a, size_t b, size_t min_n, const char* who) {
  if (a != b) throw std::invalid_argument(std::string(who) + ": length mismatch");
  if (a < min_n)
    throw std::invalid_argument(std::string(who) + ": needs at least " +
                                std::to_string(min_n) + " points");
}

}  // namespace

double r_squared(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_lengths(truth.size(), pred.size(), 2, "r_squared");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot <= 0.0) throw std::invalid_argument("r_squared: zero-variance truth");
  return 1.0 - ss_res / ss_tot;
}

double mean_absolute_error(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_lengths(truth.size(), pred.size(), 1, "mean_absolute_error");
  double sum = 0.0;
  for (size_t i = 0; i < truth.size(); ++i) sum += std::abs(truth[i] - pred[i]);
  return sum / static_cast<double>(truth.size());
}

double kappa_linear(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  check_lengths(truth.size(), pred.size(), 1, "kappa_linear");
  if (k < 2) throw std::invalid_argument("kappa_linear: k must be >= 2");
  auto check_cat = [&](int c) {
    if (c < 1 || c > k)
      throw std::invalid_argument("kappa_linear: category " + std::to_string(c) +
                                  " outside 1.." + std::to_string(k));
  };
  std::vector<double> marg_t(static_cast<size_t>(k), 0.0);
  std::vector<double> marg_p(static_cast<size_t>(k), 0.0);
  std::vector<std::vector<double>> obs(static_cast<size_t>(k),
                                       std::vector<double>(static_cast<size_t>(k), 0.0));
  double n = static_cast<double>(truth.size());
  for (size_t i = 0; i < truth.size(); ++i) {
    check_cat(truth[i]);
    check_cat(pred[i]);
    obs[static_cast<size_t>(truth[i] - 1)][static_cast<size_t>(pred[i] - 1)] += 1.0 / n;
    marg_t[static_cast<size_t>(truth[i] - 1)] += 1.0 / n;
    marg_p[static_cast<size_t>(pred[i] - 1)] += 1.0 / n;
  }
  double wo = 0.0, we = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      double w = std::abs(i - j) / static_cast<double>(k - 1);
      wo += w * obs[static_cast<size_t>(i)][static_cast<size_t>(j)];
      we += w * marg_t[static_cast<size_t>(i)] * marg_p[static_cast<size_t>(j)];
    }
  }
  if (we == 0.0) {
    if (wo == 0.0) return 1.0;
    throw std::runtime_error("kappa_linear: degenerate expectation with observed disagreement");
  }
  return 1.0 - wo / we;
}

BinaryReport binary_report(const std::vector<bool>& truth, const std::vector<bool>& pred) {
  check_lengths(truth.size(), pred.size(), 1, "binary_report");
  size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] && pred[i]) ++tp;
    else if (truth[i] && !pred[i]) ++fn;
    else if (!truth[i] && pred[i]) ++fp;
    else ++tn;
  }
  BinaryReport r;
  r.confusion[0][0] = tn;
  r.confusion[0][1] = fp;
  r.confusion[1][0] = fn;
  r.confusion[1][1] = tp;
  double n = static_cast<double>(truth.size());
  r.accuracy = static_cast<double>(tp + tn) / n;
  r.recall = (tp + fn) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.precision = (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.f1 = (r.precision + r.recall) == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::vector<bool> derive_ri(const std::vector<int>& sc_predictions) {
  std::vector<bool> out;
  out.reserve(sc_predictions.size());
  for (int sc : sc_predictions) {
    if (sc < 1 || sc > 6)
      throw std::invalid_argument("derive_ri: category " + std::to_string(sc) +
                                  " outside 1..6");
    out.push_back(sc <= 2);
  }
  return out;
}

namespace {

long pct(double fraction) { return std::llround(fraction * 100.0); }

}  // namespace

ordered_json EvalReport::to_json() const {
  ordered_json j;
  j["task"] = to_string(task);
  j["n"] = n;
  if (r2) j["r2"] = *r2;
  if (mae) j["mae"] = *mae;
  if (kappa) j["kappa_linear"] = *kappa;
  if (accuracy) {
    j["accuracy"] = *accuracy;
    j["accuracy_pct"] = pct(*accuracy);
  }
  if (recall) {
    j["recall"] = *recall;
    j["recall_pct"] = pct(*recall);
  }
  if (precision) j["precision"] = *precision;
  if (f1) {
    j["f1"] = *f1;
    j["f1_pct"] = pct(*f1);
  }
  if (!confusion.empty()) j["confusion"] = confusion;
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.task = parse_task(j.at("task").get<std::string>());
  r.n = j.at("n").get<size_t>();
  if (j.contains("r2")) r.r2 = j["r2"].get<double>();
  if (j.contains("mae")) r.mae = j["mae"].get<double>();
  if (j.contains("kappa_linear")) r.kappa = j["kappa_linear"].get<double>();
  if (j.contains("accuracy")) r.accuracy = j["accuracy"].get<double>();
  if (j.contains("recall")) r.recall = j["recall"].get<double>();
  if (j.contains("precision")) r.precision = j["precision"].get<double>();
  if (j.contains("f1")) r.f1 = j["f1"].get<double>();
  if (j.contains("confusion")) r.confusion = j["confusion"].get<std::vector<std::vector<size_t>>>();
  return r;
}

EvalReport regression_report(Task task, const std::vector<double>& truth,
                             const std::vector<double>& pred) {
  EvalReport r;
  r.task = task;
  r.n = truth.size();
  r.r2 = r_squared(truth, pred);
  r.mae = mean_absolute_error(truth, pred);
  return r;
}

EvalReport ordinal_report(const std::vector<int>& truth, const std::vector<int>& pred) {
  EvalReport r;
  r.task = Task::sc;
  r.n = truth.size();
  r.kappa = kappa_linear(truth, pred, 6);
  r.confusion.assign(6, std::vector<size_t>(6, 0));
  for (size_t i = 0; i < truth.size(); ++i)
    ++r.confusion[static_cast<size_t>(truth[i] - 1)][static_cast<size_t>(pred[i] - 1)];
  return r;
}

EvalReport flag_report(const std::vector<bool>& truth, const std::vector<bool>& pred) {
  BinaryReport b = binary_report(truth, pred);
  EvalReport r;
  r.task = Task::ri;
  r.n = truth.size();
  r.accuracy = b.accuracy;
  r.recall = b.recall;
  r.precision = b.precision;
  r.f1 = b.f1;
  r.confusion = {{b.confusion[0][0], b.confusion[0][1]},
                 {b.confusion[1][0], b.confusion[1][1]}};
  return r;
}

ordered_json ScoreComparison::to_json() const {
  ordered_json j;
  j["ns"] = ns.to_json();
  j["cq"] = cq.to_json();
  j["sc"] = sc.to_json();
  j["ri"] = ri.to_json();
  return j;
}

ScoreComparison compare_scoresets(const std::vector<std::pair<std::string, ScoreSet>>& a,
                                  const std::vector<std::pair<std::string, ScoreSet>>& b) {
  if (a.empty()) throw std::invalid_argument("compare_scoresets: empty truth list");
  std::unordered_map<std::string, const ScoreSet*> bmap;
  for (const auto& [id, s] : b) {
    if (!bmap.emplace(id, &s).second)
      throw std::invalid_argument("compare_scoresets: duplicate child_id '" + id + "'");
  }
  if (bmap.size() != a.size())
    throw std::invalid_argument("compare_scoresets: id misalignment (sizes " +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                ")");
  std::vector<double> tns, pns, tcq, pcq;
  std::vector<int> tsc, psc;
  std::vector<bool> tri, pri;
  for (const auto& [id, t] : a) {
    auto it = bmap.find(id);
    if (it == bmap.end())
      throw std::invalid_argument("compare_scoresets: child_id '" + id +
                                  "' missing from second list");
    const ScoreSet& p = *it->second;
    tns.push_back(t.ns);
    pns.push_back(p.ns);
    tcq.push_back(t.cq);
    pcq.push_back(p.cq);
    tsc.push_back(t.sc);
    psc.push_back(p.sc);
    tri.push_back(t.ri);
    pri.push_back(p.ri);
  }
  ScoreComparison c{regression_report(Task::ns, tns, pns),
                    regression_report(Task::cq, tcq, pcq), ordinal_report(tsc, psc),
                    flag_report(tri, pri)};
  return c;
}

std::string render_report(const EvalReport& report) {
  std::string out = "task " + to_string(report.task) + "\n";
  out += "n " + std::to_string(report.n) + "\n";
  auto line = [&](const char* name, const std::optional<double>& v) {
    if (v) out += std::string(name) + " " + format_double(*v) + "\n";
  };
  line("r2", report.r2);
  line("mae", report.mae);
  line("kappa_linear", report.kappa);
  line("accuracy", report.accuracy);
  line("recall", report.recall);
  line("precision", report.precision);
  line("f1", report.f1);
  if (!report.confusion.empty()) {
    out += "confusion (rows truth, cols pred)\n";
    for (const auto& row : report.confusion) {
      for (size_t c = 0; c < row.size(); ++c) out += (c ? " " : "  ") + std::to_string(row[c]);
      out += "\n";
    }
  }
  return out;
}

}  // namespace storyscore
