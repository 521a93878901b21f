#include "toothsonic/auth.hpp"

#include "toothsonic/error.hpp"
#include "toothsonic/log.hpp"
#include "toothsonic/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

namespace toothsonic {

using nlohmann::json;

namespace {

int class_position(const std::vector<int>& class_ids, int subject_id) {
  const auto it = std::lower_bound(class_ids.begin(), class_ids.end(), subject_id);
  if (it == class_ids.end() || *it != subject_id) return -1;
  return static_cast<int>(it - class_ids.begin());
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

AuthDecision decide(const std::vector<int>& class_ids, int claimed_id, const std::vector<Eigen::VectorXd>& log_probs,
                    const AuthPolicy& policy) {
  const int claimed = class_position(class_ids, claimed_id);
  if (claimed < 0) throw Error(ErrorCode::UnknownSubject, "subject " + std::to_string(claimed_id) + " is not enrolled");
  if (log_probs.empty()) throw Error(ErrorCode::InvalidInput, "an attempt needs at least one gesture");

  AuthDecision d;
  d.fused_log_prob = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(class_ids.size()));
  for (const auto& lp : log_probs) d.fused_log_prob += lp;
  d.fused_log_prob /= static_cast<double>(log_probs.size());

  int winner = 0;
  if (policy.fusion == Fusion::MeanLogProb) {
    winner = argmax_lowest(d.fused_log_prob);
    d.confidence = std::exp(d.fused_log_prob[claimed] - log_sum_exp(d.fused_log_prob));
  } else {
    Eigen::VectorXd votes = Eigen::VectorXd::Zero(d.fused_log_prob.size());
    for (const auto& lp : log_probs) votes[argmax_lowest(lp)] += 1.0;
    winner = argmax_lowest(votes);
    d.confidence = votes[claimed] / static_cast<double>(log_probs.size());
  }
  d.predicted_id = class_ids[static_cast<std::size_t>(winner)];
  d.accept = winner == claimed && d.confidence >= policy.tau;
  return d;
}

AuthDecision authenticate(const SubjectModel& model, int claimed_id, const std::vector<FeatureVector>& gestures,
                          const AuthPolicy& policy) {
  if (model.class_index(claimed_id) < 0)
    throw Error(ErrorCode::UnknownSubject, "subject " + std::to_string(claimed_id) + " is not enrolled");
  std::vector<Eigen::VectorXd> lps;
  for (const auto& x : gestures) lps.push_back(log_probabilities(model, x));
  return decide(model.class_ids, claimed_id, lps, policy);
}

Metrics compute_metrics(const std::vector<AttemptRecord>& attempts) {
  Metrics m;
  m.attempts = attempts.size();
  for (const auto& a : attempts) {
    if (a.genuine()) {
      ++m.genuine;
      if (!a.accept) ++m.false_rejects;
    } else {
      ++m.adversarial;
      if (a.accept) ++m.false_accepts;
    }
  }
  if (m.genuine) m.frr = static_cast<double>(m.false_rejects) / static_cast<double>(m.genuine);
  if (m.adversarial) m.far = static_cast<double>(m.false_accepts) / static_cast<double>(m.adversarial);
  if (m.frr && m.far) m.bac = ((1.0 - *m.frr) + (1.0 - *m.far)) / 2.0;
  if (m.attempts)
    m.accuracy = static_cast<double>(m.attempts - m.false_rejects - m.false_accepts) / static_cast<double>(m.attempts);
  return m;
}

json to_json(const Metrics& m) {
  return {{"attempts", m.attempts},         {"genuine", m.genuine},
          {"adversarial", m.adversarial},   {"false_rejects", m.false_rejects},
          {"false_accepts", m.false_accepts}, {"frr", optional_json(m.frr)},
          {"far", optional_json(m.far)},    {"bac", optional_json(m.bac)},
          {"accuracy", optional_json(m.accuracy)}};
}

std::vector<std::vector<std::size_t>> attempt_tuples(const FeatureTable& table, const std::vector<std::size_t>& rows,
                                                     int k, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> out;
  for (const std::size_t anchor : rows) {
    std::vector<std::size_t> tuple = {anchor};
    if (k > 1) {
      std::vector<std::size_t> pool;
      for (const std::size_t r : rows)
        if (r != anchor) pool.push_back(r);
      Rng rng(derive_seed(seed, {anchor}));
      rng.shuffle(pool);
      std::set<int> used = {table[anchor].gesture_id};
      for (const std::size_t r : pool) {
        if (static_cast<int>(tuple.size()) == k) break;
        if (used.insert(table[r].gesture_id).second) tuple.push_back(r);
      }
      if (static_cast<int>(tuple.size()) < k) continue;
    }
    out.push_back(std::move(tuple));
  }
  return out;
}

std::vector<AttemptRecord> mimic_protocol(const std::vector<AttemptRecord>& genuine, const std::vector<int>& subject_ids) {
  std::vector<AttemptRecord> out;
  for (const auto& g : genuine) {
    if (!g.genuine()) continue;
    for (const int victim : subject_ids) {
      if (victim == g.true_id) continue;
      AttemptRecord a = g;
      a.kind = AttemptKind::Mimic;
      a.claimed_id = victim;
      a.accept = false;
      out.push_back(std::move(a));
    }
  }
  return out;
}

std::vector<AttemptRecord> replay_protocol(const FeatureTable& table, const std::vector<std::vector<std::size_t>>& tuples,
                                           int fold) {
  std::vector<AttemptRecord> out;
  for (const auto& t : tuples) {
    const auto& first = table[t.front()];
    AttemptRecord a;
    a.true_id = a.claimed_id = first.subject_id;
    a.kind = first.kind;
    a.fold = fold;
    a.rows = t;
    for (const std::size_t r : t) a.gesture_ids.push_back(table[r].gesture_id);
    out.push_back(std::move(a));
  }
  if (out.empty()) throw Error(ErrorCode::EmptyProtocol, "no replay attempts");
  return out;
}

std::vector<int> assign_folds(const FeatureTable& table, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::InvalidProtocol, "need at least 2 folds");
  std::map<std::tuple<int, int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < table.size(); ++i)
    groups[{table[i].subject_id, table[i].gesture_id, static_cast<int>(table[i].kind)}].push_back(i);
  std::vector<int> fold(table.size(), 0);
  for (auto& [key, rows] : groups) {
    const auto& [subject, gesture, kind] = key;
    if (static_cast<AttemptKind>(kind) == AttemptKind::Genuine && static_cast<int>(rows.size()) < folds)
      throw Error(ErrorCode::InvalidProtocol, "subject " + std::to_string(subject) + " gesture " +
                                                  std::to_string(gesture) + " has " + std::to_string(rows.size()) +
                                                  " genuine samples, fewer than " + std::to_string(folds) + " folds");
    std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return table[a].rep < table[b].rep; });
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(gesture),
                               static_cast<std::uint64_t>(kind)}));
    rng.shuffle(rows);
    for (std::size_t i = 0; i < rows.size(); ++i) fold[rows[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }
  return fold;
}

const KResult& EvalReport::at(int k) const {
  for (const auto& r : results)
    if (r.k == k) return r;
  throw Error(ErrorCode::InvalidInput, "no results for k = " + std::to_string(k));
}

EvalReport crossvalidate(const FeatureTable& table, const EvalOptions& opt) {
  opt.eval.validate();
  const int folds = opt.eval.folds;
  const auto fold = assign_folds(table, folds, derive_seed(opt.seed, {11}));

  std::set<int> subjects;
  for (const auto& row : table)
    if (row.kind == AttemptKind::Genuine) subjects.insert(row.subject_id);
  if (subjects.size() < 2) throw Error(ErrorCode::InvalidProtocol, "cross-validation needs at least two subjects");

  EvalReport report;
  report.folds = folds;
  report.subject_ids.assign(subjects.begin(), subjects.end());
  report.training.resize(static_cast<std::size_t>(folds));

  // Train one model per fold and score every held-out row once.
  std::vector<Eigen::VectorXd> log_prob(table.size());
  parallel_for(static_cast<std::size_t>(folds), opt.jobs, [&](std::size_t f) {
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < table.size(); ++i)
      if (table[i].kind == AttemptKind::Genuine && fold[i] != static_cast<int>(f)) train_rows.push_back(i);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(train_rows.size()), kFeatureDim);
    std::vector<int> y;
    for (std::size_t r = 0; r < train_rows.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = table[train_rows[r]].x.transpose();
      y.push_back(table[train_rows[r]].subject_id);
    }
    TrainConfig cfg = opt.train;
    cfg.seed = derive_seed(opt.train.seed, {f});
    const SubjectModel model = train(x, y, cfg, &report.training[f]);
    if (model.class_ids != report.subject_ids)
      throw Error(ErrorCode::InvalidProtocol, "fold " + std::to_string(f) + " does not cover every subject");
    for (std::size_t i = 0; i < table.size(); ++i)
      if (fold[i] == static_cast<int>(f)) log_prob[i] = log_probabilities(model, table[i].x);
    log_debug("fold " + std::to_string(f) + ": loss " + std::to_string(report.training[f].final_loss) + " after " +
              std::to_string(report.training[f].iterations) + " iterations");
  });

  // Held-out rows per (fold, subject, kind), in table order.
  std::map<std::tuple<int, int, int>, std::vector<std::size_t>> held_out;
  for (std::size_t i = 0; i < table.size(); ++i)
    held_out[{fold[i], table[i].subject_id, static_cast<int>(table[i].kind)}].push_back(i);

  auto decide_all = [&](std::vector<AttemptRecord>& attempts) {
    std::vector<Eigen::VectorXd> lps;
    for (auto& a : attempts) {
      lps.clear();
      for (const std::size_t r : a.rows) lps.push_back(log_prob[r]);
      const AuthDecision d = decide(report.subject_ids, a.claimed_id, lps, opt.eval.policy);
      a.accept = d.accept;
      a.predicted_id = d.predicted_id;
      a.confidence = d.confidence;
    }
  };

  for (const int k : opt.eval.ks) {
    KResult res;
    res.k = k;
    std::vector<AttemptRecord> genuine, attacks;
    for (const auto& [key, rows] : held_out) {
      const auto& [f, subject, kind] = key;
      const auto tuples = attempt_tuples(table, rows, k,
                                         derive_seed(opt.seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(f),
                                                                static_cast<std::uint64_t>(subject),
                                                                static_cast<std::uint64_t>(kind)}));
      if (tuples.empty()) continue;
      auto attempts = replay_protocol(table, tuples, f);
      auto& dest = static_cast<AttemptKind>(kind) == AttemptKind::Genuine ? genuine : attacks;
      dest.insert(dest.end(), std::make_move_iterator(attempts.begin()), std::make_move_iterator(attempts.end()));
    }
    auto mimic = mimic_protocol(genuine, report.subject_ids);
    res.attempts = std::move(genuine);
    res.attempts.insert(res.attempts.end(), std::make_move_iterator(mimic.begin()), std::make_move_iterator(mimic.end()));
    res.attempts.insert(res.attempts.end(), std::make_move_iterator(attacks.begin()),
                        std::make_move_iterator(attacks.end()));
    decide_all(res.attempts);

    std::map<AttemptKind, std::vector<AttemptRecord>> by_kind;
    std::vector<AttemptRecord> overall;
    for (const auto& a : res.attempts) {
      by_kind[a.kind].push_back(a);
      if (a.kind == AttemptKind::Genuine || a.kind == AttemptKind::Mimic) overall.push_back(a);
    }
    res.overall = compute_metrics(overall);
    for (const auto kind : {AttemptKind::Genuine, AttemptKind::Mimic, AttemptKind::Replay, AttemptKind::AdvancedMimic})
      res.protocols[std::string(to_string(kind))] = compute_metrics(by_kind[kind]);

    if (k == 1) {
      std::map<int, std::vector<AttemptRecord>> by_gesture;
      for (const auto& a : overall) by_gesture[a.gesture_ids.front()].push_back(a);
      for (const auto& [g, list] : by_gesture) report.per_gesture[g] = compute_metrics(list);
      const auto n = static_cast<Eigen::Index>(report.subject_ids.size());
      report.confusion = Eigen::MatrixXi::Zero(n, n);
      for (const auto& a : by_kind[AttemptKind::Genuine])
        ++report.confusion(class_position(report.subject_ids, a.true_id),
                           class_position(report.subject_ids, a.predicted_id));
    }
    report.results.push_back(std::move(res));
  }
  return report;
}

double SeparationStats::separated_fraction() const {
  if (groups.empty()) return 0.0;
  const auto n = std::count_if(groups.begin(), groups.end(),
                               [](const SeparationGroup& g) { return g.centroid_distance > g.genuine_spread; });
  return static_cast<double>(n) / static_cast<double>(groups.size());
}

double SeparationStats::mean_distance() const {
  double s = 0.0;
  for (const auto& g : groups) s += g.centroid_distance;
  return groups.empty() ? 0.0 : s / static_cast<double>(groups.size());
}

double SeparationStats::mean_spread() const {
  double s = 0.0;
  for (const auto& g : groups) s += g.genuine_spread;
  return groups.empty() ? 0.0 : s / static_cast<double>(groups.size());
}

SeparationStats replay_separation(const FeatureTable& table, AttemptKind attack) {
  std::vector<std::size_t> genuine_rows;
  for (std::size_t i = 0; i < table.size(); ++i)
    if (table[i].kind == AttemptKind::Genuine) genuine_rows.push_back(i);
  if (genuine_rows.size() < 2) throw Error(ErrorCode::InvalidDataset, "need genuine rows to standardize");
  Eigen::MatrixXd g(static_cast<Eigen::Index>(genuine_rows.size()), kFeatureDim);
  for (std::size_t r = 0; r < genuine_rows.size(); ++r) g.row(static_cast<Eigen::Index>(r)) = table[genuine_rows[r]].x.transpose();
  const Standardizer st = Standardizer::fit(g);

  std::map<std::pair<int, int>, std::pair<std::vector<Eigen::VectorXd>, std::vector<Eigen::VectorXd>>> groups;
  for (const auto& row : table) {
    if (row.kind == AttemptKind::Genuine) groups[{row.subject_id, row.gesture_id}].first.push_back(st.transform(row.x));
    else if (row.kind == attack) groups[{row.subject_id, row.gesture_id}].second.push_back(st.transform(row.x));
  }
  auto centroid = [](const std::vector<Eigen::VectorXd>& v) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(kFeatureDim);
    for (const auto& x : v) c += x;
    return Eigen::VectorXd(c / static_cast<double>(v.size()));
  };
  SeparationStats out;
  for (const auto& [key, sets] : groups) {
    const auto& [gen, att] = sets;
    if (gen.empty() || att.empty()) continue;
    const Eigen::VectorXd cg = centroid(gen), ca = centroid(att);
    double spread = 0.0;
    for (const auto& x : gen) spread += (x - cg).squaredNorm();
    out.groups.push_back({key.first, key.second, (ca - cg).norm(), std::sqrt(spread / static_cast<double>(gen.size()))});
  }
  return out;
}

json to_json(const SeparationStats& s) {
  return {{"groups", s.groups.size()},
          {"separated_fraction", s.separated_fraction()},
          {"mean_centroid_distance", s.mean_distance()},
          {"mean_genuine_spread", s.mean_spread()}};
}

json to_json(const EvalReport& r, const SeparationStats* separation) {
  json results = json::object();
  for (const auto& kr : r.results) {
    json entry = {{"overall", to_json(kr.overall)}};
    for (const auto& [name, m] : kr.protocols) entry[name] = to_json(m);
    results["k" + std::to_string(kr.k)] = entry;
  }
  json per_gesture = json::object();
  for (const auto& [g, m] : r.per_gesture) per_gesture[std::to_string(g)] = to_json(m);
  json matrix = json::array();
  for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < r.confusion.cols(); ++j) row.push_back(r.confusion(i, j));
    matrix.push_back(row);
  }
  json training = json::array();
  for (const auto& t : r.training)
    training.push_back({{"final_loss", t.final_loss}, {"iterations", t.iterations}, {"stop_reason", t.stop_reason}});
  json out = {{"folds", r.folds},
              {"subject_ids", r.subject_ids},
              {"results", results},
              {"per_gesture_k1", per_gesture},
              {"confusion_k1", {{"subject_ids", r.subject_ids}, {"matrix", matrix}}},
              {"training", training}};
  if (separation) out["replay_separation"] = to_json(*separation);
  return out;
}

std::string summary_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "protocol,k,attempts,genuine,adversarial,false_rejects,false_accepts,frr,far,bac,accuracy\n";
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("NA");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  for (const auto& kr : r.results) {
    auto row = [&](const std::string& name, const Metrics& m) {
      out << name << ',' << kr.k << ',' << m.attempts << ',' << m.genuine << ',' << m.adversarial << ','
          << m.false_rejects << ',' << m.false_accepts << ',' << cell(m.frr) << ',' << cell(m.far) << ','
          << cell(m.bac) << ',' << cell(m.accuracy) << '\n';
    };
    row("overall", kr.overall);
    for (const auto& [name, m] : kr.protocols) row(name, m);
  }
  return out.str();
}

std::vector<std::string> failed_gates(const json& report, const json& gates) {
  if (!gates.contains("gates") || !gates["gates"].is_array())
    throw Error(ErrorCode::InvalidConfig, "gates file needs a \"gates\" array");
  std::vector<std::string> failed;
  for (const auto& g : gates["gates"]) {
    std::string path, op;
    double value = 0.0;
    try {
      path = g.at("path").get<std::string>();
      op = g.at("op").get<std::string>();
      value = g.at("value").get<double>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, std::string("bad gate: ") + e.what());
    }
    const std::string label = path + " " + op + " " + std::to_string(value);
    json::json_pointer ptr;
    try {
      ptr = json::json_pointer(path);
    } catch (const json::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad gate path " + path);
    }
    if (!report.contains(ptr) || !report[ptr].is_number()) {
      failed.push_back(label + " (value undefined)");
      continue;
    }
    const double v = report[ptr].get<double>();
    bool ok = false;
    if (op == ">=") ok = v >= value;
    else if (op == "<=") ok = v <= value;
    else if (op == ">") ok = v > value;
    else if (op == "<") ok = v < value;
    else if (op == "==") ok = v == value;
    else throw Error(ErrorCode::InvalidConfig, "unknown gate operator " + op);
    if (!ok) failed.push_back(label + " (got " + std::to_string(v) + ")");
  }
  return failed;
}

const std::array<std::array<bool, 14>, 10>& gesture_factor_table() {
  // Columns: mobility F/B, U/D, L/R, propagation channel, arch shape, depth of
  // Spee, occlusion class, spacing, incisor, canine, molar, cusp, enamel
  // thickness, enamel rods.
  static const auto table = [] {
    constexpr std::array<const char*, 10> rows = {
        "01111111111111", "00101010011111", "00100111000111", "00101111000111", "10101111000111",
        "01101111000111", "10111101111101", "10101000011101", "10101001110101", "10101011101101"};
    std::array<std::array<bool, 14>, 10> t{};
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 14; ++j) t[i][j] = rows[i][j] == '1';
    return t;
  }();
  return table;
}

const std::array<std::array<double, 10>, 10>& reference_gesture_correlation() {
  static const std::array<std::array<double, 10>, 10> table = {{
      {100.00, 57.14, 50.00, 57.14, 57.14, 69.23, 71.43, 42.86, 50.00, 42.86},
      {57.14, 100.00, 54.55, 50.00, 38.46, 38.46, 42.86, 60.00, 41.67, 23.08},
      {50.00, 54.55, 100.00, 88.89, 70.00, 70.00, 35.71, 25.00, 45.45, 50.00},
      {57.14, 50.00, 88.89, 100.00, 80.00, 80.00, 42.86, 23.08, 41.67, 60.00},
      {57.14, 38.46, 70.00, 80.00, 100.00, 80.00, 53.85, 33.33, 54.55, 77.78},
      {69.23, 38.46, 70.00, 80.00, 80.00, 100.00, 42.86, 23.08, 41.67, 60.00},
      {71.43, 42.86, 35.71, 42.86, 53.85, 42.86, 100.00, 63.64, 72.73, 63.64},
      {42.86, 60.00, 25.00, 23.08, 33.33, 23.08, 63.64, 100.00, 66.67, 40.00},
      {50.00, 41.67, 45.45, 41.67, 54.55, 41.67, 72.73, 66.67, 100.00, 66.67},
      {42.86, 23.08, 50.00, 60.00, 77.78, 60.00, 63.64, 40.00, 66.67, 100.00},
  }};
  return table;
}

Eigen::Matrix<double, 10, 10> gesture_correlation() {
  const auto& t = gesture_factor_table();
  Eigen::Matrix<double, 10, 10> c;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j) {
      int both = 0, either = 0;
      for (std::size_t f = 0; f < 14; ++f) {
        both += t[i][f] && t[j][f];
        either += t[i][f] || t[j][f];
      }
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = either ? 100.0 * both / either : 100.0;
    }
  return c;
}

}  // namespace toothsonic
