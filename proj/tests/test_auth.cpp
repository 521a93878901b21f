#include "helpers.hpp"

#include "toothsonic/auth.hpp"

#include <set>

using namespace toothsonic;
using namespace testing;

namespace {

AttemptRecord attempt(int claimed, int truth, AttemptKind kind, bool accept) {
  AttemptRecord a;
  a.claimed_id = claimed;
  a.true_id = truth;
  a.kind = kind;
  a.accept = accept;
  return a;
}

// Subjects sit on separate corners of feature space; `noise` blurs them.
FeatureTable cluster_table(int subjects, int gestures, int reps, double noise, std::uint64_t seed,
                           int replay_reps = 0) {
  Rng rng(seed);
  FeatureTable t;
  auto add = [&](int s, int g, int r, AttemptKind kind, double shift) {
    FeatureRow row{s, g, r, kind, FeatureVector::Zero()};
    for (int d = 0; d < kFeatureDim; ++d) row.x[d] = noise * rng.normal();
    row.x[s % kFeatureDim] += 5.0;
    row.x[(40 + g) % kFeatureDim] += 2.0;
    row.x[65] += shift;
    t.push_back(row);
  };
  for (int s = 1; s <= subjects; ++s)
    for (int g = 1; g <= gestures; ++g) {
      for (int r = 0; r < reps; ++r) add(s, g, r, AttemptKind::Genuine, 0.0);
      for (int r = 0; r < replay_reps; ++r) add(s, g, r, AttemptKind::Replay, 6.0);
    }
  return t;
}

EvalOptions quick_options(int folds, std::vector<int> ks = {1, 3, 5}) {
  EvalOptions opt;
  opt.eval.folds = folds;
  opt.eval.ks = std::move(ks);
  opt.train.hidden = {16};
  opt.train.max_iters = 100;
  opt.seed = 3;
  opt.jobs = 2;
  return opt;
}

}  // namespace

TEST_SUITE("auth") {
  TEST_CASE("single-gesture decisions") {
    const std::vector<int> ids = {3, 8};
    const AuthPolicy policy;
    const auto yes = decide(ids, 3, {Eigen::Vector2d(std::log(0.9), std::log(0.1))}, policy);
    CHECK(yes.accept);
    CHECK(yes.predicted_id == 3);
    CHECK(yes.confidence == doctest::Approx(0.9).epsilon(1e-12));

    AuthPolicy lenient;
    lenient.tau = 0.01;
    const auto no = decide(ids, 8, {Eigen::Vector2d(std::log(0.9), std::log(0.1))}, lenient);
    CHECK_FALSE(no.accept);
    CHECK(no.predicted_id == 3);

    CHECK(error_of([&] { decide(ids, 4, {Eigen::Vector2d::Zero()}, policy); }) == ErrorCode::UnknownSubject);
    CHECK(error_of([&] { decide(ids, 3, {}, policy); }) == ErrorCode::InvalidInput);
  }

  TEST_CASE("three-gesture log-mean fusion by hand") {
    const std::vector<int> ids = {1, 2};
    std::vector<Eigen::VectorXd> lps;
    for (double p : {0.4, 0.6, 0.7}) lps.push_back(Eigen::Vector2d(std::log(p), std::log(1 - p)));
    // mean logs: (ln .4 + ln .6 + ln .7)/3 vs (ln .6 + ln .4 + ln .3)/3
    const auto d = decide(ids, 1, lps, AuthPolicy{});
    CHECK(d.confidence == doctest::Approx(0.5701425119992315).epsilon(1e-12));
    CHECK(d.accept);
    CHECK(d.predicted_id == 1);

    AuthPolicy strict;
    strict.tau = 0.6;
    CHECK_FALSE(decide(ids, 1, lps, strict).accept);

    AuthPolicy vote;
    vote.fusion = Fusion::MajorityVote;
    const auto v = decide(ids, 1, lps, vote);
    CHECK(v.confidence == doctest::Approx(2.0 / 3.0));
    CHECK(v.accept);
  }

  TEST_CASE("k = 1 fusion is the single-gesture posterior") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::VectorXd logits(5);
      for (auto& v : logits) v = rng.uniform(-4, 4);
      const Eigen::VectorXd lp = Mlp<double>::log_softmax(logits);
      const auto d = decide({0, 1, 2, 3, 4}, 2, {lp}, AuthPolicy{});
      CHECK(d.confidence == doctest::Approx(std::exp(lp[2])).epsilon(1e-12));
      CHECK(d.predicted_id == argmax_lowest(lp));
    }
  }

  TEST_CASE("metric arithmetic") {
    std::vector<AttemptRecord> log;
    for (int i = 0; i < 10; ++i) log.push_back(attempt(1, 1, AttemptKind::Genuine, i >= 2));
    for (int i = 0; i < 20; ++i) log.push_back(attempt(1, 2, AttemptKind::Mimic, i == 0));
    const auto m = compute_metrics(log);
    CHECK(m.frr.value() == 0.2);
    CHECK(m.far.value() == 0.05);
    CHECK(m.bac.value() == 0.875);
    CHECK(m.accuracy.value() == doctest::Approx(27.0 / 30.0));

    for (auto& a : log) a.accept = a.genuine();
    const auto perfect = compute_metrics(log);
    CHECK(perfect.frr.value() == 0.0);
    CHECK(perfect.far.value() == 0.0);
    CHECK(perfect.bac.value() == 1.0);
    CHECK(perfect.accuracy.value() == 1.0);

    for (auto& a : log) a.accept = !a.genuine();
    CHECK(compute_metrics(log).bac.value() == 0.0);

    const auto only_genuine = compute_metrics({attempt(1, 1, AttemptKind::Genuine, true)});
    CHECK_FALSE(only_genuine.far.has_value());
    CHECK_FALSE(only_genuine.bac.has_value());
    CHECK(to_json(only_genuine)["far"].is_null());
    CHECK_FALSE(compute_metrics({}).accuracy.has_value());
  }

  TEST_CASE("raising tau never lowers FRR or raises FAR") {
    Rng rng(6);
    std::vector<std::vector<Eigen::VectorXd>> inputs;
    std::vector<std::pair<int, int>> ids;
    for (int i = 0; i < 300; ++i) {
      Eigen::VectorXd logits(4);
      for (auto& v : logits) v = rng.uniform(-3, 3);
      inputs.push_back({Mlp<double>::log_softmax(logits)});
      ids.push_back({rng.integer(0, 3), rng.integer(0, 3)});
    }
    double last_frr = -1, last_far = 2;
    for (double tau = 0.05; tau < 1.0; tau += 0.05) {
      AuthPolicy p;
      p.tau = tau;
      std::vector<AttemptRecord> log;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto a = attempt(ids[i].first, ids[i].second, ids[i].first == ids[i].second ? AttemptKind::Genuine : AttemptKind::Mimic, false);
        a.accept = decide({0, 1, 2, 3}, a.claimed_id, inputs[i], p).accept;
        log.push_back(a);
      }
      const auto m = compute_metrics(log);
      CHECK(*m.frr >= last_frr);
      CHECK(*m.far <= last_far);
      last_frr = *m.frr;
      last_far = *m.far;
    }
  }

  TEST_CASE("attack protocols") {
    std::vector<AttemptRecord> genuine;
    for (int s = 1; s <= 25; ++s)
      for (int m = 0; m < 3; ++m) genuine.push_back(attempt(s, s, AttemptKind::Genuine, true));
    std::vector<int> subjects(25);
    std::iota(subjects.begin(), subjects.end(), 1);
    const auto mimic = mimic_protocol(genuine, subjects);
    CHECK(mimic.size() == 25u * 24u * 3u);
    for (const auto& a : mimic) {
      CHECK(a.claimed_id != a.true_id);
      CHECK(a.kind == AttemptKind::Mimic);
    }
    CHECK(mimic_protocol({attempt(1, 1, AttemptKind::Genuine, true)}, {1}).empty());

    FeatureTable t = cluster_table(3, 1, 0, 0.1, 1, 2);
    const auto replay = replay_protocol(t, {{0}, {4}}, 0);
    REQUIRE(replay.size() == 2);
    CHECK(replay[0].claimed_id == 1);
    CHECK(replay[1].claimed_id == 3);
    CHECK(replay[1].kind == AttemptKind::Replay);
    CHECK_FALSE(replay[1].genuine());
    CHECK(error_of([&] { replay_protocol(t, {}, 0); }) == ErrorCode::EmptyProtocol);
  }

  TEST_CASE("fold assignment partitions every subject") {
    const auto t = cluster_table(4, 3, 13, 0.1, 2, 3);
    const auto folds = assign_folds(t, 5, 11);
    REQUIRE(folds.size() == t.size());
    std::map<std::tuple<int, int, int>, std::vector<int>> per_group;
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(folds[i] >= 0);
      CHECK(folds[i] < 5);
      per_group[{t[i].subject_id, t[i].gesture_id, static_cast<int>(t[i].kind)}].push_back(folds[i]);
    }
    for (const auto& [key, fs] : per_group) {
      std::map<int, int> count;
      for (int f : fs) ++count[f];
      // sizes differ by at most one across folds
      int lo = 1 << 30, hi = 0;
      for (int f = 0; f < 5; ++f) {
        lo = std::min(lo, count[f]);
        hi = std::max(hi, count[f]);
      }
      CHECK(hi - lo <= 1);
    }
    CHECK(assign_folds(t, 5, 11) == folds);
    CHECK(error_of([&] { assign_folds(t, 14, 11); }) == ErrorCode::InvalidProtocol);
  }

  TEST_CASE("attempt tuples use distinct gestures") {
    const auto t = cluster_table(1, 5, 4, 0.1, 3);
    std::vector<std::size_t> rows(t.size());
    std::iota(rows.begin(), rows.end(), 0);
    for (int k : {1, 3, 5}) {
      const auto tuples = attempt_tuples(t, rows, k, 9);
      CHECK(tuples.size() == rows.size());
      for (const auto& tup : tuples) {
        CHECK(static_cast<int>(tup.size()) == k);
        std::set<int> g;
        for (auto r : tup) g.insert(t[r].gesture_id);
        CHECK(static_cast<int>(g.size()) == k);
      }
    }
    CHECK(attempt_tuples(t, rows, 6, 9).empty());
  }

  TEST_CASE("cross-validation on a separable corpus") {
    const auto t = cluster_table(4, 5, 10, 0.05, 5, 2);
    const auto opt = quick_options(10);
    const auto report = crossvalidate(t, opt);
    CHECK(report.folds == 10);
    for (int k : {1, 3, 5}) {
      const auto& r = report.at(k);
      CHECK(*r.overall.frr == 0.0);
      CHECK(*r.overall.far == 0.0);
      CHECK(*r.overall.bac == 1.0);

      // brute-force recount over the attempt log
      std::size_t gen = 0, fr = 0, adv = 0, fa = 0, mimic = 0;
      for (const auto& a : r.attempts) {
        if (a.kind != AttemptKind::Genuine && a.kind != AttemptKind::Mimic) continue;
        mimic += a.kind == AttemptKind::Mimic;
        if (a.claimed_id == a.true_id && a.kind == AttemptKind::Genuine) {
          ++gen;
          fr += !a.accept;
        } else {
          ++adv;
          fa += a.accept;
        }
      }
      CHECK(r.overall.genuine == gen);
      CHECK(r.overall.false_rejects == fr);
      CHECK(r.overall.adversarial == adv);
      CHECK(r.overall.false_accepts == fa);
      CHECK(mimic == gen * 3);
    }
    // k = 1: every genuine row is one attempt and lands once in the confusion matrix
    CHECK(report.at(1).overall.genuine == 200);
    CHECK(report.confusion.sum() == 200);
    for (int s = 0; s < 4; ++s) CHECK(report.confusion.row(s).sum() == 50);
    CHECK(report.per_gesture.size() == 5);
    CHECK(report.at(1).protocols.at("replay").adversarial == 40);

    CHECK(to_json(report).dump() == to_json(crossvalidate(t, opt)).dump());
  }

  TEST_CASE("leave-one-out folds") {
    const auto t = cluster_table(3, 1, 4, 0.05, 8);
    const auto report = crossvalidate(t, quick_options(4, {1}));
    CHECK(report.at(1).overall.genuine == 12);
    CHECK(error_of([&] { crossvalidate(t, quick_options(5, {1})); }) == ErrorCode::InvalidProtocol);
  }

  TEST_CASE("replay separation") {
    const auto t = cluster_table(3, 2, 10, 0.1, 9, 4);
    const auto sep = replay_separation(t);
    CHECK(sep.groups.size() == 6);
    CHECK(sep.separated_fraction() == 1.0);
    CHECK(sep.mean_distance() > sep.mean_spread());
  }

  TEST_CASE("gates") {
    const nlohmann::json report = {{"results", {{"k1", {{"overall", {{"bac", 0.93}, {"far", nullptr}}}}}}}};
    const nlohmann::json pass = {{"gates", {{{"path", "/results/k1/overall/bac"}, {"op", ">="}, {"value", 0.9}}}}};
    CHECK(failed_gates(report, pass).empty());
    const nlohmann::json fail = {{"gates",
                                  {{{"path", "/results/k1/overall/bac"}, {"op", ">"}, {"value", 0.95}},
                                   {{"path", "/results/k1/overall/far"}, {"op", "<="}, {"value", 0.1}},
                                   {{"path", "/results/k9/overall/bac"}, {"op", "<"}, {"value", 1}}}}};
    CHECK(failed_gates(report, fail).size() == 3);
    const nlohmann::json bad_op = {{"gates", {{{"path", "/results/k1/overall/bac"}, {"op", "~"}, {"value", 1}}}}};
    CHECK(error_of([&] { failed_gates(report, bad_op); }) == ErrorCode::InvalidConfig);
    CHECK(error_of([&] { failed_gates(report, {{"nope", 1}}); }) == ErrorCode::InvalidConfig);
  }

  TEST_CASE("gesture correlation") {
    const auto c = gesture_correlation();
    const auto& f = gesture_factor_table();
    for (int i = 0; i < 10; ++i) {
      CHECK(c(i, i) == 100.0);
      for (int j = 0; j < 10; ++j) {
        CHECK(c(i, j) == c(j, i));
        std::set<int> a, b, inter, uni;
        for (int k = 0; k < 14; ++k) {
          if (f[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]) a.insert(k);
          if (f[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]) b.insert(k);
        }
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(inter, inter.end()));
        std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::inserter(uni, uni.end()));
        CHECK(c(i, j) == doctest::Approx(100.0 * inter.size() / uni.size()).epsilon(1e-12));
      }
    }
    // occlusion sliding vs molar sliding: reported, not asserted
    const double ref = reference_gesture_correlation()[0][1];
    MESSAGE("corr(occlusion sliding, molar sliding) = " << c(0, 1) << " vs reference " << ref << ", deviation "
                                                        << c(0, 1) - ref);
  }
}
