#include "helpers.hpp"
#include "oracles.hpp"

#include "toothsonic/features.hpp"
#include "toothsonic/model.hpp"
#include "toothsonic/synth.hpp"

#include <set>

using namespace toothsonic;
using namespace testing;

namespace {

Eigen::ArrayXd chirp(Eigen::Index n, double f0, double f1) {
  Eigen::ArrayXd x(n);
  const double dur = static_cast<double>(n) / kSampleRate;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    x[i] = 0.5 * std::sin(2.0 * std::numbers::pi * (f0 * t + 0.5 * (f1 - f0) * t * t / dur));
  }
  return x;
}

// Harmonic tone: fundamental plus decaying overtones.
Eigen::ArrayXd tone(double f0, Eigen::Index n) {
  Eigen::ArrayXd x = Eigen::ArrayXd::Zero(n);
  for (int h = 1; h <= 8; ++h) x += sine(f0 * h, n, 1.0 / h, 0.3 * h);
  return x;
}

GestureSegment segment_of(const Eigen::ArrayXd& x) { return whole_signal_segment(x, 0.3); }

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("layout") {
    const auto& names = feature_names();
    std::set<std::string> unique(names.begin(), names.end());
    CHECK(unique.size() == 66);
    CHECK(names[layout::pitch_mean] == "pitch_mean");
    CHECK(names[layout::active_fraction] == "active_fraction");
  }

  TEST_CASE("mel filterbank covers the band") {
    MelFilterbank bank;
    CHECK(bank.filters() == 26);
    for (int m = 0; m < 26; ++m) CHECK(bank.weights().row(m).sum() > 0.0);
    for (Eigen::Index k = 1; k < kSpectrumBins; ++k) CHECK(bank.weights().col(k).sum() > 0.0);  // 40..8000 Hz
  }

  TEST_CASE("mfcc matches the brute-force oracle on a chirp") {
    const auto x = chirp(kSampleRate, 100.0, 7000.0);
    const auto fast = mfcc(frame_signal(x));
    const auto slow = brute_mfcc(x);
    REQUIRE(fast.rows() == slow.rows());
    REQUIRE(fast.cols() == 14);
    CHECK((fast - slow).cwiseAbs().maxCoeff() <= 1e-6);
  }

  TEST_CASE("mfcc scaling and silence") {
    const auto x = white(4000, 8);
    const auto a = mfcc(frame_signal(x)), b = mfcc(frame_signal(2.0 * x));
    CHECK((a.rightCols(13) - b.rightCols(13)).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((b.col(0) - a.col(0)).cwiseAbs().minCoeff() > 0.1);
    // constant log offset 2 ln 2 lands in coefficient 0 with the orthonormal weight sqrt(26)
    CHECK((b.col(0) - a.col(0)).array().mean() == doctest::Approx(std::sqrt(26.0) * std::log(4.0)));

    const auto silent = mfcc(frame_signal(Eigen::ArrayXd::Zero(800)));
    CHECK(silent(0, 0) == doctest::Approx(std::sqrt(26.0) * std::log(1e-10)).epsilon(1e-12));
    CHECK(silent.rightCols(13).cwiseAbs().maxCoeff() <= 1e-9);
  }

  TEST_CASE("delta mfcc") {
    CHECK(delta_mfcc(Eigen::MatrixXd::Constant(6, 14, 3.0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(delta_mfcc(Eigen::MatrixXd::Random(1, 14)).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd ramp = Eigen::MatrixXd::Zero(7, 14);
    for (int t = 0; t < 7; ++t) ramp(t, 4) = 0.75 * t - 1.0;
    const auto d = delta_mfcc(ramp);
    for (int t = 0; t < 7; ++t) CHECK(d(t, 4) == doctest::Approx(0.75));

    Eigen::MatrixXd m(5, 14);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::sin(0.37 * static_cast<double>(i * i));
    const auto dm = delta_mfcc(m);
    for (int t = 0; t < 5; ++t)
      for (int c = 0; c < 14; ++c) {
        double expect;
        if (t == 0) expect = m(1, c) - m(0, c);
        else if (t == 4) expect = m(4, c) - m(3, c);
        else expect = (m(t + 1, c) - m(t - 1, c)) / 2.0;
        CHECK(dm(t, c) == expect);
      }
  }

  TEST_CASE("active portion") {
    const auto none = active_portion(Eigen::MatrixXd::Zero(8, 14), 0.5);
    CHECK(none.active.count() == 0);
    CHECK(none.fraction == 0.0);

    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(6, 14);
    d(1, 0) = 0.01;
    d(4, 3) = -5.0;
    const auto all = active_portion(d, 0.0);
    CHECK(all.active.count() == 2);
    CHECK(all.active[1]);
    CHECK(all.active[4]);

    // noise floor with a 10 ms burst in the middle
    Eigen::ArrayXd x = 1e-3 * white(kSampleRate / 2, 3);
    const Eigen::Index centre = x.size() / 2;
    x.segment(centre - 80, 160) += white(160, 4);
    const auto seg = segment_of(x);
    const auto act = active_portion(delta_mfcc(mfcc(seg)), 0.5);
    const double burst_frame = (static_cast<double>(centre) - kFrameLen / 2.0) / kHop;
    REQUIRE(act.active.count() > 0);
    for (Eigen::Index i = 0; i < act.active.size(); ++i)
      if (act.active[i]) CHECK(std::abs(static_cast<double>(i) - burst_frame) <= 3.0);
  }

  TEST_CASE("pitch") {
    const auto s = pitch_track(segment_of(sine(200.0, 8000)), 0.3);
    CHECK(s.mean >= 198.0);
    CHECK(s.mean <= 202.0);
    CHECK(pitch_track(segment_of(Eigen::ArrayXd::Zero(8000)), 0.3).mean == 0.0);

    const auto noise = pitch_track(segment_of(white(kSampleRate, 12)), 0.3);
    CHECK((noise.hz == 0.0).count() >= 0.9 * static_cast<double>(noise.hz.size()));
  }

  TEST_CASE("spectral stats conventions") {
    Eigen::ArrayXd impulse = Eigen::ArrayXd::Zero(400);
    impulse[0] = 1.0;
    const auto flat = spectral_stats(power_spectrum(impulse));
    CHECK(flat.entropy == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(flat.flatness == doctest::Approx(1.0).epsilon(1e-9));

    Spectrum one;
    one.power = Eigen::ArrayXd::Zero(201);
    one.power[25] = 3.0;
    const auto single = spectral_stats(one);
    CHECK(single.entropy == doctest::Approx(0.0));
    CHECK(single.crest == doctest::Approx(201.0));
    CHECK(single.centroid_hz == doctest::Approx(1000.0));

    Spectrum zero;
    zero.power = Eigen::ArrayXd::Zero(201);
    const auto z = spectral_stats(zero);
    CHECK(z.entropy == 0.0);
    CHECK(z.flatness == 1.0);
    CHECK(z.crest == 1.0);
    CHECK(z.centroid_hz == 0.0);
  }

  TEST_CASE("spectral stats equal the direct formulas") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Eigen::ArrayXd frame = white(400, 70 + seed) * hamming(400) * (seed + 1.0);
      const auto p = brute_power(frame);
      const double total = p.sum(), n = 201.0;
      double entropy = 0, log_sum = 0, centroid = 0;
      for (Eigen::Index k = 0; k < 201; ++k) {
        const double q = p[k] / total;
        if (q > 0) entropy -= q * std::log(q);
        log_sum += std::log(std::max(p[k], 1e-12));
        centroid += 40.0 * k * q;
      }
      const auto st = spectral_stats(power_spectrum(frame));
      CHECK(st.entropy == doctest::Approx(entropy / std::log(n)).epsilon(1e-9));
      CHECK(st.flatness == doctest::Approx(std::exp(log_sum / n) / (total / n)).epsilon(1e-9));
      CHECK(st.crest == doctest::Approx(p.maxCoeff() / (total / n)).epsilon(1e-9));
      CHECK(st.centroid_hz == doctest::Approx(centroid).epsilon(1e-9));
      CHECK(st.flatness <= 1.0);
      CHECK(st.entropy >= 0.0);
      CHECK(st.entropy <= 1.0);
      CHECK(st.crest >= 1.0);
    }
  }

  TEST_CASE("sonorant and fricative frames") {
    const auto harmonic = sonorant_fricative_split(segment_of(tone(180.0, 8000)), 0.35);
    CHECK(harmonic.sonorant.size() >= 0.9 * (harmonic.sonorant.size() + harmonic.fricative.size()));

    std::size_t fric = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto seg = segment_of(white(8000, 400 + seed));
      const auto split = sonorant_fricative_split(seg, 0.35);
      fric += split.fricative.size();
      total += split.fricative.size() + split.sonorant.size();
    }
    CHECK(static_cast<double>(fric) >= 0.9 * static_cast<double>(total));

    const auto silent = sonorant_fricative_split(segment_of(Eigen::ArrayXd::Zero(4000)), 0.35);
    CHECK(silent.sonorant.empty());
    CHECK(silent.fricative.empty());
    CHECK(silent.log_ratio == 0.0);

    // the two sets partition the non-silent frames
    Eigen::ArrayXd mixed = white(8000, 5);
    mixed.segment(2000, 3000) = tone(220.0, 3000);
    mixed.segment(6000, 1000).setZero();
    const auto seg = segment_of(mixed);
    const auto split = sonorant_fricative_split(seg, 0.35);
    std::set<Eigen::Index> seen;
    for (auto i : split.sonorant) CHECK(seen.insert(i).second);
    for (auto i : split.fricative) CHECK(seen.insert(i).second);
    for (Eigen::Index i = 0; i < seg.frame_count(); ++i)
      CHECK((seen.count(i) == 1) == (seg.frames.windowed.row(i).squaredNorm() >= kSilenceEnergy));
  }

  TEST_CASE("log spectrum bands") {
    const auto noise = log_spectrum_bands(segment_of(white(kSampleRate, 31)));
    REQUIRE(noise.size() == 16);
    CHECK(10.0 * (noise.maxCoeff() - noise.minCoeff()) / std::log(10.0) <= 3.0);

    const auto s = log_spectrum_bands(segment_of(sine(1000.0, 8000)));
    Eigen::Index best;
    s.maxCoeff(&best);
    CHECK(best == log_band_of_bin()[25]);

    const auto silent = log_spectrum_bands(segment_of(Eigen::ArrayXd::Zero(4000)));
    CHECK((silent - std::log(1e-10)).abs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("levinson-durbin equals a direct Toeplitz solve") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Eigen::ArrayXd frame = (white(400, 600 + seed) + sine(300.0 + 40.0 * seed, 400)) * hamming(400);
      Eigen::VectorXd r(13);
      for (int k = 0; k <= 12; ++k) r[k] = (frame.head(400 - k) * frame.tail(400 - k)).sum();
      Eigen::MatrixXd toeplitz(12, 12);
      for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) toeplitz(i, j) = r[std::abs(i - j)];
      const Eigen::VectorXd direct = toeplitz.fullPivLu().solve(r.segment(1, 12));
      const auto ld = levinson_durbin(r, 12);
      CHECK(ld.stable);
      CHECK((ld.coefficients - direct).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK(ld.residual_energy <= r[0]);
      CHECK(ld.residual_energy == doctest::Approx(r[0] - direct.dot(r.segment(1, 12))).epsilon(1e-8));
    }
    Eigen::VectorXd degenerate(3);
    degenerate << 1.0, 1.0, 1.0;
    const auto bad = levinson_durbin(degenerate, 2);
    CHECK_FALSE(bad.stable);
    CHECK(bad.coefficients.isZero());
  }

  TEST_CASE("lpc recovers an AR(2) process and is flat on noise") {
    const auto e = white(kSampleRate, 44);
    Eigen::ArrayXd x = Eigen::ArrayXd::Zero(kSampleRate);
    for (Eigen::Index n = 2; n < x.size(); ++n) x[n] = 1.0 * x[n - 1] - 0.5 * x[n - 2] + e[n];
    const auto a = lpc(segment_of(x), 12);
    CHECK(a[0] >= 0.95);
    CHECK(a[0] <= 1.05);
    CHECK(a[1] >= -0.55);
    CHECK(a[1] <= -0.45);

    const auto w = lpc(segment_of(white(kSampleRate, 45)), 12);
    CHECK(w.cwiseAbs().maxCoeff() <= 0.1);
  }

  TEST_CASE("assemble is deterministic and well formed") {
    const auto p = make_subject(subject_seed(3, 1));
    const auto& env = env_profile("living_room");
    for (int g = 1; g <= 10; ++g) {
      const auto clip = bandpass(synth_attempt(p, {1, g, 0, AttemptKind::Genuine, 0}, env, 3).clip);
      const auto seg = whole_signal_segment(clip.samples, 0.3);
      const FeatureVector a = assemble(seg), b = assemble(seg);
      CHECK(a == b);
      CHECK(a.allFinite());
      CHECK(a[layout::spec_flatness] >= 0.0);
      CHECK(a[layout::spec_flatness] <= 1.0);
      CHECK(a[layout::spec_entropy] >= 0.0);
      CHECK(a[layout::spec_entropy] <= 1.0);
      CHECK(a[layout::active_fraction] >= 0.0);
      CHECK(a[layout::active_fraction] <= 1.0);
    }
  }

  TEST_CASE("subjects form separate clusters") {
    const auto& env = env_profile("living_room");
    for (int g : {1, 4, 7, 9}) {
      std::vector<FeatureVector> rows;
      for (int subject : {1, 2})
        for (int rep = 0; rep < 15; ++rep) {
          const auto p = make_subject(subject_seed(5, subject));
          const auto clip = bandpass(synth_attempt(p, {subject, g, rep, AttemptKind::Genuine, 0}, env, 5).clip);
          const auto segs = segment_gestures(clip);
          REQUIRE_FALSE(segs.empty());
          rows.push_back(assemble(segs.front()));
        }
      Eigen::MatrixXd x(30, kFeatureDim);
      for (int i = 0; i < 30; ++i) x.row(i) = rows[static_cast<std::size_t>(i)].transpose();
      const auto st = Standardizer::fit(x);
      double intra = 0, inter = 0;
      int n_intra = 0, n_inter = 0;
      for (int i = 0; i < 30; ++i)
        for (int j = i + 1; j < 30; ++j) {
          const double d = (st.transform(x.row(i).transpose()) - st.transform(x.row(j).transpose())).norm();
          if ((i < 15) == (j < 15)) {
            intra += d;
            ++n_intra;
          } else {
            inter += d;
            ++n_inter;
          }
        }
      CAPTURE(g);
      CHECK(inter / n_inter > intra / n_intra);
    }
  }
}
