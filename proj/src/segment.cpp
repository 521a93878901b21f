#include "toothsonic/segment.hpp"

#include "toothsonic/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace toothsonic {

namespace {

constexpr double kEnergyFloor = 1e-12;
constexpr double kVarianceFloor = 1e-2;

struct Run {
  Eigen::Index first = 0;
  Eigen::Index last = 0;  // inclusive
};

double frame_start_s(Eigen::Index start_sample) {
  return static_cast<double>(start_sample + (kFrameLen - kHop) / 2) / kSampleRate;
}

double frame_end_s(Eigen::Index start_sample) {
  return static_cast<double>(start_sample + (kFrameLen + kHop) / 2) / kSampleRate;
}

void fill_harmonics(GestureSegment& seg, double hr_threshold) {
  harmonic_ratio_track(seg);
  harmonic_mask(seg, hr_threshold);
}

// Vertex (value, position) of the parabola through r[i-1], r[i], r[i+1].
std::pair<double, double> parabolic_vertex(const Eigen::ArrayXd& r, Eigen::Index i) {
  const double a = r[i - 1], b = r[i], c = r[i + 1];
  const double curvature = a - 2.0 * b + c;
  if (!(curvature < 0.0)) return {b, static_cast<double>(i)};
  const double offset = std::clamp(0.5 * (a - c) / curvature, -1.0, 1.0);
  return {b - 0.25 * (a - c) * offset, static_cast<double>(i) + offset};
}

}  // namespace

void SegmenterConfig::validate() const {
  if (!(min_event_s > 0 && merge_gap_s > 0 && min_peak_snr_db > 0))
    throw Error(ErrorCode::InvalidConfig, "segmenter durations and SNR must be positive");
  if (!(hr_threshold > 0 && hr_threshold < 1))
    throw Error(ErrorCode::InvalidConfig, "hr_threshold must lie in (0, 1)");
}

HarmonicPeak harmonic_peak(const Eigen::Ref<const Eigen::ArrayXd>& raw_frame) {
  const Eigen::ArrayXd r = normalized_autocorrelation(raw_frame, kMaxPitchLag + 1);
  if (r[0] == 0.0) return {};
  Eigen::Index top = kMinPitchLag;
  for (Eigen::Index tau = kMinPitchLag + 1; tau <= kMaxPitchLag; ++tau)
    if (r[tau] > r[top]) top = tau;
  // Multiples of the period score as high as the period itself, so the lag
  // comes from the first local peak close to the maximum.
  Eigen::Index period = top;
  for (Eigen::Index tau = kMinPitchLag; tau < top; ++tau)
    if (r[tau] >= r[tau - 1] && r[tau] >= r[tau + 1] && r[tau] >= 0.95 * r[top]) {
      period = tau;
      break;
    }
  return {std::clamp(parabolic_vertex(r, top).first, 0.0, 1.0), parabolic_vertex(r, period).second};
}

const Eigen::ArrayXd& harmonic_ratio_track(GestureSegment& seg) {
  const Eigen::Index n = seg.frames.size();
  seg.harmonic_ratio.resize(n);
  seg.pitch_lag.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::ArrayXd frame = seg.frames.raw.row(i).transpose();
    const auto peak = harmonic_peak(frame);
    seg.harmonic_ratio[i] = peak.ratio;
    seg.pitch_lag[i] = peak.lag;
  }
  return seg.harmonic_ratio;
}

FrameMask harmonic_mask(const Eigen::ArrayXd& harmonic_ratio, double hr_threshold) {
  return harmonic_ratio >= hr_threshold;
}

const FrameMask& harmonic_mask(GestureSegment& seg, double hr_threshold) {
  seg.harmonic_mask = harmonic_mask(seg.harmonic_ratio, hr_threshold);
  return seg.harmonic_mask;
}

GestureSegment whole_signal_segment(const Eigen::ArrayXd& samples, double hr_threshold) {
  GestureSegment seg;
  seg.frames = frame_signal(samples);
  seg.start_s = frame_start_s(0);
  seg.end_s = frame_end_s(seg.frames.starts.back());
  fill_harmonics(seg, hr_threshold);
  return seg;
}

FrameObservations frame_observations(const FrameSet& frames) {
  const Eigen::Index n = frames.size();
  FrameObservations obs;
  obs.energy = frames.windowed.rowwise().squaredNorm().array();
  obs.log_energy = (obs.energy + kEnergyFloor).log();
  obs.log_flux.resize(n);
  Eigen::ArrayXd previous;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::ArrayXd frame = frames.windowed.row(i).transpose();
    Eigen::ArrayXd magnitude = power_spectrum(frame).power.sqrt();
    if (i > 0) {
      const double flux = (magnitude - previous).max(0.0).square().sum();
      obs.log_flux[i] = std::log(flux + kEnergyFloor);
    }
    previous = std::move(magnitude);
  }
  if (n > 1) obs.log_flux[0] = obs.log_flux[1];
  else if (n == 1) obs.log_flux[0] = std::log(kEnergyFloor);
  return obs;
}

namespace {

// Newton iterations on erf; |y| < 1.
double inverse_erf(double y) {
  double x = 0.0;
  for (int i = 0; i < 60; ++i) {
    const double step = (std::erf(x) - y) / (2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x));
    x -= step;
    if (std::abs(step) < 1e-14) break;
  }
  return x;
}

}  // namespace

EventHmm EventHmm::calibrate(const FrameObservations& obs) {
  const Eigen::Index n = obs.log_energy.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return obs.log_energy[a] < obs.log_energy[b]; });
  const auto low_count = std::max<Eigen::Index>(1, n / 5);
  const auto high_count = std::max<Eigen::Index>(1, n / 10);

  // Mean, variance and energy-flux covariance of a subset of frames.
  struct Moments {
    Eigen::Vector2d mean, var;
    double cov = 0.0;
  };
  auto moments = [&](auto first, auto last) {
    Moments m;
    const double count = static_cast<double>(last - first);
    Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sum_sq = Eigen::Vector2d::Zero();
    double cross = 0.0;
    for (auto it = first; it != last; ++it) {
      const Eigen::Vector2d x(obs.log_energy[*it], obs.log_flux[*it]);
      sum += x;
      sum_sq += x.cwiseProduct(x);
      cross += x[0] * x[1];
    }
    m.mean = sum / count;
    m.var = (sum_sq / count - m.mean.cwiseProduct(m.mean)).cwiseMax(0.0);
    m.cov = cross / count - m.mean[0] * m.mean[1];
    return m;
  };

  EventHmm hmm;
  const Moments low = moments(order.begin(), order.begin() + low_count);
  const Moments high = moments(order.end() - high_count, order.end());
  hmm.mean.row(1) = high.mean.transpose();
  hmm.variance.row(1) = high.var.cwiseMax(kVarianceFloor).transpose();

  // The quietest frames are the lower tail of the background log-energy
  // distribution. Undo the truncation assuming it is Gaussian, then carry the
  // correction over to the flux through its regression on energy.
  Eigen::Vector2d mean = low.mean, var = low.var;
  const double q = static_cast<double>(low_count) / static_cast<double>(n);
  if (q < 1.0 && low.var[0] > 0.0) {
    const double z = std::sqrt(2.0) * inverse_erf(2.0 * q - 1.0);
    const double lambda = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi) / q;
    const double shrink = 1.0 - z * lambda - lambda * lambda;
    const double sigma = std::sqrt(low.var[0] / shrink);
    mean[0] = low.mean[0] + sigma * lambda;
    var[0] = sigma * sigma;
    const double slope = low.cov / low.var[0];
    mean[1] = low.mean[1] + slope * (mean[0] - low.mean[0]);
    var[1] = low.var[1] + slope * slope * (var[0] - low.var[0]);
  }
  hmm.mean.row(0) = mean.transpose();
  hmm.variance.row(0) = var.cwiseMax(kVarianceFloor).transpose();
  return hmm;
}

Eigen::MatrixXd EventHmm::emission_log_likelihood(const FrameObservations& obs) const {
  const Eigen::Index n = obs.log_energy.size();
  Eigen::MatrixXd ll(n, 2);
  for (Eigen::Index s = 0; s < 2; ++s) {
    const double norm = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(variance(s, 0) * variance(s, 1));
    const Eigen::ArrayXd d0 = obs.log_energy - mean(s, 0);
    const Eigen::ArrayXd d1 = obs.log_flux - mean(s, 1);
    ll.col(s) = (norm - 0.5 * (d0.square() / variance(s, 0) + d1.square() / variance(s, 1))).matrix();
  }
  return ll;
}

std::vector<int> viterbi(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& log_transition,
                         const Eigen::VectorXd& log_initial) {
  const Eigen::Index n = log_emission.rows(), states = log_emission.cols();
  std::vector<int> path(static_cast<std::size_t>(n), 0);
  if (n == 0) return path;
  Eigen::VectorXd score = log_initial + log_emission.row(0).transpose();
  Eigen::MatrixXi back(n, states);
  for (Eigen::Index t = 1; t < n; ++t) {
    Eigen::VectorXd next(states);
    for (Eigen::Index j = 0; j < states; ++j) {
      Eigen::Index arg = 0;
      double best = score[0] + log_transition(0, j);
      for (Eigen::Index i = 1; i < states; ++i) {
        const double cand = score[i] + log_transition(i, j);
        if (cand > best) best = cand, arg = i;
      }
      next[j] = best + log_emission(t, j);
      back(t, j) = static_cast<int>(arg);
    }
    score = std::move(next);
  }
  Eigen::Index last = 0;
  for (Eigen::Index j = 1; j < states; ++j)
    if (score[j] > score[last]) last = j;
  path[static_cast<std::size_t>(n - 1)] = static_cast<int>(last);
  for (Eigen::Index t = n - 1; t > 0; --t)
    path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
  return path;
}

double path_log_probability(const std::vector<int>& path, const Eigen::MatrixXd& log_emission,
                            const Eigen::MatrixXd& log_transition, const Eigen::VectorXd& log_initial) {
  if (path.empty()) return 0.0;
  double lp = log_initial[path[0]] + log_emission(0, path[0]);
  for (std::size_t t = 1; t < path.size(); ++t)
    lp += log_transition(path[t - 1], path[t]) + log_emission(static_cast<Eigen::Index>(t), path[t]);
  return lp;
}

std::vector<GestureSegment> segment_gestures(const AudioClip& clip, const SegmenterConfig& cfg) {
  validate(clip);
  cfg.validate();
  if (clip.samples.size() < kFrameLen + 9 * kHop)
    throw Error(ErrorCode::TooShort, "clip shorter than 10 frames");
  const FrameSet frames = frame_clip(clip);
  const FrameObservations obs = frame_observations(frames);
  const EventHmm hmm = EventHmm::calibrate(obs);

  Eigen::Matrix2d log_transition;
  const double stay = std::log(hmm.self_transition), move = std::log(1.0 - hmm.self_transition);
  log_transition << stay, move, move, stay;
  const Eigen::Vector2d log_initial = Eigen::Vector2d::Constant(std::log(0.5));
  const auto path = viterbi(hmm.emission_log_likelihood(obs), log_transition, log_initial);

  std::vector<Run> runs;
  for (Eigen::Index t = 0; t < frames.size(); ++t) {
    if (path[static_cast<std::size_t>(t)] != 1) continue;
    if (!runs.empty() && runs.back().last == t - 1) runs.back().last = t;
    else runs.push_back({t, t});
  }

  const double hop_s = static_cast<double>(kHop) / kSampleRate;
  auto too_short = [&](const Run& run) {
    return static_cast<double>(run.last - run.first + 1) * hop_s < cfg.min_event_s - 1e-12;
  };
  std::erase_if(runs, too_short);

  // Merge runs separated by less than merge_gap_s.
  std::vector<Run> merged;
  for (const auto& run : runs) {
    if (!merged.empty()) {
      const double gap = static_cast<double>(run.first - merged.back().last - 1) * hop_s;
      if (gap < cfg.merge_gap_s) {
        merged.back().last = run.last;
        continue;
      }
    }
    merged.push_back(run);
  }

  // Background level: mean energy of the frames decoded as background, or of
  // the quietest 20% when every frame is an event.
  double background_sum = 0.0;
  Eigen::Index background_count = 0;
  for (Eigen::Index t = 0; t < frames.size(); ++t) {
    if (path[static_cast<std::size_t>(t)] != 0) continue;
    background_sum += obs.energy[t];
    ++background_count;
  }
  if (background_count == 0) {
    Eigen::ArrayXd sorted = obs.energy;
    std::sort(sorted.begin(), sorted.end());
    background_count = std::max<Eigen::Index>(1, frames.size() / 5);
    background_sum = sorted.head(background_count).sum();
  }
  const double background = background_sum / static_cast<double>(background_count) + kEnergyFloor;

  std::vector<GestureSegment> out;
  for (const auto& run : merged) {
    const Eigen::Index count = run.last - run.first + 1;
    const double peak = obs.energy.segment(run.first, count).maxCoeff();
    const double snr_db = to_db(peak / background);
    if (snr_db < cfg.min_peak_snr_db) continue;
    GestureSegment seg;
    seg.clip_ref = clip.meta.source;
    seg.first_frame = run.first;
    seg.frames = frames.slice(run.first, count);
    seg.start_s = frame_start_s(frames.starts[static_cast<std::size_t>(run.first)]);
    seg.end_s = frame_end_s(frames.starts[static_cast<std::size_t>(run.last)]);
    seg.gesture_label = clip.meta.gesture_id;
    seg.peak_snr_db = snr_db;
    fill_harmonics(seg, cfg.hr_threshold);
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace toothsonic
