#pragma once

#include "toothsonic/signal.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace toothsonic {

using FrameMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Pitch-lag search range for the harmonic ratio: 16..320 samples (1000..50 Hz).
inline constexpr Eigen::Index kMinPitchLag = 16;
inline constexpr Eigen::Index kMaxPitchLag = 320;

struct SegmenterConfig {
  double min_event_s = 0.05;
  double merge_gap_s = 0.08;
  double min_peak_snr_db = 6.0;
  double hr_threshold = 0.3;

  /// Throws InvalidConfig unless every field is positive and hr_threshold < 1.
  void validate() const;
};

struct GestureSegment {
  std::string clip_ref;
  double start_s = 0.0;
  double end_s = 0.0;
  Eigen::Index first_frame = 0;  // index into the parent clip's frame grid
  FrameSet frames;
  Eigen::ArrayXd harmonic_ratio;
  Eigen::ArrayXd pitch_lag;  // interpolated best lag per frame, in samples
  FrameMask harmonic_mask;
  std::optional<int> gesture_label;
  double peak_snr_db = 0.0;

  Eigen::Index frame_count() const { return frames.size(); }
  double duration_s() const { return end_s - start_s; }
  double mean_hr() const { return harmonic_ratio.size() ? harmonic_ratio.mean() : 0.0; }
};

/// Segment wrapping a whole signal (no detection), with the harmonic track
/// and mask already filled in.
GestureSegment whole_signal_segment(const Eigen::ArrayXd& samples, double hr_threshold = 0.3);

struct HarmonicPeak {
  double ratio = 0.0;  // in [0, 1]
  double lag = 0.0;    // samples; 0 when the frame has no energy
};

/// Maximum of the normalized autocorrelation over kMinPitchLag..kMaxPitchLag,
/// refined by a three-point parabola around the discrete maximum.
HarmonicPeak harmonic_peak(const Eigen::Ref<const Eigen::ArrayXd>& raw_frame);

/// Fills seg.harmonic_ratio and seg.pitch_lag from the raw frames; returns the ratio track.
const Eigen::ArrayXd& harmonic_ratio_track(GestureSegment& seg);

FrameMask harmonic_mask(const Eigen::ArrayXd& harmonic_ratio, double hr_threshold);
/// Stores and returns the mask on the segment.
const FrameMask& harmonic_mask(GestureSegment& seg, double hr_threshold);

/// Per-frame HMM observations.
struct FrameObservations {
  Eigen::ArrayXd energy;      // windowed-frame energy
  Eigen::ArrayXd log_energy;  // log(energy + floor)
  Eigen::ArrayXd log_flux;    // log of positive spectral flux
};

FrameObservations frame_observations(const FrameSet& frames);

/// Two-state (background = 0, event = 1) HMM with diagonal Gaussian emissions
/// over (log-energy, log-flux).
struct EventHmm {
  Eigen::Matrix2d mean;      // row = state, col = observation dimension
  Eigen::Matrix2d variance;  // same layout
  double self_transition = 0.95;

  /// Background statistics from the lowest-energy 20% of frames, event
  /// statistics from the highest-energy 10%.
  static EventHmm calibrate(const FrameObservations& obs);

  /// n x 2 matrix of per-frame emission log-likelihoods.
  Eigen::MatrixXd emission_log_likelihood(const FrameObservations& obs) const;
};

/// Most likely state path given per-frame emission log-likelihoods (n x S),
/// log transition matrix (S x S, row = from) and log initial distribution.
/// Ties resolve to the lower state index.
std::vector<int> viterbi(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& log_transition,
                         const Eigen::VectorXd& log_initial);

/// Log-probability of a given state path under the same model.
double path_log_probability(const std::vector<int>& path, const Eigen::MatrixXd& log_emission,
                            const Eigen::MatrixXd& log_transition, const Eigen::VectorXd& log_initial);

/// Detects gesture events in an already band-passed clip. Segments are sorted,
/// disjoint, and carry their harmonic ratio track and mask.
std::vector<GestureSegment> segment_gestures(const AudioClip& clip, const SegmenterConfig& cfg = {});

}  // namespace toothsonic
