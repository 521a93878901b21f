#pragma once

#include "toothsonic/segment.hpp"
#include "toothsonic/signal.hpp"

#include <Eigen/Core>

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace toothsonic {

inline constexpr int kMfccCount = 14;
inline constexpr int kMelFilters = 26;
inline constexpr int kLogSpectrumBands = 16;
inline constexpr int kLpcOrder = 12;
inline constexpr int kFeatureDim = 66;
inline constexpr double kLogFloor = 1e-10;
/// Windowed-frame energy below which a frame counts as silence.
inline constexpr double kSilenceEnergy = 1e-10;

using FeatureVector = Eigen::Matrix<double, kFeatureDim, 1>;

/// Column names of the 66-value layout, in file order.
const std::array<std::string, kFeatureDim>& feature_names();

/// Offsets of each block inside FeatureVector.
namespace layout {
inline constexpr int mfcc_mean = 0;
inline constexpr int mfcc_std = 14;
inline constexpr int pitch_mean = 28;
inline constexpr int pitch_std = 29;
inline constexpr int hr_mean = 30;
inline constexpr int hr_max = 31;
inline constexpr int spec_entropy = 32;
inline constexpr int spec_flatness = 33;
inline constexpr int spec_crest = 34;
inline constexpr int spec_centroid = 35;
inline constexpr int sonorant_fricative_ratio = 36;
inline constexpr int logspec_bands = 37;
inline constexpr int lpc = 53;
inline constexpr int active_fraction = 65;
}  // namespace layout

struct FeatureConfig {
  double theta_active = 0.5;
  double theta_sonorant = 0.35;
  double hr_threshold = 0.3;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters equally spaced on the mel scale between low_hz and high_hz.
class MelFilterbank {
 public:
  explicit MelFilterbank(int filters = kMelFilters, double low_hz = 20.0, double high_hz = 8000.0,
                         Eigen::Index bins = kSpectrumBins, double bin_hz = kBinHz);

  /// filters x bins weight matrix.
  const Eigen::MatrixXd& weights() const { return weights_; }
  int filters() const { return static_cast<int>(weights_.rows()); }

  /// Filter energies for one power spectrum.
  Eigen::ArrayXd apply(const Eigen::ArrayXd& power) const { return (weights_ * power.matrix()).array(); }

 private:
  Eigen::MatrixXd weights_;
};

/// Orthonormal DCT-II as a (rows x n) matrix keeping the first `rows` coefficients.
Eigen::MatrixXd dct2_matrix(Eigen::Index rows, Eigen::Index n);

/// frames x 201 matrix of power spectra of the windowed frames.
Eigen::MatrixXd power_spectra(const FrameSet& frames);

/// frames x 14 cepstral coefficients.
Eigen::MatrixXd mfcc(const FrameSet& frames);
inline Eigen::MatrixXd mfcc(const GestureSegment& seg) { return mfcc(seg.frames); }

/// Central difference over time, one-sided at the edges; all zero for a single frame.
Eigen::MatrixXd delta_mfcc(const Eigen::MatrixXd& coefficients);

struct ActivePortion {
  FrameMask active;
  double fraction = 0.0;
};

/// Frame i is active when the L2 norm of delta row i, divided by the RMS row
/// norm of the segment, exceeds theta_active. An all-zero delta has no active frames.
ActivePortion active_portion(const Eigen::MatrixXd& delta, double theta_active);

struct PitchTrack {
  Eigen::ArrayXd hz;  // 0 for unvoiced frames
  double mean = 0.0;
  double std = 0.0;
};

/// Pitch from the interpolated autocorrelation lag on frames whose harmonic
/// ratio reaches hr_threshold.
PitchTrack pitch_track(const GestureSegment& seg, double hr_threshold);

struct SpectralStats {
  double entropy = 0.0;
  double flatness = 1.0;
  double crest = 1.0;
  double centroid_hz = 0.0;
};

SpectralStats spectral_stats(const Spectrum& spectrum);
/// Mean of the per-frame statistics.
SpectralStats spectral_stats(const GestureSegment& seg);

/// Largest real-cepstrum value in the 1..20 ms quefrency range of a windowed frame.
double cepstral_peak(const Eigen::Ref<const Eigen::ArrayXd>& windowed_frame);

struct SonorantSplit {
  std::vector<Eigen::Index> sonorant;
  std::vector<Eigen::Index> fricative;
  double log_ratio = 0.0;  // log10(sonorant energy / fricative energy), clamped to [-6, 6]
};

SonorantSplit sonorant_fricative_split(const GestureSegment& seg, double theta_sonorant);

/// Mean over frames of the log mean power in 16 equal-width mel bands on 20..8000 Hz.
Eigen::ArrayXd log_spectrum_bands(const GestureSegment& seg);

/// Band index of each spectrum bin (-1 outside 20..8000 Hz).
const std::vector<int>& log_band_of_bin();

struct LpcResult {
  Eigen::VectorXd coefficients;  // a_1..a_p with x[n] ~ sum a_k x[n-k]
  double residual_energy = 0.0;
  bool stable = true;
};

/// Levinson-Durbin recursion on autocorrelation values r[0..order].
LpcResult levinson_durbin(const Eigen::VectorXd& autocorr, int order);

/// Mean LPC coefficients over non-silent frames.
Eigen::VectorXd lpc(const GestureSegment& seg, int order = kLpcOrder);

/// Full 66-value descriptor.
FeatureVector assemble(const GestureSegment& seg, const FeatureConfig& cfg = {});

}  // namespace toothsonic
