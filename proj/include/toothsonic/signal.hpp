#pragma once

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace toothsonic {

inline constexpr int kSampleRate = 16000;
inline constexpr Eigen::Index kFrameLen = 400;  // 25 ms
inline constexpr Eigen::Index kHop = 160;       // 10 ms
inline constexpr Eigen::Index kSpectrumBins = kFrameLen / 2 + 1;
inline constexpr double kBinHz = static_cast<double>(kSampleRate) / kFrameLen;

/// Provenance carried alongside samples. All fields optional.
struct ClipMeta {
  std::optional<int> subject_id;
  std::optional<int> gesture_id;
  std::string kind;
  std::string source;
};

struct AudioClip {
  Eigen::ArrayXd samples;
  int sample_rate = kSampleRate;
  ClipMeta meta;

  Eigen::Index size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Throws InvalidInput if the clip violates the pipeline invariants
/// (16 kHz, finite samples).
void validate(const AudioClip& clip);

/// One analysis frame: raw samples and their offset in the parent clip.
struct Frame {
  Eigen::ArrayXd values;
  Eigen::Index start_index = 0;
};

using FrameMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Framed view of a signal. Row i of `raw` is the unwindowed frame starting at
/// starts[i]; row i of `windowed` is the same frame multiplied by a Hamming window.
struct FrameSet {
  FrameMatrix raw;
  FrameMatrix windowed;
  std::vector<Eigen::Index> starts;

  Eigen::Index size() const { return raw.rows(); }
  Frame raw_frame(Eigen::Index i) const { return {raw.row(i).transpose().array(), starts[i]}; }
  Frame windowed_frame(Eigen::Index i) const { return {windowed.row(i).transpose().array(), starts[i]}; }
  /// Rows [first, first + count) as a new set.
  FrameSet slice(Eigen::Index first, Eigen::Index count) const;
};

/// One-sided power spectrum |X_k|^2 / N for k = 0..N/2.
struct Spectrum {
  Eigen::ArrayXd power;
  double bin_hz = kBinHz;

  Eigen::Index bins() const { return power.size(); }
  /// Two-sided energy implied by the one-sided bins; equals the time-domain
  /// energy of the analysed frame.
  double energy() const;
};

/// Second-order IIR section, direct form II transposed, a0 normalised to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

using SosCascade = std::vector<Biquad>;

Biquad butterworth_highpass_section(double cutoff_hz, double q, double sample_rate);
Biquad butterworth_lowpass_section(double cutoff_hz, double q, double sample_rate);
Biquad peaking_section(double center_hz, double gain_db, double q, double sample_rate);
Biquad low_shelf_section(double corner_hz, double gain_db, double sample_rate);
Biquad high_shelf_section(double corner_hz, double gain_db, double sample_rate);

/// Butterworth filter of even `order` as a cascade of order/2 sections.
SosCascade butterworth_highpass(int order, double cutoff_hz, double sample_rate);
SosCascade butterworth_lowpass(int order, double cutoff_hz, double sample_rate);

/// Zero-state causal filtering through every section in turn.
Eigen::ArrayXd sos_filter(const SosCascade& sections, const Eigen::ArrayXd& x);

/// Magnitude response of the cascade at `freq_hz`.
double sos_gain(const SosCascade& sections, double freq_hz, double sample_rate);

/// Pole radii of every section (two per section).
std::vector<double> sos_pole_radii(const SosCascade& sections);

/// Cascade used by `bandpass`: 6th-order high-pass at low_hz, plus an 8th-order
/// low-pass at high_hz unless high_hz is the Nyquist frequency.
SosCascade design_bandpass(double low_hz, double high_hz, double sample_rate);

AudioClip bandpass(const AudioClip& clip, double low_hz = 20.0, double high_hz = 8000.0);

/// Symmetric Hamming window of length n.
Eigen::ArrayXd hamming(Eigen::Index n);

FrameSet frame_signal(const Eigen::ArrayXd& samples);
FrameSet frame_clip(const AudioClip& clip);

/// Power spectrum of one (already windowed) frame.
Spectrum power_spectrum(const Eigen::Ref<const Eigen::ArrayXd>& frame);
inline Spectrum power_spectrum(const Frame& frame) { return power_spectrum(frame.values); }

/// Full complex DFT of a real sequence (length n, zero padded), bins 0..n/2.
Eigen::ArrayXcd real_dft(const Eigen::Ref<const Eigen::ArrayXd>& x, Eigen::Index n);

/// Inverse of a Hermitian spectrum given as bins 0..n/2; returns n real samples.
Eigen::ArrayXd inverse_real_dft(const Eigen::ArrayXcd& half, Eigen::Index n);

/// r[tau] = sum x[n]x[n+tau] / sqrt(sum x[n]^2 * sum x[n+tau]^2) over the
/// overlapping part, tau = 0..max_lag, clamped to [-1, 1]. Zero-energy input
/// (or a zero-energy overlap) yields 0.
Eigen::ArrayXd normalized_autocorrelation(const Eigen::Ref<const Eigen::ArrayXd>& frame,
                                          Eigen::Index max_lag);
inline Eigen::ArrayXd normalized_autocorrelation(const Frame& frame, Eigen::Index max_lag) {
  return normalized_autocorrelation(frame.values, max_lag);
}

double energy(const Eigen::Ref<const Eigen::ArrayXd>& x);
double rms(const Eigen::Ref<const Eigen::ArrayXd>& x);
inline double to_db(double power_ratio) { return 10.0 * std::log10(power_ratio); }

}  // namespace toothsonic
