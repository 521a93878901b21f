#include "toothsonic/features.hpp"

#include "toothsonic/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace toothsonic {

namespace {

constexpr double kBandLowHz = 20.0;
constexpr double kBandHighHz = 8000.0;
constexpr double kFlatnessFloor = 1e-12;

const MelFilterbank& default_filterbank() {
  static const MelFilterbank bank;
  return bank;
}

const Eigen::MatrixXd& default_dct() {
  static const Eigen::MatrixXd dct = dct2_matrix(kMfccCount, kMelFilters);
  return dct;
}

Eigen::MatrixXd mfcc_from_power(const Eigen::MatrixXd& power) {
  // power: frames x bins. Mel energies: frames x filters.
  const Eigen::MatrixXd mel = power * default_filterbank().weights().transpose();
  const Eigen::MatrixXd log_mel = mel.array().max(kLogFloor).log().matrix();
  return log_mel * default_dct().transpose();
}

SpectralStats mean_spectral_stats(const Eigen::MatrixXd& power) {
  SpectralStats acc{0.0, 0.0, 0.0, 0.0};
  const Eigen::Index n = power.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    Spectrum s;
    s.power = power.row(i).transpose().array();
    const auto st = spectral_stats(s);
    acc.entropy += st.entropy;
    acc.flatness += st.flatness;
    acc.crest += st.crest;
    acc.centroid_hz += st.centroid_hz;
  }
  const double inv = 1.0 / static_cast<double>(n);
  return {acc.entropy * inv, acc.flatness * inv, acc.crest * inv, acc.centroid_hz * inv};
}

Eigen::ArrayXd log_bands_from_power(const Eigen::MatrixXd& power) {
  const auto& band_of = log_band_of_bin();
  Eigen::ArrayXd counts = Eigen::ArrayXd::Zero(kLogSpectrumBands);
  for (int b : band_of)
    if (b >= 0) counts[b] += 1.0;
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(kLogSpectrumBands);
  for (Eigen::Index i = 0; i < power.rows(); ++i) {
    Eigen::ArrayXd band = Eigen::ArrayXd::Zero(kLogSpectrumBands);
    for (Eigen::Index k = 0; k < power.cols(); ++k) {
      const int b = band_of[static_cast<std::size_t>(k)];
      if (b >= 0) band[b] += power(i, k);
    }
    acc += (band / counts).max(kLogFloor).log();
  }
  return acc / static_cast<double>(power.rows());
}

Eigen::VectorXd autocorrelation(const Eigen::Ref<const Eigen::ArrayXd>& x, int order) {
  Eigen::VectorXd r(order + 1);
  const Eigen::Index n = x.size();
  for (int k = 0; k <= order; ++k)
    r[k] = k < n ? x.head(n - k).matrix().dot(x.tail(n - k).matrix()) : 0.0;
  return r;
}

void require_frames(const GestureSegment& seg) {
  if (seg.frames.size() == 0) throw Error(ErrorCode::EmptyInput, "segment has no frames");
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  // Copied so the buffer has Eigen's alignment: the vectorized sum of a
  // std::vector depends on where the allocator put it.
  const Eigen::ArrayXd a = Eigen::Map<const Eigen::ArrayXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  const double mean = a.mean();
  return {mean, std::sqrt((a - mean).square().mean())};
}

}  // namespace

const std::array<std::string, kFeatureDim>& feature_names() {
  static const auto names = [] {
    std::array<std::string, kFeatureDim> n;
    for (int i = 0; i < kMfccCount; ++i) {
      n[layout::mfcc_mean + i] = "mfcc_mean_" + std::to_string(i);
      n[layout::mfcc_std + i] = "mfcc_std_" + std::to_string(i);
    }
    n[layout::pitch_mean] = "pitch_mean";
    n[layout::pitch_std] = "pitch_std";
    n[layout::hr_mean] = "hr_mean";
    n[layout::hr_max] = "hr_max";
    n[layout::spec_entropy] = "spec_entropy";
    n[layout::spec_flatness] = "spec_flatness";
    n[layout::spec_crest] = "spec_crest";
    n[layout::spec_centroid] = "spec_centroid";
    n[layout::sonorant_fricative_ratio] = "sonorant_fricative_ratio";
    for (int i = 0; i < kLogSpectrumBands; ++i) n[layout::logspec_bands + i] = "logspec_" + std::to_string(i);
    for (int i = 0; i < kLpcOrder; ++i) n[layout::lpc + i] = "lpc_" + std::to_string(i + 1);
    n[layout::active_fraction] = "active_fraction";
    return n;
  }();
  return names;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(int filters, double low_hz, double high_hz, Eigen::Index bins, double bin_hz)
    : weights_(Eigen::MatrixXd::Zero(filters, bins)) {
  const Eigen::ArrayXd mel = Eigen::ArrayXd::LinSpaced(filters + 2, hz_to_mel(low_hz), hz_to_mel(high_hz));
  for (int m = 0; m < filters; ++m) {
    const double lo = mel_to_hz(mel[m]), mid = mel_to_hz(mel[m + 1]), hi = mel_to_hz(mel[m + 2]);
    for (Eigen::Index k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      if (f > lo && f <= mid) weights_(m, k) = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) weights_(m, k) = (hi - f) / (hi - mid);
    }
  }
}

Eigen::MatrixXd dct2_matrix(Eigen::Index rows, Eigen::Index n) {
  Eigen::MatrixXd d(rows, n);
  for (Eigen::Index k = 0; k < rows; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (Eigen::Index j = 0; j < n; ++j)
      d(k, j) = scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * j + 1.0) / (2.0 * n));
  }
  return d;
}

Eigen::MatrixXd power_spectra(const FrameSet& frames) {
  Eigen::MatrixXd out(frames.size(), kSpectrumBins);
  for (Eigen::Index i = 0; i < frames.size(); ++i) {
    const Eigen::ArrayXd frame = frames.windowed.row(i).transpose();
    out.row(i) = power_spectrum(frame).power.matrix().transpose();
  }
  return out;
}

Eigen::MatrixXd mfcc(const FrameSet& frames) {
  if (frames.size() == 0) throw Error(ErrorCode::EmptyInput, "mfcc: no frames");
  return mfcc_from_power(power_spectra(frames));
}

Eigen::MatrixXd delta_mfcc(const Eigen::MatrixXd& c) {
  const Eigen::Index n = c.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, c.cols());
  if (n < 2) return d;
  d.row(0) = c.row(1) - c.row(0);
  d.row(n - 1) = c.row(n - 1) - c.row(n - 2);
  for (Eigen::Index t = 1; t + 1 < n; ++t) d.row(t) = 0.5 * (c.row(t + 1) - c.row(t - 1));
  return d;
}

ActivePortion active_portion(const Eigen::MatrixXd& delta, double theta_active) {
  ActivePortion out;
  const Eigen::Index n = delta.rows();
  out.active = FrameMask::Constant(n, false);
  if (n == 0) return out;
  const Eigen::ArrayXd norms = delta.rowwise().norm().array();
  const double scale = std::sqrt(norms.square().mean());
  if (scale <= 0.0) return out;
  out.active = (norms / scale) > theta_active;
  out.fraction = static_cast<double>(out.active.count()) / static_cast<double>(n);
  return out;
}

PitchTrack pitch_track(const GestureSegment& seg, double hr_threshold) {
  const Eigen::Index n = seg.harmonic_ratio.size();
  PitchTrack out;
  out.hz = Eigen::ArrayXd::Zero(n);
  std::vector<double> voiced;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (seg.harmonic_ratio[i] >= hr_threshold && seg.pitch_lag[i] > 0.0) {
      out.hz[i] = kSampleRate / seg.pitch_lag[i];
      voiced.push_back(out.hz[i]);
    }
  }
  std::tie(out.mean, out.std) = mean_std(voiced);
  return out;
}

SpectralStats spectral_stats(const Spectrum& spectrum) {
  const Eigen::ArrayXd& p = spectrum.power;
  const double total = p.sum();
  if (!(total > 0.0)) return {};
  const double nbins = static_cast<double>(p.size());
  const Eigen::ArrayXd q = p / total;
  const double entropy = -(q > 0.0).select(q * q.max(1e-300).log(), 0.0).sum() / std::log(nbins);
  const double mean = total / nbins;
  const double geometric = std::exp(p.max(kFlatnessFloor).log().mean());
  const Eigen::ArrayXd freqs = Eigen::ArrayXd::LinSpaced(p.size(), 0.0, spectrum.bin_hz * (nbins - 1));
  return {std::clamp(entropy, 0.0, 1.0), std::min(1.0, geometric / mean), p.maxCoeff() / mean,
          (freqs * q).sum()};
}

SpectralStats spectral_stats(const GestureSegment& seg) {
  require_frames(seg);
  return mean_spectral_stats(power_spectra(seg.frames));
}

double cepstral_peak(const Eigen::Ref<const Eigen::ArrayXd>& windowed_frame) {
  const Eigen::Index n = windowed_frame.size();
  const Eigen::ArrayXd log_power =
      (real_dft(windowed_frame, n).abs2() / static_cast<double>(n)).max(kLogFloor).log();
  const Eigen::ArrayXd cepstrum = inverse_real_dft(log_power.cast<std::complex<double>>(), n);
  return cepstrum.segment(kMinPitchLag, kMaxPitchLag - kMinPitchLag + 1).maxCoeff();
}

SonorantSplit sonorant_fricative_split(const GestureSegment& seg, double theta_sonorant) {
  require_frames(seg);
  SonorantSplit out;
  double sonorant_energy = 0.0, fricative_energy = 0.0;
  for (Eigen::Index i = 0; i < seg.frames.size(); ++i) {
    const Eigen::ArrayXd frame = seg.frames.windowed.row(i).transpose();
    const double e = energy(frame);
    if (e < kSilenceEnergy) continue;
    const double peak = cepstral_peak(frame);
    if (peak > 0.0 && peak >= theta_sonorant) {
      out.sonorant.push_back(i);
      sonorant_energy += e;
    } else {
      out.fricative.push_back(i);
      fricative_energy += e;
    }
  }
  if (out.sonorant.empty() && out.fricative.empty()) return out;
  const double ratio = sonorant_energy / (fricative_energy + 1e-12);
  out.log_ratio = ratio > 0.0 ? std::clamp(std::log10(ratio), -6.0, 6.0) : -6.0;
  return out;
}

const std::vector<int>& log_band_of_bin() {
  static const std::vector<int> bands = [] {
    std::vector<int> b(static_cast<std::size_t>(kSpectrumBins), -1);
    const double lo = hz_to_mel(kBandLowHz), hi = hz_to_mel(kBandHighHz);
    const double width = (hi - lo) / kLogSpectrumBands;
    for (Eigen::Index k = 0; k < kSpectrumBins; ++k) {
      const double f = static_cast<double>(k) * kBinHz;
      if (f < kBandLowHz || f > kBandHighHz) continue;
      const int band = static_cast<int>((hz_to_mel(f) - lo) / width);
      b[static_cast<std::size_t>(k)] = std::min(band, kLogSpectrumBands - 1);
    }
    return b;
  }();
  return bands;
}

Eigen::ArrayXd log_spectrum_bands(const GestureSegment& seg) {
  require_frames(seg);
  return log_bands_from_power(power_spectra(seg.frames));
}

LpcResult levinson_durbin(const Eigen::VectorXd& r, int order) {
  LpcResult out;
  out.coefficients = Eigen::VectorXd::Zero(order);
  out.residual_energy = r[0];
  if (r[0] <= 0.0) {
    out.stable = false;
    return out;
  }
  Eigen::VectorXd a = Eigen::VectorXd::Zero(order + 1);
  double err = r[0];
  for (int i = 1; i <= order; ++i) {
    double acc = r[i];
    for (int j = 1; j < i; ++j) acc -= a[j] * r[i - j];
    const double k = acc / err;
    if (!(std::abs(k) < 1.0)) {
      out.coefficients.setZero();
      out.residual_energy = r[0];
      out.stable = false;
      return out;
    }
    Eigen::VectorXd next = a;
    next[i] = k;
    for (int j = 1; j < i; ++j) next[j] = a[j] - k * a[i - j];
    a = std::move(next);
    err *= (1.0 - k * k);
  }
  out.coefficients = a.tail(order);
  out.residual_energy = err;
  return out;
}

Eigen::VectorXd lpc(const GestureSegment& seg, int order) {
  require_frames(seg);
  if (order <= 0 || order >= kFrameLen) throw Error(ErrorCode::InvalidInput, "lpc order out of range");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(order);
  int used = 0;
  for (Eigen::Index i = 0; i < seg.frames.size(); ++i) {
    const Eigen::ArrayXd frame = seg.frames.windowed.row(i).transpose();
    const Eigen::VectorXd r = autocorrelation(frame, order);
    if (r[0] < kSilenceEnergy) continue;
    sum += levinson_durbin(r, order).coefficients;  // unstable frames contribute zeros
    ++used;
  }
  return used ? Eigen::VectorXd(sum / used) : sum;
}

FeatureVector assemble(const GestureSegment& seg, const FeatureConfig& cfg) {
  require_frames(seg);
  if (seg.harmonic_ratio.size() != seg.frames.size())
    throw Error(ErrorCode::InvalidInput, "segment harmonic track not computed");
  const Eigen::MatrixXd power = power_spectra(seg.frames);
  const Eigen::MatrixXd coeffs = mfcc_from_power(power);
  const ActivePortion active = active_portion(delta_mfcc(coeffs), cfg.theta_active);

  // Pool cepstra over active frames, or over every frame when none is active.
  const Eigen::Index n_active = active.active.count();
  Eigen::MatrixXd pooled(n_active > 0 ? n_active : coeffs.rows(), kMfccCount);
  if (n_active > 0) {
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < coeffs.rows(); ++i)
      if (active.active[i]) pooled.row(row++) = coeffs.row(i);
  } else {
    pooled = coeffs;
  }
  const Eigen::RowVectorXd mean = pooled.colwise().mean();
  const Eigen::RowVectorXd std =
      ((pooled.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(pooled.rows())).sqrt();

  const PitchTrack pitch = pitch_track(seg, cfg.hr_threshold);
  const SpectralStats spectral = mean_spectral_stats(power);
  const SonorantSplit split = sonorant_fricative_split(seg, cfg.theta_sonorant);

  FeatureVector v;
  v.segment<kMfccCount>(layout::mfcc_mean) = mean.transpose();
  v.segment<kMfccCount>(layout::mfcc_std) = std.transpose();
  v[layout::pitch_mean] = pitch.mean;
  v[layout::pitch_std] = pitch.std;
  v[layout::hr_mean] = seg.harmonic_ratio.mean();
  v[layout::hr_max] = seg.harmonic_ratio.maxCoeff();
  v[layout::spec_entropy] = spectral.entropy;
  v[layout::spec_flatness] = spectral.flatness;
  v[layout::spec_crest] = spectral.crest;
  v[layout::spec_centroid] = spectral.centroid_hz;
  v[layout::sonorant_fricative_ratio] = split.log_ratio;
  v.segment<kLogSpectrumBands>(layout::logspec_bands) = log_bands_from_power(power).matrix();
  v.segment<kLpcOrder>(layout::lpc) = lpc(seg, kLpcOrder);
  v[layout::active_fraction] = active.fraction;
  if (!v.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite feature value");
  return v;
}

}  // namespace toothsonic
