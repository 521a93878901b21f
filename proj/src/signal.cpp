#include "toothsonic/signal.hpp"

#include "toothsonic/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace toothsonic {

namespace {

constexpr double kPi = std::numbers::pi;

Biquad normalized(double b0, double b1, double b2, double a0, double a1, double a2) {
  return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
}

Eigen::FFT<double>& fft_engine() {
  // Plans are cached per object and the object is not thread-safe.
  thread_local Eigen::FFT<double> engine;
  return engine;
}

}  // namespace

void validate(const AudioClip& clip) {
  if (clip.sample_rate != kSampleRate)
    throw Error(ErrorCode::InvalidInput,
                "sample rate " + std::to_string(clip.sample_rate) + " Hz, expected 16000 Hz");
  if (!clip.samples.allFinite()) throw Error(ErrorCode::InvalidInput, "clip contains non-finite samples");
}

FrameSet FrameSet::slice(Eigen::Index first, Eigen::Index count) const {
  FrameSet out;
  out.raw = raw.middleRows(first, count);
  out.windowed = windowed.middleRows(first, count);
  out.starts.assign(starts.begin() + first, starts.begin() + first + count);
  return out;
}

double Spectrum::energy() const {
  const Eigen::Index n = power.size();
  if (n == 0) return 0.0;
  if (n == 1) return power[0];
  // Bins 0 and N/2 appear once in the two-sided spectrum, the rest twice.
  return power[0] + power[n - 1] + 2.0 * power.segment(1, n - 2).sum();
}

Biquad butterworth_highpass_section(double cutoff_hz, double q, double sample_rate) {
  const double w0 = 2.0 * kPi * cutoff_hz / sample_rate;
  const double c = std::cos(w0), alpha = std::sin(w0) / (2.0 * q);
  return normalized((1 + c) / 2, -(1 + c), (1 + c) / 2, 1 + alpha, -2 * c, 1 - alpha);
}

Biquad butterworth_lowpass_section(double cutoff_hz, double q, double sample_rate) {
  const double w0 = 2.0 * kPi * cutoff_hz / sample_rate;
  const double c = std::cos(w0), alpha = std::sin(w0) / (2.0 * q);
  return normalized((1 - c) / 2, 1 - c, (1 - c) / 2, 1 + alpha, -2 * c, 1 - alpha);
}

Biquad peaking_section(double center_hz, double gain_db, double q, double sample_rate) {
  const double a = std::pow(10.0, gain_db / 40.0);
  const double w0 = 2.0 * kPi * center_hz / sample_rate;
  const double c = std::cos(w0), alpha = std::sin(w0) / (2.0 * q);
  return normalized(1 + alpha * a, -2 * c, 1 - alpha * a, 1 + alpha / a, -2 * c, 1 - alpha / a);
}

Biquad low_shelf_section(double corner_hz, double gain_db, double sample_rate) {
  const double a = std::pow(10.0, gain_db / 40.0);
  const double w0 = 2.0 * kPi * corner_hz / sample_rate;
  const double c = std::cos(w0), s = std::sin(w0);
  const double alpha = s / 2.0 * std::numbers::sqrt2;  // shelf slope 1
  const double k = 2.0 * std::sqrt(a) * alpha;
  return normalized(a * ((a + 1) - (a - 1) * c + k), 2 * a * ((a - 1) - (a + 1) * c),
                    a * ((a + 1) - (a - 1) * c - k), (a + 1) + (a - 1) * c + k,
                    -2 * ((a - 1) + (a + 1) * c), (a + 1) + (a - 1) * c - k);
}

Biquad high_shelf_section(double corner_hz, double gain_db, double sample_rate) {
  const double a = std::pow(10.0, gain_db / 40.0);
  const double w0 = 2.0 * kPi * corner_hz / sample_rate;
  const double c = std::cos(w0), s = std::sin(w0);
  const double alpha = s / 2.0 * std::numbers::sqrt2;
  const double k = 2.0 * std::sqrt(a) * alpha;
  return normalized(a * ((a + 1) + (a - 1) * c + k), -2 * a * ((a - 1) + (a + 1) * c),
                    a * ((a + 1) + (a - 1) * c - k), (a + 1) - (a - 1) * c + k,
                    2 * ((a - 1) - (a + 1) * c), (a + 1) - (a - 1) * c - k);
}

SosCascade butterworth_highpass(int order, double cutoff_hz, double sample_rate) {
  SosCascade out;
  for (int k = 0; k < order / 2; ++k) {
    const double q = 1.0 / (2.0 * std::cos((2 * k + 1) * kPi / (2.0 * order)));
    out.push_back(butterworth_highpass_section(cutoff_hz, q, sample_rate));
  }
  return out;
}

SosCascade butterworth_lowpass(int order, double cutoff_hz, double sample_rate) {
  SosCascade out;
  for (int k = 0; k < order / 2; ++k) {
    const double q = 1.0 / (2.0 * std::cos((2 * k + 1) * kPi / (2.0 * order)));
    out.push_back(butterworth_lowpass_section(cutoff_hz, q, sample_rate));
  }
  return out;
}

Eigen::ArrayXd sos_filter(const SosCascade& sections, const Eigen::ArrayXd& x) {
  Eigen::ArrayXd y = x;
  for (const auto& s : sections) {
    double z1 = 0.0, z2 = 0.0;
    for (Eigen::Index n = 0; n < y.size(); ++n) {
      const double in = y[n];
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      y[n] = out;
    }
  }
  return y;
}

double sos_gain(const SosCascade& sections, double freq_hz, double sample_rate) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * kPi * freq_hz / sample_rate);
  const std::complex<double> z2 = z1 * z1;
  double g = 1.0;
  for (const auto& s : sections)
    g *= std::abs((s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2));
  return g;
}

std::vector<double> sos_pole_radii(const SosCascade& sections) {
  std::vector<double> radii;
  for (const auto& s : sections) {
    const double disc = s.a1 * s.a1 - 4.0 * s.a2;
    if (disc < 0.0) {
      const double r = std::sqrt(s.a2);
      radii.insert(radii.end(), {r, r});
    } else {
      const double sq = std::sqrt(disc);
      radii.push_back(std::abs((-s.a1 + sq) / 2.0));
      radii.push_back(std::abs((-s.a1 - sq) / 2.0));
    }
  }
  return radii;
}

SosCascade design_bandpass(double low_hz, double high_hz, double sample_rate) {
  const double nyquist = sample_rate / 2.0;
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz <= nyquist))
    throw Error(ErrorCode::InvalidBand, "band [" + std::to_string(low_hz) + ", " +
                                            std::to_string(high_hz) + "] Hz is not inside (0, " +
                                            std::to_string(nyquist) + "]");
  SosCascade sections = butterworth_highpass(6, low_hz, sample_rate);
  if (high_hz < nyquist) {
    auto lp = butterworth_lowpass(8, high_hz, sample_rate);
    sections.insert(sections.end(), lp.begin(), lp.end());
  }
  return sections;
}

AudioClip bandpass(const AudioClip& clip, double low_hz, double high_hz) {
  if (clip.samples.size() == 0) throw Error(ErrorCode::EmptyInput, "bandpass: empty clip");
  const auto sections = design_bandpass(low_hz, high_hz, clip.sample_rate);
  AudioClip out = clip;
  out.samples = sos_filter(sections, clip.samples);
  return out;
}

Eigen::ArrayXd hamming(Eigen::Index n) {
  if (n == 1) return Eigen::ArrayXd::Ones(1);
  return 0.54 - 0.46 * (Eigen::ArrayXd::LinSpaced(n, 0.0, 2.0 * kPi)).cos();
}

FrameSet frame_signal(const Eigen::ArrayXd& samples) {
  if (samples.size() < kFrameLen)
    throw Error(ErrorCode::EmptyInput, "signal of " + std::to_string(samples.size()) +
                                           " samples is shorter than one frame");
  const Eigen::Index count = (samples.size() - kFrameLen) / kHop + 1;
  static const Eigen::RowVectorXd window = hamming(kFrameLen).matrix().transpose();
  FrameSet out;
  out.raw.resize(count, kFrameLen);
  out.starts.resize(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) {
    out.starts[static_cast<std::size_t>(i)] = i * kHop;
    out.raw.row(i) = samples.segment(i * kHop, kFrameLen).matrix().transpose();
  }
  out.windowed = out.raw.array().rowwise() * window.array();
  return out;
}

FrameSet frame_clip(const AudioClip& clip) { return frame_signal(clip.samples); }

Eigen::ArrayXcd real_dft(const Eigen::Ref<const Eigen::ArrayXd>& x, Eigen::Index n) {
  std::vector<double> in(static_cast<std::size_t>(n), 0.0);
  const Eigen::Index m = std::min(n, x.size());
  for (Eigen::Index i = 0; i < m; ++i) in[static_cast<std::size_t>(i)] = x[i];
  std::vector<std::complex<double>> out;
  auto& fft = fft_engine();
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  fft.fwd(out, in);
  Eigen::ArrayXcd half(n / 2 + 1);
  for (Eigen::Index k = 0; k < half.size(); ++k) half[k] = out[static_cast<std::size_t>(k)];
  return half;
}

Eigen::ArrayXd inverse_real_dft(const Eigen::ArrayXcd& half, Eigen::Index n) {
  std::vector<std::complex<double>> in(half.data(), half.data() + half.size());
  std::vector<double> out;
  auto& fft = fft_engine();
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  fft.inv(out, in, n);
  return Eigen::Map<const Eigen::ArrayXd>(out.data(), n);
}

Spectrum power_spectrum(const Eigen::Ref<const Eigen::ArrayXd>& frame) {
  const Eigen::Index n = frame.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "power_spectrum: empty frame");
  Spectrum s;
  s.power = real_dft(frame, n).abs2() / static_cast<double>(n);
  s.bin_hz = static_cast<double>(kSampleRate) / static_cast<double>(n);
  return s;
}

Eigen::ArrayXd normalized_autocorrelation(const Eigen::Ref<const Eigen::ArrayXd>& frame,
                                          Eigen::Index max_lag) {
  const Eigen::Index n = frame.size();
  if (max_lag <= 0 || max_lag >= n)
    throw Error(ErrorCode::InvalidInput, "max_lag must lie in (0, frame length)");
  Eigen::ArrayXd r = Eigen::ArrayXd::Zero(max_lag + 1);
  const Eigen::VectorXd x = frame.matrix();
  // Running sums from both ends give the two partial energies of every
  // overlap without cancellation.
  Eigen::VectorXd prefix(n + 1), suffix(n + 1);
  prefix[0] = 0.0;
  suffix[n] = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  for (Eigen::Index i = n - 1; i >= 0; --i) suffix[i] = suffix[i + 1] + x[i] * x[i];
  if (prefix[n] <= 0.0) return r;
  r[0] = 1.0;
  for (Eigen::Index tau = 1; tau <= max_lag; ++tau) {
    const Eigen::Index len = n - tau;
    const double head = prefix[len];
    const double tail = suffix[tau];
    if (head <= 0.0 || tail <= 0.0) continue;
    const double num = x.head(len).dot(x.tail(len));
    r[tau] = std::clamp(num / std::sqrt(head * tail), -1.0, 1.0);
  }
  return r;
}

double energy(const Eigen::Ref<const Eigen::ArrayXd>& x) { return x.square().sum(); }

double rms(const Eigen::Ref<const Eigen::ArrayXd>& x) {
  return x.size() == 0 ? 0.0 : std::sqrt(energy(x) / static_cast<double>(x.size()));
}

}  // namespace toothsonic
