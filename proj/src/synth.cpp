#include "toothsonic/synth.hpp"

#include "toothsonic/error.hpp"
#include "toothsonic/random.hpp"
#include "toothsonic/wav.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace toothsonic {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSr = kSampleRate;

// Disjoint resonance bands keep each tooth group spectrally attributable.
constexpr std::array<std::array<double, 2>, 3> kGroupBandHz = {{{2800.0, 6000.0}, {1200.0, 2800.0}, {300.0, 1200.0}}};

constexpr double kModeSpread = 0.08;

Biquad bandpass_section(double center_hz, double q) {
  const double w0 = kTwoPi * center_hz / kSr;
  const double c = std::cos(w0), alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1 + alpha;
  return {alpha / a0, 0.0, -alpha / a0, -2 * c / a0, (1 - alpha) / a0};
}

Eigen::Index to_samples(double seconds) { return static_cast<Eigen::Index>(std::llround(seconds * kSr)); }

double raised_cosine(double x) {  // 0 -> 0, 1 -> 1
  x = std::clamp(x, 0.0, 1.0);
  return 0.5 - 0.5 * std::cos(std::numbers::pi * x);
}

SosCascade draw_ear_channel(Rng& rng) {
  SosCascade ear;
  const double lo = std::log(150.0), hi = std::log(6000.0);
  for (int k = 0; k < 4; ++k) {
    const double a = lo + (hi - lo) * k / 4.0, b = lo + (hi - lo) * (k + 1) / 4.0;
    const double center = std::exp(rng.uniform(a, b));
    const double gain = rng.uniform(-12.0, 12.0);
    const double q = rng.uniform(0.7, 3.0);
    ear.push_back(peaking_section(center, gain, q, kSr));
  }
  return ear;
}

// Small-loudspeaker roll-off below 800 Hz, then the earbud seal damping the
// high band on its way to the in-ear microphone.
SosCascade fixed_air_channel() {
  SosCascade air = butterworth_highpass(4, 800.0, kSr);
  const auto seal = butterworth_lowpass(4, 4000.0, kSr);
  air.insert(air.end(), seal.begin(), seal.end());
  return air;
}

std::size_t participating_modes(const ToothprintParams& p, ToothGroup g) {
  const auto n = p.modes(g).size();
  const auto k = static_cast<std::size_t>(std::ceil(p.arch_coordination * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, std::min<std::size_t>(2, n), n);
}

struct Event {
  Eigen::ArrayXd samples;
  double active_s = 0.0;
  std::vector<std::array<double, 2>> gaps_s;  // relative to event start
};

Event synth_tap(const ToothprintParams& p, int gesture_id, Rng& rng, const SynthOptions& opt) {
  const auto& factors = gesture_factors(gesture_id);
  const double amp = opt.level * (1.0 + opt.amplitude_jitter * rng.uniform(-1.0, 1.0));
  const double dur = 1.0 + opt.duration_jitter * rng.uniform(-1.0, 1.0);

  const double inner_tau = 0.015 * dur;
  double max_tau = gesture_id == 7 ? inner_tau : 0.0;
  for (int g = 0; g < 3; ++g) {
    if (!factors.groups[static_cast<std::size_t>(g)]) continue;
    for (const auto& m : p.groups[static_cast<std::size_t>(g)]) max_tau = std::max(max_tau, m.decay_ms * dur / 1000.0);
  }
  const double click_s = 0.005;
  Event ev;
  ev.samples = Eigen::ArrayXd::Zero(to_samples(click_s + 6.0 * max_tau));
  ev.active_s = click_s + 3.0 * max_tau;
  const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(ev.samples.size(), 0.0, (ev.samples.size() - 1) / kSr);

  for (int g = 0; g < 3; ++g) {
    if (!factors.groups[static_cast<std::size_t>(g)]) continue;
    const auto group = static_cast<ToothGroup>(g);
    const auto& modes = p.modes(group);
    for (std::size_t i = 0; i < participating_modes(p, group); ++i) {
      const auto& m = modes[i];
      const double tau = m.decay_ms * dur / 1000.0;
      const double phase = rng.uniform(0.0, kTwoPi);
      ev.samples += amp * m.amplitude * (-t / tau).exp() * (kTwoPi * m.freq_hz * t + phase).sin();
    }
  }
  if (gesture_id == 7 && p.occlusion != OcclusionClass::Over) {
    // Inner-surface contact: full for a normal bite, weaker and higher for an underbite.
    const bool normal = p.occlusion == OcclusionClass::Normal;
    const double gain = normal ? 0.8 : 0.4;
    const double f = normal ? p.inner_surface_hz : 1.5 * p.inner_surface_hz;
    ev.samples += amp * gain * (-t / inner_tau).exp() * (kTwoPi * f * t).sin();
  }
  const Eigen::Index click = to_samples(click_s);
  for (Eigen::Index i = 0; i < click; ++i) {
    const double shape = std::pow(1.0 - static_cast<double>(i) / click, 2.0);
    ev.samples[i] += 0.5 * amp * shape * rng.normal();
  }
  return ev;
}

Event synth_slide(const ToothprintParams& p, int gesture_id, Rng& rng, const SynthOptions& opt) {
  const auto& factors = gesture_factors(gesture_id);
  const auto idx = static_cast<std::size_t>(gesture_id - 1);
  const double amp = opt.level * (1.0 + opt.amplitude_jitter * rng.uniform(-1.0, 1.0));
  const double dur = p.slide_duration_s[idx] * (1.0 + opt.duration_jitter * rng.uniform(-1.0, 1.0));
  const Eigen::Index n = to_samples(dur);
  const double mod_hz = p.slide_modulation_hz[idx];
  const double mod_phase = rng.uniform(0.0, kTwoPi);

  Eigen::ArrayXd excitation(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ts = i / kSr;
    const double envelope = raised_cosine(ts / 0.010) * raised_cosine((dur - ts) / 0.030) *
                            (1.0 - 0.3 * (0.5 - 0.5 * std::cos(kTwoPi * mod_hz * ts + mod_phase)));
    excitation[i] = envelope * rng.normal();
  }

  // Enamel-rod friction: feedback comb.
  const auto delay = std::max<Eigen::Index>(2, to_samples(p.rod.delay_ms / 1000.0));
  Eigen::ArrayXd rod = excitation;
  for (Eigen::Index i = delay; i < n; ++i) rod[i] += p.rod.feedback * rod[i - delay];

  Eigen::ArrayXd out = 0.35 * rod;
  for (int g = 0; g < 3; ++g) {
    if (!factors.groups[static_cast<std::size_t>(g)]) continue;
    const auto group = static_cast<ToothGroup>(g);
    const auto& modes = p.modes(group);
    for (std::size_t i = 0; i < participating_modes(p, group); ++i)
      out += modes[i].amplitude * sos_filter({bandpass_section(modes[i].freq_hz, modes[i].q)}, rod);
  }
  if (gesture_id == 2) {
    // Cusp grinding adds a high-frequency component on molar slides.
    Eigen::ArrayXd grind(n);
    for (Eigen::Index i = 0; i < n; ++i) grind[i] = excitation[i] * rng.normal();
    out += 0.15 * sos_filter(butterworth_highpass(2, 4000.0, kSr), grind);
  }
  out *= 0.5 * amp;

  Event ev;
  ev.active_s = dur;
  if (factors.spacing) {
    // A gap that would leave less than kMinPiece of sound on either side is
    // skipped for this repetition.
    constexpr double kMinPiece = 0.08;
    const double ramp = 0.005;
    double previous_stop = 0.0;
    for (const auto& gap : p.gaps) {
      const double w = gap.width_ms / 1000.0;
      const double start = gap.position * dur - w / 2.0, stop = start + w;
      if (start - previous_stop < kMinPiece || dur - stop < kMinPiece) continue;
      previous_stop = stop;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double ts = i / kSr;
        if (ts <= start - 1e-12 || ts >= stop) continue;
        const double edge = std::min(ts - start, stop - ts);
        out[i] *= 1.0 - raised_cosine(edge / ramp);
      }
      ev.gaps_s.push_back({start, stop});
    }
  }
  ev.samples = std::move(out);
  return ev;
}

}  // namespace

std::string_view gesture_name(int gesture_id) {
  static constexpr std::array<std::string_view, kGestureCount> names = {
      "occlusion_sliding",  "molar_sliding",     "canine_sliding", "incisor_sliding_fb", "incisor_sliding_ud",
      "incisor_sliding_lr", "occlusion_tapping", "molar_tapping",  "canine_tapping",     "incisor_tapping"};
  if (gesture_id < 1 || gesture_id > kGestureCount)
    throw Error(ErrorCode::InvalidGesture, "gesture id " + std::to_string(gesture_id) + " outside 1..10");
  return names[static_cast<std::size_t>(gesture_id - 1)];
}

const GestureFactors& gesture_factors(int gesture_id) {
  //                                         incisor canine molar  spacing
  static const std::array<GestureFactors, kGestureCount> table = {{
      {{true, true, true}, true},     // occlusion sliding
      {{false, false, true}, false},  // molar sliding
      {{false, true, false}, true},   // canine sliding
      {{true, false, false}, true},   // incisor sliding F/B
      {{true, false, false}, true},   // incisor sliding U/D
      {{true, false, false}, true},   // incisor sliding L/R
      {{true, true, true}, false},    // occlusion tapping
      {{false, false, true}, false},  // molar tapping
      {{false, true, false}, false},  // canine tapping
      {{true, false, false}, false},  // incisor tapping
  }};
  gesture_name(gesture_id);  // validates the id
  return table[static_cast<std::size_t>(gesture_id - 1)];
}

ToothprintParams make_subject(std::uint64_t seed) {
  Rng rng(seed);
  ToothprintParams p;
  p.subject_seed = seed;
  for (std::size_t g = 0; g < 3; ++g) {
    const int count = rng.integer(4, 7);
    auto& modes = p.groups[g];
    for (int i = 0; i < count; ++i) {
      Mode m;
      // Teeth of one group resonate near shared population values; the
      // individual offset is a few percent.
      const double lo = kGroupBandHz[g][0], hi = kGroupBandHz[g][1];
      const double typical = lo * std::pow(hi / lo, (i + 0.5) / 7.0);
      m.freq_hz = std::clamp(typical * std::exp(kModeSpread * rng.normal()), lo, hi);
      m.q = rng.uniform(5.0, 50.0);
      m.decay_ms = rng.uniform(5.0, 40.0);
      m.amplitude = rng.uniform(0.4, 1.0);
      modes.push_back(m);
    }
    std::sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) { return a.amplitude > b.amplitude; });
  }
  p.rod = {rng.uniform(0.4, 2.0), rng.uniform(0.2, 0.7)};
  const int gaps = rng.integer(0, 3);
  for (int i = 0; i < gaps; ++i) {
    const double slot = 0.6 / gaps;
    p.gaps.push_back({0.2 + slot * i + rng.uniform(0.25, 0.75) * slot, rng.uniform(20.0, 60.0)});
  }
  p.arch_coordination = rng.uniform(0.5, 1.0);
  p.occlusion = static_cast<OcclusionClass>(rng.integer(0, 2));
  p.inner_surface_hz = rng.uniform(150.0, 350.0);
  for (auto& d : p.slide_duration_s) d = rng.uniform(0.3, 0.8);
  for (auto& m : p.slide_modulation_hz) m = rng.uniform(2.0, 6.0);
  p.ear_channel = draw_ear_channel(rng);
  p.air_channel = fixed_air_channel();
  return p;
}

ToothprintParams with_foreign_ear_channel(const ToothprintParams& params, std::uint64_t seed) {
  ToothprintParams out = params;
  Rng rng(seed);
  out.ear_channel = draw_ear_channel(rng);
  return out;
}

SynthClip synth_gesture(const ToothprintParams& params, int gesture_id, std::uint64_t seed, const SynthOptions& opt) {
  gesture_name(gesture_id);
  Rng rng(seed);
  const double lead = rng.uniform(opt.lead_min_s, opt.lead_max_s);
  const Event ev = is_tap(gesture_id) ? synth_tap(params, gesture_id, rng, opt) : synth_slide(params, gesture_id, rng, opt);

  const Eigen::Index lead_n = to_samples(lead), tail_n = to_samples(opt.tail_s);
  SynthClip out;
  out.clip.samples = Eigen::ArrayXd::Zero(lead_n + ev.samples.size() + tail_n);
  out.clip.samples.segment(lead_n, ev.samples.size()) = ev.samples;
  out.clip.meta.gesture_id = gesture_id;
  out.onset_s = static_cast<double>(lead_n) / kSr;
  out.end_s = out.onset_s + ev.active_s;
  for (const auto& g : ev.gaps_s) out.gaps_s.push_back({out.onset_s + g[0], out.onset_s + g[1]});
  return out;
}

SosCascade occlusion_shelf(const SynthOptions& opt) {
  return {low_shelf_section(opt.occlusion_corner_hz, opt.occlusion_shelf_db, kSr)};
}

AudioClip apply_channel(const AudioClip& clip, const ToothprintParams& params, ChannelPath path,
                        const SynthOptions& opt) {
  SosCascade chain;
  if (path == ChannelPath::TeethEar) {
    chain = params.ear_channel;
    const auto shelf = occlusion_shelf(opt);
    chain.insert(chain.end(), shelf.begin(), shelf.end());
  } else {
    chain = params.air_channel;
  }
  AudioClip out = clip;
  out.samples = sos_filter(chain, clip.samples);
  return out;
}

const std::vector<EnvProfile>& default_env_profiles() {
  static const std::vector<EnvProfile> profiles = {
      {"living_room", NoiseColor::Pink, 20.0, false}, {"lab", NoiseColor::White, 15.0, false},
      {"grocery", NoiseColor::Babble, 12.0, false},   {"vehicle", NoiseColor::Babble, 8.0, true},
      {"park", NoiseColor::White, 14.0, false},
  };
  return profiles;
}

const EnvProfile& env_profile(std::string_view name) {
  for (const auto& p : default_env_profiles())
    if (p.name == name) return p;
  throw Error(ErrorCode::InvalidConfig, "unknown environment profile '" + std::string(name) + "'");
}

std::string_view to_string(NoiseColor color) {
  switch (color) {
    case NoiseColor::White: return "white";
    case NoiseColor::Pink: return "pink";
    case NoiseColor::Babble: return "babble";
  }
  return "white";
}

NoiseColor noise_color_from_string(std::string_view s) {
  if (s == "white") return NoiseColor::White;
  if (s == "pink") return NoiseColor::Pink;
  if (s == "babble") return NoiseColor::Babble;
  throw Error(ErrorCode::InvalidConfig, "unknown noise color '" + std::string(s) + "'");
}

Eigen::ArrayXd colored_noise(NoiseColor color, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::ArrayXd out(n);
  switch (color) {
    case NoiseColor::White:
      for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.normal();
      break;
    case NoiseColor::Pink: {
      // Paul Kellet's refined -3 dB/octave filter.
      double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double w = rng.normal();
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        out[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
      }
      break;
    }
    case NoiseColor::Babble: {
      // Several band-limited "talkers" with syllable-rate envelopes.
      out.setZero();
      for (int talker = 0; talker < 8; ++talker) {
        const double center = rng.log_uniform(300.0, 3000.0);
        const double rate = rng.uniform(3.0, 6.0), phase = rng.uniform(0.0, kTwoPi);
        Eigen::ArrayXd voice(n);
        for (Eigen::Index i = 0; i < n; ++i) voice[i] = rng.normal();
        voice = sos_filter({bandpass_section(center, 2.0)}, voice);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double e = 0.75 + 0.25 * std::sin(kTwoPi * rate * i / kSr + phase);
          out[i] += e * e * voice[i];
        }
      }
      break;
    }
  }
  const double sd = rms(out);
  return sd > 0.0 ? Eigen::ArrayXd(out / sd) : out;
}

AudioClip add_noise(const AudioClip& clip, const EnvProfile& env, std::uint64_t seed,
                    std::optional<std::array<Eigen::Index, 2>> region) {
  if (std::isinf(env.snr_db) && env.snr_db > 0) return clip;
  if (!std::isfinite(env.snr_db)) throw Error(ErrorCode::InvalidInput, "SNR must be finite or +inf");
  const Eigen::Index n = clip.samples.size();
  Eigen::Index begin = 0, end = n;
  if (region) {
    begin = std::clamp<Eigen::Index>((*region)[0], 0, n);
    end = std::clamp<Eigen::Index>((*region)[1], begin, n);
  }
  const Eigen::Index len = end - begin;
  const double signal_power = len > 0 ? clip.samples.segment(begin, len).square().mean() : 0.0;
  if (!(signal_power > 0.0)) throw Error(ErrorCode::InvalidInput, "clip has no energy in the SNR region");
  const Eigen::ArrayXd noise = colored_noise(env.color, n, seed);
  const double noise_power = noise.segment(begin, len).square().mean();
  const double scale = std::sqrt(signal_power / std::pow(10.0, env.snr_db / 10.0) / noise_power);
  AudioClip out = clip;
  out.samples += scale * noise;
  return out;
}

AudioClip add_motion_rumble(const AudioClip& clip, std::uint64_t seed, double level) {
  Rng rng(seed);
  const Eigen::Index n = clip.samples.size();
  Eigen::ArrayXd rumble(n);
  for (Eigen::Index i = 0; i < n; ++i) rumble[i] = rng.normal();
  rumble = sos_filter(butterworth_lowpass(8, 120.0, kSr), rumble);
  Eigen::ArrayXd gate = Eigen::ArrayXd::Zero(n);
  const int bursts = rng.integer(1, 3);
  const Eigen::Index width = to_samples(0.15);
  for (int b = 0; b < bursts; ++b) {
    const Eigen::Index start = static_cast<Eigen::Index>(rng.uniform() * std::max<Eigen::Index>(1, n - width));
    for (Eigen::Index i = 0; i < width && start + i < n; ++i)
      gate[start + i] = std::max(gate[start + i], std::sin(std::numbers::pi * i / width));
  }
  const double sd = rms(rumble);
  AudioClip out = clip;
  if (sd > 0.0) out.samples += level / sd * gate * rumble;
  return out;
}

std::string_view to_string(AttemptKind kind) {
  switch (kind) {
    case AttemptKind::Genuine: return "genuine";
    case AttemptKind::Mimic: return "mimic";
    case AttemptKind::Replay: return "replay";
    case AttemptKind::AdvancedMimic: return "advanced_mimic";
  }
  return "genuine";
}

AttemptKind attempt_kind_from_string(std::string_view s) {
  if (s == "genuine") return AttemptKind::Genuine;
  if (s == "mimic") return AttemptKind::Mimic;
  if (s == "replay") return AttemptKind::Replay;
  if (s == "advanced_mimic") return AttemptKind::AdvancedMimic;
  throw Error(ErrorCode::FormatError, "unknown attempt kind '" + std::string(s) + "'");
}

std::uint64_t subject_seed(std::uint64_t master_seed, int subject_id) {
  return derive_seed(master_seed, {1, static_cast<std::uint64_t>(subject_id)});
}

SynthClip synth_attempt(const ToothprintParams& params, const AttemptSpec& spec, const EnvProfile& env,
                        std::uint64_t master_seed, const SynthOptions& opt) {
  const std::uint64_t clip_seed =
      derive_seed(master_seed, {2, static_cast<std::uint64_t>(spec.subject_id), static_cast<std::uint64_t>(spec.gesture_id),
                                static_cast<std::uint64_t>(spec.rep), static_cast<std::uint64_t>(spec.kind),
                                static_cast<std::uint64_t>(spec.env_index)});
  SynthClip out = synth_gesture(params, spec.gesture_id, clip_seed, opt);
  switch (spec.kind) {
    case AttemptKind::Replay:
      out.clip = apply_channel(out.clip, params, ChannelPath::Air, opt);
      break;
    case AttemptKind::AdvancedMimic: {
      const auto foreign = with_foreign_ear_channel(
          params, derive_seed(master_seed, {3, static_cast<std::uint64_t>(spec.subject_id)}));
      out.clip = apply_channel(out.clip, foreign, ChannelPath::TeethEar, opt);
      break;
    }
    default:
      out.clip = apply_channel(out.clip, params, ChannelPath::TeethEar, opt);
  }
  const std::array<Eigen::Index, 2> region = {static_cast<Eigen::Index>(std::llround(out.onset_s * kSr)),
                                              static_cast<Eigen::Index>(std::llround(out.end_s * kSr))};
  out.clip = add_noise(out.clip, env, derive_seed(clip_seed, {4}), region);
  if (env.motion_rumble) out.clip = add_motion_rumble(out.clip, derive_seed(clip_seed, {5}), 0.01);
  out.clip.samples = quantize_pcm16(out.clip.samples);
  out.clip.meta.subject_id = spec.subject_id;
  out.clip.meta.gesture_id = spec.gesture_id;
  out.clip.meta.kind = std::string(to_string(spec.kind));
  return out;
}

}  // namespace toothsonic
