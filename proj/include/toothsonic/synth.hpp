#pragma once

#include "toothsonic/signal.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <string>
#include <vector>

namespace toothsonic {

inline constexpr int kGestureCount = 10;

enum class ToothGroup { Incisor = 0, Canine = 1, Molar = 2 };
enum class OcclusionClass { Normal, Over, Under };
enum class ChannelPath { TeethEar, Air };
enum class NoiseColor { White, Pink, Babble };

std::string_view gesture_name(int gesture_id);
inline bool is_tap(int gesture_id) { return gesture_id >= 7 && gesture_id <= 10; }
inline bool is_slide(int gesture_id) { return gesture_id >= 1 && gesture_id <= 6; }

/// Tooth groups whose modes sound in each gesture, and whether the gesture
/// carries the dental-spacing dips.
struct GestureFactors {
  std::array<bool, 3> groups{};
  bool spacing = false;
};
const GestureFactors& gesture_factors(int gesture_id);

/// One resonance of a tooth group.
struct Mode {
  double freq_hz = 0.0;
  double q = 0.0;
  double decay_ms = 0.0;
  double amplitude = 1.0;
};

struct RodPattern {
  double delay_ms = 1.0;
  double feedback = 0.5;
};

/// A dip in a slide's amplitude: centre as a fraction of the slide, width in ms.
struct SpacingGap {
  double position = 0.5;
  double width_ms = 40.0;
};

/// Per-subject parameters of the synthetic toothprint. Everything is a
/// deterministic function of subject_seed.
struct ToothprintParams {
  std::uint64_t subject_seed = 0;
  std::array<std::vector<Mode>, 3> groups;  // indexed by ToothGroup
  RodPattern rod;
  std::vector<SpacingGap> gaps;  // 0..3
  double arch_coordination = 1.0;
  OcclusionClass occlusion = OcclusionClass::Normal;
  double inner_surface_hz = 200.0;
  std::array<double, 6> slide_duration_s{};  // base duration of gestures 1..6
  std::array<double, 6> slide_modulation_hz{};
  SosCascade ear_channel;  // 4 sections, 8 poles
  SosCascade air_channel;

  const std::vector<Mode>& modes(ToothGroup g) const { return groups[static_cast<std::size_t>(g)]; }
};

/// Knobs of the generator that are not per-subject.
struct SynthOptions {
  double occlusion_shelf_db = 12.0;
  double occlusion_corner_hz = 800.0;
  double amplitude_jitter = 0.10;
  double duration_jitter = 0.05;
  double lead_min_s = 0.25;
  double lead_max_s = 0.40;
  double tail_s = 0.30;
  double level = 0.03;
};

ToothprintParams make_subject(std::uint64_t subject_seed);

/// Same toothprint, different teeth-to-ear channel (the advanced mimic attacker).
ToothprintParams with_foreign_ear_channel(const ToothprintParams& params, std::uint64_t seed);

/// A generated clip plus its ground truth.
struct SynthClip {
  AudioClip clip;
  double onset_s = 0.0;
  double end_s = 0.0;
  std::vector<std::array<double, 2>> gaps_s;  // [start, end) of each spacing dip
};

/// Pre-channel gesture sound.
SynthClip synth_gesture(const ToothprintParams& params, int gesture_id, std::uint64_t seed,
                        const SynthOptions& opt = {});

/// Occlusion low shelf applied on the teeth-to-ear path.
SosCascade occlusion_shelf(const SynthOptions& opt = {});

AudioClip apply_channel(const AudioClip& clip, const ToothprintParams& params, ChannelPath path,
                        const SynthOptions& opt = {});

struct EnvProfile {
  std::string name;
  NoiseColor color = NoiseColor::White;
  double snr_db = 20.0;
  bool motion_rumble = false;
};

/// living_room, lab, grocery, vehicle, park.
const std::vector<EnvProfile>& default_env_profiles();
const EnvProfile& env_profile(std::string_view name);
std::string_view to_string(NoiseColor color);
NoiseColor noise_color_from_string(std::string_view s);

/// Unit-variance noise of the given colour.
Eigen::ArrayXd colored_noise(NoiseColor color, Eigen::Index n, std::uint64_t seed);

/// Adds noise so that the SNR over samples [region_begin, region_end) equals
/// env.snr_db. An infinite SNR returns the input unchanged. Throws
/// InvalidInput when the region carries no signal energy.
AudioClip add_noise(const AudioClip& clip, const EnvProfile& env, std::uint64_t seed,
                    std::optional<std::array<Eigen::Index, 2>> region = std::nullopt);

/// Low-frequency (< 150 Hz) bursts standing in for body motion.
AudioClip add_motion_rumble(const AudioClip& clip, std::uint64_t seed, double level);

enum class AttemptKind { Genuine, Mimic, Replay, AdvancedMimic };
std::string_view to_string(AttemptKind kind);
AttemptKind attempt_kind_from_string(std::string_view s);

/// Everything needed to regenerate one corpus clip.
struct AttemptSpec {
  int subject_id = 0;
  int gesture_id = 1;
  int rep = 0;
  AttemptKind kind = AttemptKind::Genuine;
  std::size_t env_index = 0;
};

/// Full chain for one clip: pre-channel gesture, channel for the attempt kind,
/// environment noise over the event, 16-bit quantisation.
SynthClip synth_attempt(const ToothprintParams& params, const AttemptSpec& spec, const EnvProfile& env,
                        std::uint64_t master_seed, const SynthOptions& opt = {});

std::uint64_t subject_seed(std::uint64_t master_seed, int subject_id);

}  // namespace toothsonic
