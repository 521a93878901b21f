#pragma once

#include "toothsonic/signal.hpp"

#include <filesystem>

namespace toothsonic {

/// Reads a RIFF/WAVE file. Only 16-bit signed PCM, mono, 16000 Hz is accepted;
/// anything else throws FormatError naming the offending field.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clamped to [-1, 1] and rounded.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// The sample values a clip takes after a write/read round trip.
Eigen::ArrayXd quantize_pcm16(const Eigen::ArrayXd& samples);

}  // namespace toothsonic
