#include "toothsonic/wav.hpp"

#include "toothsonic/error.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace toothsonic {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

// Same scale as the reader, so read -> write -> read is lossless.
std::int16_t to_pcm16(double v) {
  const double scaled = std::round(std::clamp(v, -1.0, 1.0) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

}  // namespace

Eigen::ArrayXd quantize_pcm16(const Eigen::ArrayXd& samples) {
  return samples.unaryExpr([](double v) { return to_pcm16(v) / 32768.0; });
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorCode::FormatError, where + "not a RIFF/WAVE file");

  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw Error(ErrorCode::FormatError, where + "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw Error(ErrorCode::FormatError, where + "short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      const auto format = read_u16(f);
      const auto channels = read_u16(f + 2);
      const auto rate = read_u32(f + 4);
      const auto bits = read_u16(f + 14);
      if (format != 1)
        throw Error(ErrorCode::FormatError, where + "encoding tag " + std::to_string(format) + " is not PCM (1)");
      if (channels != 1)
        throw Error(ErrorCode::FormatError, where + std::to_string(channels) + " channels, expected mono");
      if (rate != static_cast<std::uint32_t>(kSampleRate))
        throw Error(ErrorCode::FormatError, where + "sample rate " + std::to_string(rate) + " Hz, expected 16000 Hz");
      if (bits != 16)
        throw Error(ErrorCode::FormatError, where + std::to_string(bits) + "-bit samples, expected 16-bit");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1U);
  }
  if (!have_fmt) throw Error(ErrorCode::FormatError, where + "missing fmt chunk");
  if (data == nullptr) throw Error(ErrorCode::FormatError, where + "missing data chunk");

  AudioClip clip;
  clip.samples.resize(static_cast<Eigen::Index>(data_len / 2));
  for (Eigen::Index i = 0; i < clip.samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(read_u16(data + 2 * i));
    clip.samples[i] = v / 32768.0;
  }
  clip.meta.source = path.string();
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  validate(clip);
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, kSampleRate);
  put_u32(out, kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, 2 * n);
  for (Eigen::Index i = 0; i < clip.samples.size(); ++i)
    put_u16(out, static_cast<std::uint16_t>(to_pcm16(clip.samples[i])));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace toothsonic
