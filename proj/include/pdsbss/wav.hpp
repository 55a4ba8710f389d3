#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "pdsbss/signal.hpp"

namespace pdsbss {

enum class WavEncoding { Float32, Pcm16 };

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline constexpr std::uint16_t kFormatPcm = 1;
inline constexpr std::uint16_t kFormatFloat = 3;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace detail

/// Parses a RIFF/WAVE byte buffer. PCM 16-bit is scaled by 1/32768.
inline TimeDomainAudio parse_wav(std::span<const unsigned char> bytes) {
  using namespace detail;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error("wav: not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  std::span<const unsigned char> data;
  bool have_data = false;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      if (std::memcmp(chunk, "data", 4) == 0) throw Error("wav: truncated data chunk");
      throw Error("wav: truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw Error("wav: fmt chunk too small");
      const unsigned char* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      block_align = read_u16(f + 12);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw Error("wav: extensible fmt chunk too small");
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.subspan(body, size);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw Error("wav: missing fmt chunk");
  if (!have_data) throw Error("wav: missing data chunk");
  if (channels == 0 || rate == 0) throw Error("wav: invalid channel count or sample rate");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    std::string name = format == kFormatPcm ? "PCM" : format == kFormatFloat ? "IEEE float" : "format tag " + std::to_string(format);
    throw Error("wav: unsupported encoding " + name + " " + std::to_string(bits) + "-bit");
  }
  const std::size_t sample_bytes = bits / 8;
  if (block_align != channels * sample_bytes) throw Error("wav: inconsistent block alignment");
  const std::size_t frames = data.size() / block_align;

  TimeDomainAudio out{SampleMatrix(channels, static_cast<Eigen::Index>(frames)), static_cast<int>(rate)};
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data.data() + i * block_align + c * sample_bytes;
      double value;
      if (pcm16) {
        value = static_cast<double>(static_cast<std::int16_t>(read_u16(p))) / 32768.0;
      } else {
        value = static_cast<double>(std::bit_cast<float>(read_u32(p)));
      }
      out.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = value;
    }
  }
  return out;
}

inline TimeDomainAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("wav: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline std::vector<unsigned char> encode_wav(const TimeDomainAudio& audio, WavEncoding encoding = WavEncoding::Float32) {
  using namespace detail;
  const auto channels = static_cast<std::uint16_t>(audio.channels());
  const std::uint16_t bits = encoding == WavEncoding::Float32 ? 32 : 16;
  const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits / 8);
  const auto data_size = static_cast<std::uint32_t>(audio.length() * block_align);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, encoding == WavEncoding::Float32 ? kFormatFloat : kFormatPcm);
  put_u16(out, channels);
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate) * block_align);
  put_u16(out, block_align);
  put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_size);
  for (std::size_t i = 0; i < audio.length(); ++i) {
    for (std::size_t c = 0; c < audio.channels(); ++c) {
      const double v = audio.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
      if (encoding == WavEncoding::Float32) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        const double scaled = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
      }
    }
  }
  return out;
}

/// Writes to a temporary sibling and renames, so readers never see a partial file.
inline void write_bytes_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_wav(const TimeDomainAudio& audio, const std::filesystem::path& path,
                      WavEncoding encoding = WavEncoding::Float32) {
  audio.validate();
  const auto bytes = encode_wav(audio, encoding);
  write_bytes_atomic(path, bytes);
}

}  // namespace pdsbss
