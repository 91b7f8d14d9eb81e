#include "scve/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "scve/common.hpp"

namespace scve {

namespace {

uint32_t rd_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t rd_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>((v >> 8) & 0xFF));
  s.push_back(static_cast<char>((v >> 16) & 0xFF));
  s.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void wr_u16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw_data("not a RIFF/WAVE file: " + path);

  int sample_rate = 0;
  int bits = 0;
  int channels = 0;
  std::size_t data_off = 0, data_len = 0;
  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + off);
    const uint32_t len = rd_u32(bytes.data() + off + 4);
    const std::size_t body = off + 8;
    if (std::memcmp(id, "fmt ", 4) == 0 && body + 16 <= bytes.size()) {
      const uint16_t fmt = rd_u16(bytes.data() + body);
      channels = rd_u16(bytes.data() + body + 2);
      sample_rate = static_cast<int>(rd_u32(bytes.data() + body + 4));
      bits = rd_u16(bytes.data() + body + 14);
      if (fmt != 1) throw_data("WAV is not PCM: " + path);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<std::size_t>(len, bytes.size() - body);
    }
    off = body + len + (len & 1);  // chunks are word aligned
  }
  if (sample_rate <= 0 || data_off == 0)
    throw_data("WAV missing fmt or data chunk: " + path);
  if (bits != 16 || channels != 1)
    throw_data("expected 16-bit mono PCM: " + path);

  AudioBuffer audio;
  audio.sample_rate = sample_rate;
  const std::size_t n = data_len / 2;
  audio.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int16_t s = static_cast<int16_t>(
        bytes[data_off + 2 * i] | (bytes[data_off + 2 * i + 1] << 8));
    audio.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return audio;
}

void write_wav(const std::string& path, const AudioBuffer& audio) {
  if (audio.sample_rate <= 0) throw_data("write_wav: sample rate must be positive");
  std::string out;
  const uint32_t n = static_cast<uint32_t>(audio.samples.size());
  const uint32_t data_bytes = n * 2;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  wr_u32(out, 36 + data_bytes);
  out.append("WAVE");
  out.append("fmt ");
  wr_u32(out, 16);
  wr_u16(out, 1);  // PCM
  wr_u16(out, 1);  // mono
  wr_u32(out, static_cast<uint32_t>(audio.sample_rate));
  wr_u32(out, static_cast<uint32_t>(audio.sample_rate) * 2);
  wr_u16(out, 2);   // block align
  wr_u16(out, 16);  // bits
  out.append("data");
  wr_u32(out, data_bytes);
  for (uint32_t i = 0; i < n; ++i) {
    double x = audio.samples[i];
    if (x > 1.0) x = 1.0;
    if (x < -1.0) x = -1.0;
    auto s = static_cast<int16_t>(std::lrint(x * 32767.0));
    wr_u16(out, static_cast<uint16_t>(s));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_data("cannot write WAV file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw_data("short write to WAV file: " + path);
}

}  // namespace scve
