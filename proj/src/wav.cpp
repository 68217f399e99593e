#include "kws/wav.hpp"

#include "kws/error.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "wav and model file I/O assume a little-endian host");

namespace kws {

namespace {

uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

uint16_t read_u16(std::istream& in) {
  uint16_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 2);
  return v;
}

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  out.write(reinterpret_cast<const char*>(&v), 2);
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("wav: cannot open " + path);

  char tag[5] = {0};
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0)
    throw DataError("wav: missing RIFF tag in " + path);
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0)
    throw DataError("wav: missing WAVE tag in " + path);

  AudioBuffer audio;
  bool have_fmt = false, have_data = false;
  while (in.read(tag, 4)) {
    uint32_t chunk_size = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      uint16_t format = read_u16(in);
      uint16_t channels = read_u16(in);
      uint32_t rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      uint16_t bits = read_u16(in);
      if (format != 1)
        throw DataError("wav: audio_format=" + std::to_string(format) +
                        " (want PCM=1) in " + path);
      if (channels != 1)
        throw DataError("wav: channels=" + std::to_string(channels) +
                        " (want mono=1) in " + path);
      if (bits != 16)
        throw DataError("wav: bits_per_sample=" + std::to_string(bits) +
                        " (want 16) in " + path);
      if (rate != 16000)
        throw DataError("wav: sample_rate=" + std::to_string(rate) +
                        " (want 16000, resampling unsupported) in " + path);
      audio.sample_rate = static_cast<int>(rate);
      if (chunk_size > 16) in.ignore(chunk_size - 16);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("wav: data chunk before fmt in " + path);
      audio.samples.resize(chunk_size / 2);
      in.read(reinterpret_cast<char*>(audio.samples.data()), chunk_size);
      if (!in) throw DataError("wav: truncated data chunk in " + path);
      have_data = true;
      break;
    } else {
      in.ignore(chunk_size + (chunk_size & 1));
    }
  }
  if (!have_data) throw DataError("wav: no data chunk in " + path);
  return audio;
}

void write_wav(const std::string& path, const AudioBuffer& audio) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("wav: cannot write " + path);
  const uint32_t data_bytes = static_cast<uint32_t>(audio.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(audio.sample_rate));
  write_u32(out, static_cast<uint32_t>(audio.sample_rate * 2));
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  out.write(reinterpret_cast<const char*>(audio.samples.data()), data_bytes);
  if (!out) throw DataError("wav: short write to " + path);
}

}  // namespace kws
