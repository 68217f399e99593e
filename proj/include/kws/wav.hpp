#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kws {

// Mono PCM audio. Only 16-bit signed little-endian at 16 kHz is accepted
// from disk; anything else is rejected with a diagnostic naming the field.
struct AudioBuffer {
  std::vector<int16_t> samples;
  int sample_rate = 16000;
};

AudioBuffer read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioBuffer& audio);

}  // namespace kws
