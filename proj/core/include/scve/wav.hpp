#pragma once
// 16-bit PCM mono RIFF reader/writer.

#include <string>
#include <vector>

namespace scve {

struct AudioBuffer {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 0;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

AudioBuffer read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioBuffer& audio);

}  // namespace scve
