#pragma once

#include <cstdint>
#include <vector>

namespace cabin::data {

// Synthetic pulse waveform standing in for a camera-derived rPPG signal.
struct PhysSignal {
  std::vector<float> samples;  // stored at f32 precision, like the blobs
  double sample_rate = 0;
  double true_hr = 0;
};

// sin(2*pi*(hr/60)*t) + 0.3*sin(4*pi*(hr/60)*t) + gaussian noise.
// hr must lie in [40, 150]; sample_rate must cover the second harmonic with
// margin (>= 6*hr/60), otherwise ConfigError.
PhysSignal generate_ppg(double hr, double duration, double sample_rate,
                        double noise_std, std::uint64_t seed);

// Brute-force DFT peak location in [0.5, 3.5] Hz, for spectral tests.
double dominant_frequency(const std::vector<float>& samples,
                          double sample_rate);

}  // namespace cabin::data
