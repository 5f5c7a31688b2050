#include "cabin/ppg.hpp"

#include <cmath>

#include "cabin/errors.hpp"
#include "cabin/random.hpp"

namespace cabin::data {

namespace {
constexpr double kTwoPi = 6.283185307179586476925287;
}

PhysSignal generate_ppg(double hr, double duration, double sample_rate,
                        double noise_std, std::uint64_t seed) {
  if (hr < 40.0 || hr > 150.0)
    throw ConfigError("ppg: hr " + std::to_string(hr) +
                      " outside [40, 150] bpm");
  const double f = hr / 60.0;
  if (sample_rate < 6.0 * f)
    throw ConfigError("ppg: sample rate " + std::to_string(sample_rate) +
                      " Hz violates the Nyquist margin for hr " +
                      std::to_string(hr) + " (need >= " +
                      std::to_string(6.0 * f) + ")");
  if (duration <= 0.0) throw ConfigError("ppg: duration must be positive");

  const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
  Rng rng(seed);
  PhysSignal sig;
  sig.sample_rate = sample_rate;
  sig.true_hr = hr;
  sig.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double v = std::sin(kTwoPi * f * t) + 0.3 * std::sin(2.0 * kTwoPi * f * t);
    if (noise_std > 0.0) v += noise_std * rng.normal();
    sig.samples.push_back(static_cast<float>(v));
  }
  return sig;
}

double dominant_frequency(const std::vector<float>& samples,
                          double sample_rate) {
  const std::size_t n = samples.size();
  if (n == 0) throw SizeError("dominant_frequency on empty signal");
  const double df = sample_rate / static_cast<double>(n);
  double best_power = -1.0, best_freq = 0.0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    const double freq = df * static_cast<double>(k);
    if (freq < 0.5 || freq > 3.5) continue;
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = kTwoPi * static_cast<double>(k) *
                         static_cast<double>(i) / static_cast<double>(n);
      re += samples[i] * std::cos(ang);
      im -= samples[i] * std::sin(ang);
    }
    const double power = re * re + im * im;
    if (power > best_power) {
      best_power = power;
      best_freq = freq;
    }
  }
  return best_freq;
}

}  // namespace cabin::data
