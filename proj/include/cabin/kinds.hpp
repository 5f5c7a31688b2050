#pragma once

#include <cstddef>
#include <string>

#include "cabin/errors.hpp"

namespace cabin {

// Canonical stream order. Sequence assembly, marker parameters, and blob
// layout all follow this order; Phys is last.
enum class StreamKind : int {
  FrontRGB = 0,
  OutRGB = 1,
  Face = 2,
  Hand = 3,
  NIR = 4,
  Depth = 5,
  Phys = 6,
};

constexpr int kNumStreamKinds = 7;

inline const char* stream_name(StreamKind k) {
  switch (k) {
    case StreamKind::FrontRGB: return "front";
    case StreamKind::OutRGB: return "out";
    case StreamKind::Face: return "face";
    case StreamKind::Hand: return "hand";
    case StreamKind::NIR: return "nir";
    case StreamKind::Depth: return "depth";
    case StreamKind::Phys: return "phys";
  }
  throw InternalError("bad stream kind");
}

inline StreamKind stream_from_name(const std::string& name) {
  for (int i = 0; i < kNumStreamKinds; ++i)
    if (name == stream_name(static_cast<StreamKind>(i)))
      return static_cast<StreamKind>(i);
  throw DataError("unknown stream name: " + name);
}

// Clip channel count; Phys is not a frame stream.
inline std::size_t stream_channels(StreamKind k) {
  switch (k) {
    case StreamKind::FrontRGB:
    case StreamKind::OutRGB:
    case StreamKind::Face:
    case StreamKind::Hand:
      return 3;
    case StreamKind::NIR:
    case StreamKind::Depth:
      return 1;
    case StreamKind::Phys:
      throw InternalError("phys stream has no frames");
  }
  throw InternalError("bad stream kind");
}

}  // namespace cabin
