#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scfusion/errors.hpp"

namespace scf {

// Channel-major C x H x W tensor of 32-bit floats. Index layout is
// (c * H + y) * W + x, matching the on-disk "BEVF" container.
struct Tensor3f {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> v;

  static Tensor3f zeros(int c, int h, int w) {
    Tensor3f t;
    if (c <= 0 || h <= 0 || w <= 0) throw ValidationError("Tensor3f: dims must be positive");
    t.c = c;
    t.h = h;
    t.w = w;
    t.v.assign(static_cast<size_t>(c) * h * w, 0.0f);
    return t;
  }

  size_t idx(int ch, int y, int x) const {
    return (static_cast<size_t>(ch) * h + y) * w + x;
  }
  float at(int ch, int y, int x) const { return v[idx(ch, y, x)]; }
  float& at(int ch, int y, int x) { return v[idx(ch, y, x)]; }
  size_t size() const { return v.size(); }
  bool same_shape(const Tensor3f& o) const { return c == o.c && h == o.h && w == o.w; }
};

// Image-plane feature map emitted by the extractor surrogate.
using FeatureMap = Tensor3f;
// Feature plane aligned to a BevGrid (h = grid.height, w = grid.width).
using BevFeature = Tensor3f;

// Binary per-cell validity plane (nonzero-footprint mask).
struct Mask {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> v;

  static Mask zeros(int h, int w) {
    Mask m;
    if (h <= 0 || w <= 0) throw ValidationError("Mask: dims must be positive");
    m.h = h;
    m.w = w;
    m.v.assign(static_cast<size_t>(h) * w, 0);
    return m;
  }
  size_t idx(int y, int x) const { return static_cast<size_t>(y) * w + x; }
  uint8_t at(int y, int x) const { return v[idx(y, x)]; }
  uint8_t& at(int y, int x) { return v[idx(y, x)]; }
};

// Smoothed per-cell confidence in [0, 1].
struct ConfidenceMap {
  int h = 0;
  int w = 0;
  std::vector<float> v;

  static ConfidenceMap zeros(int h, int w) {
    ConfidenceMap m;
    if (h <= 0 || w <= 0) throw ValidationError("ConfidenceMap: dims must be positive");
    m.h = h;
    m.w = w;
    m.v.assign(static_cast<size_t>(h) * w, 0.0f);
    return m;
  }
  static ConfidenceMap ones(int h, int w) {
    ConfidenceMap m = zeros(h, w);
    m.v.assign(m.v.size(), 1.0f);
    return m;
  }
  size_t idx(int y, int x) const { return static_cast<size_t>(y) * w + x; }
  float at(int y, int x) const { return v[idx(y, x)]; }
  float& at(int y, int x) { return v[idx(y, x)]; }
};

void validate_finite(const Tensor3f& t, const char* what);

}  // namespace scf
