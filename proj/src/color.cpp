// SPDX-License-Identifier: Apache-2.0
#include "t2s/color.hpp"

#include <algorithm>
#include <cmath>

namespace t2s {
namespace {

double hue_of(const Rgb& c, double mx, double delta) {
  if (delta <= 0.0) return 0.0;
  double h;
  if (mx == c.r) {
    h = (c.g - c.b) / delta;
  } else if (mx == c.g) {
    h = 2.0 + (c.b - c.r) / delta;
  } else {
    h = 4.0 + (c.r - c.g) / delta;
  }
  return wrap_hue(h / 6.0);
}

// Hexcone channel for offset n (5, 3, 1 -> r, g, b).
double hexcone_channel(double n, double h6, double chroma, double value) {
  const double k = std::fmod(n + h6, 6.0);
  return value - chroma * std::clamp(std::min(k, 4.0 - k), 0.0, 1.0);
}

}  // namespace

double wrap_hue(double h) {
  double w = h - std::floor(h);
  if (w >= 1.0) w = 0.0;
  return w;
}

ColorHSV rgb_to_hsv(const Rgb& c) {
  const double mx = std::max({c.r, c.g, c.b});
  const double mn = std::min({c.r, c.g, c.b});
  const double delta = mx - mn;
  ColorHSV out;
  out.v = mx;
  out.s = mx > 0.0 ? delta / mx : 0.0;
  out.h = hue_of(c, mx, delta);
  return out;
}

Rgb hsv_to_rgb(const ColorHSV& hsv) {
  const double h6 = wrap_hue(hsv.h) * 6.0;
  const double chroma = hsv.v * hsv.s;
  return {hexcone_channel(5.0, h6, chroma, hsv.v),
          hexcone_channel(3.0, h6, chroma, hsv.v),
          hexcone_channel(1.0, h6, chroma, hsv.v)};
}

ColorHSL rgb_to_hsl(const Rgb& c) {
  const double mx = std::max({c.r, c.g, c.b});
  const double mn = std::min({c.r, c.g, c.b});
  const double delta = mx - mn;
  ColorHSL out;
  out.l = 0.5 * (mx + mn);
  if (delta <= 0.0) {
    out.s = 0.0;
  } else {
    out.s = delta / (1.0 - std::abs(2.0 * out.l - 1.0));
  }
  out.h = hue_of(c, mx, delta);
  return out;
}

Rgb hsl_to_rgb(const ColorHSL& hsl) {
  const double h6 = wrap_hue(hsl.h) * 6.0;
  const double chroma = (1.0 - std::abs(2.0 * hsl.l - 1.0)) * hsl.s;
  const double x = chroma * (1.0 - std::abs(std::fmod(h6, 2.0) - 1.0));
  const double m = hsl.l - 0.5 * chroma;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h6)) {
    case 0: r = chroma; g = x; break;
    case 1: r = x; g = chroma; break;
    case 2: g = chroma; b = x; break;
    case 3: g = x; b = chroma; break;
    case 4: r = x; b = chroma; break;
    default: r = chroma; b = x; break;
  }
  return {r + m, g + m, b + m};
}

}  // namespace t2s
