// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace t2s {

struct Rgb {
  double r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Hexcone HSV. Hue lives on the unit circle [0, 1).
struct ColorHSV {
  double h = 0, s = 0, v = 0;
};

struct ColorHSL {
  double h = 0, s = 0, l = 0;
};

/// Hue is 0 for achromatic inputs.
ColorHSV rgb_to_hsv(const Rgb& rgb);
Rgb hsv_to_rgb(const ColorHSV& hsv);

ColorHSL rgb_to_hsl(const Rgb& rgb);
Rgb hsl_to_rgb(const ColorHSL& hsl);

/// Wraps any real into [0, 1).
double wrap_hue(double h);

}  // namespace t2s
