#pragma once

#include <cmath>
#include <complex>
#include <numbers>

#include "infusenet/imaging.hpp"

namespace oracle {

/// Vertical-stripe grating 0.5 + amp*sin(2*pi*(x - shift)/period).
inline ifn::Image grating(int h, int w, double period, double shift, double amp = 0.25) {
  ifn::Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(y, x) = 0.5 + amp * std::sin(2.0 * std::numbers::pi * (x - shift) / period);
  return img;
}

/// Horizontal displacement of `b` relative to `a` from the cross-power phase
/// at horizontal frequency `cycles` / width, summed over rows. Exact for
/// pure sinusoids of that frequency.
inline double phase_shift_x(const ifn::Image& a, const ifn::Image& b, int cycles) {
  const double k = 2.0 * std::numbers::pi * cycles / a.width;
  std::complex<double> cross(0.0, 0.0);
  for (int y = 0; y < a.height; ++y) {
    std::complex<double> fa(0.0, 0.0), fb(0.0, 0.0);
    for (int x = 0; x < a.width; ++x) {
      const std::complex<double> e = std::polar(1.0, -k * x);
      fa += a.at(y, x) * e;
      fb += b.at(y, x) * e;
    }
    cross += fb * std::conj(fa);
  }
  return -std::arg(cross) / k;
}

}  // namespace oracle
