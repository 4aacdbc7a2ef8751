#pragma once

namespace seedcl {

// Channel values are on the 0..255 scale as doubles; hue in degrees [0, 360),
// saturation and value in [0, 1].
struct Hsv {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

Hsv rgb_to_hsv(double r, double g, double b) noexcept;
void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b) noexcept;

}  // namespace seedcl
