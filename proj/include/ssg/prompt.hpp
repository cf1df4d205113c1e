#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ssg/image.hpp"

namespace ssg {

// Axis-aligned pixel rectangle, origin top-left, width/height in pixels.
struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
  bool contains(int px, int py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  bool operator==(const Rect& o) const {
    return x == o.x && y == o.y && w == o.w && h == o.h;
  }
};

using Region = std::vector<Rect>;  // union of rectangles

enum class PromptKind { TranslucentBackground, Color, Padding };

inline const char* to_string(PromptKind k) {
  switch (k) {
    case PromptKind::TranslucentBackground: return "translucent_background";
    case PromptKind::Color: return "color";
    case PromptKind::Padding: return "padding";
  }
  return "?";
}

inline PromptKind prompt_kind_from_string(const std::string& s) {
  if (s == "translucent_background") return PromptKind::TranslucentBackground;
  if (s == "color") return PromptKind::Color;
  if (s == "padding") return PromptKind::Padding;
  throw std::invalid_argument("unknown prompt kind: " + s);
}

struct PromptSpec {
  PromptKind kind = PromptKind::TranslucentBackground;
  std::array<uint8_t, 3> overlay_rgb = {255, 192, 203};  // pink
  double alpha = 0.5;
};

namespace detail {

inline bool region_in_bounds(const Region& region, const Image& img) {
  for (const Rect& r : region) {
    if (r.w <= 0 || r.h <= 0) continue;
    const int x0 = std::max(r.x, 0), y0 = std::max(r.y, 0);
    const int x1 = std::min(r.x + r.w, img.width), y1 = std::min(r.y + r.h, img.height);
    if (x0 < x1 && y0 < y1) return true;
  }
  return false;
}

inline uint8_t blend_channel(uint8_t pixel, uint8_t overlay, double alpha) {
  const double v = alpha * overlay + (1.0 - alpha) * pixel;
  return static_cast<uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
}

}  // namespace detail

// Builds the prompted frame. The region is the box of the entity under
// consideration (union of person and object boxes for verb tasks).
//   translucent_background: blend outside the region, keep inside intact
//   color:                  blend inside the region, keep outside intact
//   padding:                zero outside the region, keep inside intact
inline Image apply_prompt(const Image& img, const Region& region, const PromptSpec& spec) {
  if (img.empty()) throw std::invalid_argument("apply_prompt: empty image");
  bool any_area = false;
  for (const Rect& r : region) any_area = any_area || (r.w > 0 && r.h > 0);
  if (region.empty() || !any_area) throw std::invalid_argument("apply_prompt: empty region");
  if (!detail::region_in_bounds(region, img))
    throw std::invalid_argument("apply_prompt: region fully outside image");
  if (spec.kind != PromptKind::Padding && (spec.alpha <= 0.0 || spec.alpha >= 1.0))
    throw std::invalid_argument("apply_prompt: alpha must be in (0,1)");

  Image out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      bool inside = false;
      for (const Rect& r : region)
        if (r.contains(x, y)) {
          inside = true;
          break;
        }
      uint8_t* px = out.pixel(x, y);
      switch (spec.kind) {
        case PromptKind::TranslucentBackground:
          if (!inside)
            for (int c = 0; c < 3; ++c)
              px[c] = detail::blend_channel(px[c], spec.overlay_rgb[c], spec.alpha);
          break;
        case PromptKind::Color:
          if (inside)
            for (int c = 0; c < 3; ++c)
              px[c] = detail::blend_channel(px[c], spec.overlay_rgb[c], spec.alpha);
          break;
        case PromptKind::Padding:
          if (!inside) px[0] = px[1] = px[2] = 0;
          break;
      }
    }
  }
  return out;
}

inline Image apply_prompt(const Image& img, const Rect& box, const PromptSpec& spec) {
  return apply_prompt(img, Region{box}, spec);
}

}  // namespace ssg
