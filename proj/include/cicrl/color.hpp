#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cicrl/common.hpp"

namespace cicrl {

using Rgb = std::array<double, 3>;
using Lab = std::array<double, 3>;

namespace detail {

// sRGB primaries, D65 reference white.
inline constexpr double kWhite[3] = {0.95047, 1.0, 1.08883};
inline constexpr double kRgbToXyz[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                           {0.2126729, 0.7151522, 0.0721750},
                                           {0.0193339, 0.1191920, 0.9503041}};
inline constexpr double kDelta = 6.0 / 29.0;

// Exact inverse of kRgbToXyz, so conversions round-trip to machine precision.
inline const std::array<std::array<double, 3>, 3>& xyz_to_rgb() {
  static const auto inv = [] {
    const auto& m = kRgbToXyz;
    std::array<std::array<double, 3>, 3> r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        r[j][i] = m[(i + 1) % 3][(j + 1) % 3] * m[(i + 2) % 3][(j + 2) % 3] -
                  m[(i + 1) % 3][(j + 2) % 3] * m[(i + 2) % 3][(j + 1) % 3];
    const double det = m[0][0] * r[0][0] + m[0][1] * r[1][0] + m[0][2] * r[2][0];
    for (auto& row : r)
      for (double& v : row) v /= det;
    return r;
  }();
  return inv;
}

inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}
inline double linear_to_srgb(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(std::max(c, 0.0), 1.0 / 2.4) - 0.055;
}
inline double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3 * kDelta * kDelta) + 4.0 / 29.0;
}
inline double lab_finv(double f) {
  return f > kDelta ? f * f * f : 3 * kDelta * kDelta * (f - 4.0 / 29.0);
}

}  // namespace detail

inline Lab rgb_to_lab(const Rgb& rgb) {
  double lin[3];
  for (int i = 0; i < 3; ++i) lin[i] = detail::srgb_to_linear(rgb[i]);
  double f[3];
  for (int r = 0; r < 3; ++r) {
    double xyz = 0.0;
    for (int c = 0; c < 3; ++c) xyz += detail::kRgbToXyz[r][c] * lin[c];
    f[r] = detail::lab_f(xyz / detail::kWhite[r]);
  }
  return {116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])};
}

/// Inverse conversion; the result may fall outside [0,1] for out-of-gamut Lab values.
inline Rgb lab_to_rgb(const Lab& lab) {
  const double fy = (lab[0] + 16.0) / 116.0;
  const double fx = fy + lab[1] / 500.0;
  const double fz = fy - lab[2] / 200.0;
  const double xyz[3] = {detail::lab_finv(fx) * detail::kWhite[0],
                         detail::lab_finv(fy) * detail::kWhite[1],
                         detail::lab_finv(fz) * detail::kWhite[2]};
  Rgb out{};
  for (int r = 0; r < 3; ++r) {
    double lin = 0.0;
    for (int c = 0; c < 3; ++c) lin += detail::xyz_to_rgb()[r][c] * xyz[c];
    out[r] = detail::linear_to_srgb(lin);
  }
  return out;
}

/// CIE76 color difference.
inline double delta_e(const Lab& a, const Lab& b) {
  const double dl = a[0] - b[0], da = a[1] - b[1], db = a[2] - b[2];
  return std::sqrt(dl * dl + da * da + db * db);
}

/// A color patch. The Lab coordinates are always derived from the RGB channels.
class Color {
 public:
  Color() : Color(Rgb{0.0, 0.0, 0.0}) {}
  explicit Color(const Rgb& rgb) : rgb_(rgb) {
    for (double c : rgb)
      if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("rgb channel outside [0,1]");
    lab_ = rgb_to_lab(rgb_);
  }

  /// Clamps a Lab value into the sRGB gamut.
  static Color from_lab(const Lab& lab) {
    Rgb rgb = lab_to_rgb(lab);
    for (double& c : rgb) c = std::clamp(c, 0.0, 1.0);
    return Color(rgb);
  }

  const Rgb& rgb() const { return rgb_; }
  const Lab& lab() const { return lab_; }

  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s = "#";
    for (double c : rgb_) {
      const int v = static_cast<int>(std::lround(c * 255.0));
      s += kDigits[v >> 4];
      s += kDigits[v & 15];
    }
    return s;
  }

  friend bool operator==(const Color& a, const Color& b) { return a.rgb_ == b.rgb_; }

 private:
  Rgb rgb_;
  Lab lab_;
};

inline double delta_e(const Color& a, const Color& b) { return delta_e(a.lab(), b.lab()); }

enum class Condition { Far, Split, Close };

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Far: return "far";
    case Condition::Split: return "split";
    case Condition::Close: return "close";
  }
  return "?";
}

inline Condition condition_from_string(std::string_view s) {
  if (s == "far") return Condition::Far;
  if (s == "split") return Condition::Split;
  if (s == "close") return Condition::Close;
  throw std::invalid_argument("unknown condition '" + std::string(s) + "'");
}

inline constexpr std::array<Condition, 3> kAllConditions{Condition::Far, Condition::Split,
                                                         Condition::Close};

/// Difficulty thresholds in ΔE units.
struct ConditionThresholds {
  double close_below = 20.0;
  double far_above = 50.0;
};

using Patches = std::array<Color, 3>;

inline std::array<double, 3> pairwise_distances(const Patches& p) {
  return {delta_e(p[0], p[1]), delta_e(p[0], p[2]), delta_e(p[1], p[2])};
}

inline Condition classify_condition(const Patches& patches, const ConditionThresholds& th = {}) {
  const auto d = pairwise_distances(patches);
  const double lo = *std::min_element(d.begin(), d.end());
  const double hi = *std::max_element(d.begin(), d.end());
  if (hi < th.close_below) return Condition::Close;
  if (lo > th.far_above) return Condition::Far;
  return Condition::Split;
}

struct ColorContext {
  Patches patches;
  int target_index = 0;
  Condition condition = Condition::Split;

  const Color& target() const { return patches[static_cast<std::size_t>(target_index)]; }
};

struct DistanceFeatures {
  double d_min = 0.0;
  double d_max = 0.0;
  double d_avg = 0.0;
};

inline DistanceFeatures distance_features(const ColorContext& ctx) {
  const auto d = pairwise_distances(ctx.patches);
  return {*std::min_element(d.begin(), d.end()), *std::max_element(d.begin(), d.end()),
          (d[0] + d[1] + d[2]) / 3.0};
}

inline constexpr int kMaxContextAttempts = 10000;

/// Draws a context of the requested difficulty by rejection sampling.
///
/// Far and split proposals are three independent uniform sRGB colors. Close
/// proposals jitter an anchor color in Lab (each axis within ±jitter), since
/// independent uniform triples essentially never land within the close radius.
inline ColorContext generate_context(Condition condition, Rng& rng, const ConditionThresholds& th = {},
                                     int max_attempts = kMaxContextAttempts) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double jitter = th.close_below * 0.55;
  std::uniform_real_distribution<double> offset(-jitter, jitter);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Patches p;
    if (condition == Condition::Close) {
      const Color anchor(Rgb{unit(rng), unit(rng), unit(rng)});
      p[0] = anchor;
      bool in_gamut = true;
      for (int k = 1; k < 3; ++k) {
        Lab lab = anchor.lab();
        for (double& v : lab) v += offset(rng);
        const Rgb rgb = lab_to_rgb(lab);
        for (double c : rgb) in_gamut = in_gamut && c >= 0.0 && c <= 1.0;
        if (!in_gamut) break;
        p[static_cast<std::size_t>(k)] = Color(rgb);
      }
      if (!in_gamut) continue;
      std::shuffle(p.begin(), p.end(), rng);
    } else {
      for (auto& c : p) c = Color(Rgb{unit(rng), unit(rng), unit(rng)});
    }
    if (classify_condition(p, th) != condition) continue;
    const int target = std::uniform_int_distribution<int>(0, 2)(rng);
    return ColorContext{p, target, condition};
  }
  throw std::runtime_error("generate_context: no " + std::string(to_string(condition)) +
                           " context after " + std::to_string(max_attempts) + " attempts");
}

/// Generates `count` contexts split as evenly as possible across the three
/// conditions (far, split, close order; remainder goes to the earliest).
inline std::vector<ColorContext> generate_balanced(int count, Rng& rng, const ConditionThresholds& th = {}) {
  std::vector<ColorContext> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int ci = 0; ci < 3; ++ci) {
    const int n = count / 3 + (ci < count % 3 ? 1 : 0);
    for (int i = 0; i < n; ++i) out.push_back(generate_context(kAllConditions[static_cast<std::size_t>(ci)], rng, th));
  }
  return out;
}

// ---- JSON lines ------------------------------------------------------------

inline nlohmann::json to_json(const ColorContext& ctx) {
  nlohmann::json patches = nlohmann::json::array();
  for (const auto& c : ctx.patches) patches.push_back({c.rgb()[0], c.rgb()[1], c.rgb()[2]});
  return {{"patches", patches}, {"target", ctx.target_index}, {"condition", to_string(ctx.condition)}};
}

/// Parses one context line; the stated condition must agree with the patches.
inline ColorContext context_from_json(const nlohmann::json& j, const ConditionThresholds& th = {}) {
  const auto& arr = j.at("patches");
  if (!arr.is_array() || arr.size() != 3) throw std::invalid_argument("context needs exactly 3 patches");
  ColorContext ctx;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& c = arr[i];
    if (!c.is_array() || c.size() != 3) throw std::invalid_argument("patch must be [r,g,b]");
    ctx.patches[i] = Color(Rgb{c[0].get<double>(), c[1].get<double>(), c[2].get<double>()});
  }
  ctx.target_index = j.at("target").get<int>();
  if (ctx.target_index < 0 || ctx.target_index > 2) throw std::invalid_argument("target index out of range");
  ctx.condition = condition_from_string(j.at("condition").get<std::string>());
  if (classify_condition(ctx.patches, th) != ctx.condition)
    throw std::invalid_argument("context condition disagrees with its patches");
  return ctx;
}

}  // namespace cicrl
