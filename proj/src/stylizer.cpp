#include "drpc/stylizer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "drpc/rng.hpp"

namespace drpc {

bool Stylizer::is_identity() const {
  return hue_deg == 0.0 && saturation == 1.0 && contrast == 1.0 && brightness == 0.0 &&
         grayscale == 0.0 && noise_amp == 0.0;
}

Stylizer identity_stylizer(const std::string& id) {
  Stylizer s;
  s.id = id;
  return s;
}

void DomainRegistry::validate() const {
  std::set<std::string> ids;
  auto insert = [&](const std::string& id) {
    if (id.empty()) throw ConfigError("stylizer with empty id");
    if (!ids.insert(id).second) {
      throw ConfigError("stylizer id '" + id + "' used by more than one registry entry");
    }
  };
  for (const Stylizer& s : train) insert(s.id);
  for (const Stylizer& s : heldout) insert(s.id);
  insert(validation.id);
  for (const Stylizer& s : train) {
    if (s.noise_amp > 0.1) throw ConfigError("stylizer '" + s.id + "': noise amplitude > 0.1");
  }
}

namespace {

struct Hsv {
  double h, s, v;
};

Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r) h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
    else if (mx == g) h = 60.0 * ((b - r) / d + 2.0);
    else h = 60.0 * ((r - g) / d + 4.0);
  }
  const double s = mx > 0.0 ? d / mx : 0.0;
  return {h, s, mx};
}

void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b) {
  const double c = hsv.v * hsv.s;
  const double hh = hsv.h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hh, 2.0) - 1.0));
  const double m = hsv.v - c;
  double rr = 0, gg = 0, bb = 0;
  if (hh < 1)      { rr = c; gg = x; }
  else if (hh < 2) { rr = x; gg = c; }
  else if (hh < 3) { gg = c; bb = x; }
  else if (hh < 4) { gg = x; bb = c; }
  else if (hh < 5) { rr = x; bb = c; }
  else             { rr = c; bb = x; }
  r = rr + m;
  g = gg + m;
  b = bb + m;
}

// Bilinearly interpolated lattice of uniform [-1,1] values; the lattice
// depends only on (seed, H, W), so the texture is the same for every
// image a stylizer touches.
Eigen::ArrayXd value_noise(int h, int w, uint64_t seed) {
  const int cell = 8;
  const int gh = (h + cell - 1) / cell + 1;
  const int gw = (w + cell - 1) / cell + 1;
  std::mt19937_64 rng(seed);
  Eigen::ArrayXd grid(static_cast<int64_t>(gh) * gw);
  for (int64_t i = 0; i < grid.size(); ++i) grid[i] = uniform(rng, -1.0, 1.0);
  Eigen::ArrayXd field(static_cast<int64_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(fy);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(fx);
      const double tx = fx - x0;
      const double v00 = grid[static_cast<int64_t>(y0) * gw + x0];
      const double v01 = grid[static_cast<int64_t>(y0) * gw + x0 + 1];
      const double v10 = grid[static_cast<int64_t>(y0 + 1) * gw + x0];
      const double v11 = grid[static_cast<int64_t>(y0 + 1) * gw + x0 + 1];
      field[static_cast<int64_t>(y) * w + x] =
          (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
    }
  }
  return field;
}

}  // namespace

Tensor apply(const Stylizer& stylizer, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw DimensionError("stylizer expects a [3,H,W] image, got " + shape_str(image.shape()));
  }
  const int h = image.dim(1), w = image.dim(2);
  const int64_t plane = static_cast<int64_t>(h) * w;
  const double* src = image.data();
  for (int64_t i = 0; i < image.size(); ++i) {
    if (src[i] < 0.0 || src[i] > 1.0 || !std::isfinite(src[i])) {
      throw DataError("stylizer input value " + std::to_string(src[i]) +
                      " outside [0,1] at flat index " + std::to_string(i));
    }
  }
  Tensor out = image.detach();
  if (stylizer.is_identity()) return out;

  double* d = out.data();
  double* r = d;
  double* g = d + plane;
  double* b = d + 2 * plane;

  if (stylizer.hue_deg != 0.0 || stylizer.saturation != 1.0) {
    for (int64_t i = 0; i < plane; ++i) {
      Hsv hsv = rgb_to_hsv(r[i], g[i], b[i]);
      hsv.h = std::fmod(hsv.h + stylizer.hue_deg + 720.0, 360.0);
      hsv.s = std::clamp(hsv.s * stylizer.saturation, 0.0, 1.0);
      hsv_to_rgb(hsv, r[i], g[i], b[i]);
    }
  }
  if (stylizer.contrast != 1.0 || stylizer.brightness != 0.0) {
    for (int64_t i = 0; i < 3 * plane; ++i) {
      d[i] = (d[i] - 0.5) * stylizer.contrast + 0.5 + stylizer.brightness;
    }
  }
  if (stylizer.grayscale != 0.0) {
    const double a = stylizer.grayscale;
    for (int64_t i = 0; i < plane; ++i) {
      const double lum = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
      r[i] = (1 - a) * r[i] + a * lum;
      g[i] = (1 - a) * g[i] + a * lum;
      b[i] = (1 - a) * b[i] + a * lum;
    }
  }
  if (stylizer.noise_amp != 0.0) {
    const Eigen::ArrayXd field = value_noise(h, w, stylizer.noise_seed);
    for (int64_t i = 0; i < plane; ++i) {
      const double n = stylizer.noise_amp * field[i];
      r[i] += n;
      g[i] += n;
      b[i] += n;
    }
  }
  for (int64_t i = 0; i < 3 * plane; ++i) d[i] = std::clamp(d[i], 0.0, 1.0);
  return out;
}

DomainGroup make_group(const Tensor& image, const Tensor& label,
                       const DomainRegistry& registry) {
  if (registry.train.empty()) {
    throw ConfigError("make_group requires at least one training stylizer");
  }
  DomainGroup group;
  group.images.reserve(registry.train.size() + 1);
  group.images.push_back(image.detach());
  group.domain_ids.push_back("source");
  for (const Stylizer& s : registry.train) {
    group.images.push_back(apply(s, image));
    group.domain_ids.push_back(s.id);
  }
  group.label = label;  // shared, never copied per domain
  return group;
}

DomainRegistry default_registry() {
  DomainRegistry reg;
  auto mk = [](std::string id, double hue, double sat, double con, double bri, double gray,
               double amp, uint64_t seed) {
    Stylizer s;
    s.id = std::move(id);
    s.hue_deg = hue;
    s.saturation = sat;
    s.contrast = con;
    s.brightness = bri;
    s.grayscale = gray;
    s.noise_amp = amp;
    s.noise_seed = seed;
    return s;
  };
  reg.train = {
      mk("aug01", 40.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0),
      mk("aug02", -40.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0),
      mk("aug03", 80.0, 1.1, 1.0, 0.0, 0.0, 0.0, 0),
      mk("aug04", -80.0, 0.9, 1.0, 0.0, 0.0, 0.0, 0),
      mk("aug05", 120.0, 1.0, 1.0, 0.05, 0.0, 0.0, 0),
      mk("aug06", -120.0, 1.0, 1.0, -0.05, 0.0, 0.0, 0),
      mk("aug07", 160.0, 1.2, 1.0, 0.0, 0.0, 0.0, 0),
      mk("aug08", -160.0, 0.8, 1.0, 0.0, 0.0, 0.0, 0),
      mk("aug09", 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 0),
      mk("aug10", 20.0, 1.6, 1.0, 0.0, 0.0, 0.0, 0),
      mk("aug11", 0.0, 1.0, 0.6, 0.1, 0.0, 0.0, 0),
      mk("aug12", -20.0, 1.0, 1.4, -0.1, 0.0, 0.0, 0),
      mk("aug13", 0.0, 1.0, 1.0, 0.0, 0.7, 0.0, 0),
      mk("aug14", 60.0, 1.2, 1.0, 0.0, 0.0, 0.08, 171),
      mk("aug15", -100.0, 1.0, 1.2, 0.0, 0.0, 0.05, 407),
  };
  reg.heldout = {
      mk("test01", 60.0, 1.25, 0.9, 0.05, 0.0, 0.0, 0),
      mk("test02", -140.0, 0.7, 1.15, 0.0, 0.0, 0.04, 911),
      mk("test03", 100.0, 1.0, 1.1, -0.05, 0.35, 0.0, 0),
  };
  reg.validation = mk("val01", -60.0, 1.15, 1.05, 0.0, 0.0, 0.03, 523);
  reg.validate();
  return reg;
}

}  // namespace drpc
