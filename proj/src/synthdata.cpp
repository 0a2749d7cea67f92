#include "ssdas/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "ssdas/errors.hpp"
#include "ssdas/rng.hpp"

namespace fs = std::filesystem;

namespace ssdas {

namespace {

struct Shape {
  int kind = 1;  // class index: 1 circle, 2 square, 3 triangle
  double cy = 0, cx = 0, radius = 0;
  double jitter = 0;  // brightness factor offset
};

bool contains(const Shape& s, double y, double x) {
  const double dy = y - s.cy, dx = x - s.cx;
  switch (s.kind) {
    case 1:
      return dy * dy + dx * dx <= s.radius * s.radius;
    case 2:
      return std::fabs(dy) <= s.radius && std::fabs(dx) <= s.radius;
    default: {  // upward triangle
      const double t = dy + s.radius;  // 0 at apex, 2r at base
      return t >= 0.0 && t <= 2.0 * s.radius && std::fabs(dx) <= 0.5 * t;
    }
  }
}

// RGB <-> HSV on [0,1]; hue in degrees.
void rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  *v = mx;
  *s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    *h = 0.0;
  } else if (mx == r) {
    *h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
  } else if (mx == g) {
    *h = 60.0 * ((b - r) / d + 2.0);
  } else {
    *h = 60.0 * ((r - g) / d + 4.0);
  }
}

void hsv_to_rgb(double h, double s, double v, double* r, double* g, double* b) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double rr = 0, gg = 0, bb = 0;
  if (hp < 1) {
    rr = c, gg = x;
  } else if (hp < 2) {
    rr = x, gg = c;
  } else if (hp < 3) {
    gg = c, bb = x;
  } else if (hp < 4) {
    gg = x, bb = c;
  } else if (hp < 5) {
    rr = x, bb = c;
  } else {
    rr = c, gg = x;
  }
  const double m = v - c;
  *r = rr + m;
  *g = gg + m;
  *b = bb + m;
}

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::vector<Shape> place_shapes(const DomainSpec& spec, int image_index, Rng& rng) {
  const int shape_kinds = spec.num_classes - 1;
  const double min_r = spec.width / 8.0;
  const int max_layout_attempts = 20;
  for (int attempt = 0; attempt < max_layout_attempts; ++attempt) {
    const int count = 1 + rng.uniform_int(4);
    const double max_r = count >= 3 ? spec.width / 6.0 : spec.width / 4.8;
    std::vector<Shape> shapes;
    bool ok = true;
    for (int i = 0; i < count && ok; ++i) {
      Shape s;
      s.kind = (i == 0 && image_index < shape_kinds) ? image_index + 1
                                                     : 1 + rng.uniform_int(shape_kinds);
      s.jitter = rng.uniform(-spec.appearance.shape_jitter, spec.appearance.shape_jitter);
      bool placed = false;
      for (int retry = 0; retry < 60 && !placed; ++retry) {
        s.radius = rng.uniform(min_r, max_r);
        s.cy = rng.uniform(s.radius + 1.0, spec.height - s.radius - 1.0);
        s.cx = rng.uniform(s.radius + 1.0, spec.width - s.radius - 1.0);
        placed = true;
        for (const Shape& other : shapes) {
          const double dy = s.cy - other.cy, dx = s.cx - other.cx;
          const double min_sep = s.radius + other.radius + 1.0;
          if (dy * dy + dx * dx < min_sep * min_sep) {
            placed = false;
            break;
          }
        }
      }
      if (placed)
        shapes.push_back(s);
      else
        ok = false;
    }
    if (ok) return shapes;
  }
  throw DataError("generate_domain: could not place shapes after bounded retries");
}

void render_image(const DomainSpec& spec, const std::vector<Shape>& shapes, Rng& rng,
                  RawImage* img, RawMask* mask) {
  const int h = spec.height, w = spec.width;
  const Appearance& ap = spec.appearance;
  img->h = h;
  img->w = w;
  img->rgb.assign(static_cast<std::size_t>(h) * w * 3, 0);
  mask->h = h;
  mask->w = w;
  mask->cls.assign(static_cast<std::size_t>(h) * w, 0);

  constexpr double kTau = 6.283185307179586476925286766559;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int cls = 0;
      double jitter = 0.0;
      for (const Shape& s : shapes) {
        if (contains(s, y, x)) {
          cls = s.kind;
          jitter = s.jitter;
          break;  // shapes do not overlap
        }
      }
      mask->cls[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(cls);

      double rgb[3];
      const auto& base = ap.base_colors[static_cast<std::size_t>(cls)];
      if (cls == 0) {
        const double tex = 1.0 + ap.texture_amp * std::sin(kTau * ap.texture_freq * x / w) *
                                     std::sin(kTau * ap.texture_freq * y / h);
        for (int c = 0; c < 3; ++c) rgb[c] = base[static_cast<std::size_t>(c)] * tex;
      } else {
        for (int c = 0; c < 3; ++c) rgb[c] = base[static_cast<std::size_t>(c)] * (1.0 + jitter);
      }

      if (ap.hue_rotation_deg != 0.0) {
        double hh, ss, vv;
        rgb_to_hsv(rgb[0], rgb[1], rgb[2], &hh, &ss, &vv);
        hsv_to_rgb(hh + ap.hue_rotation_deg, ss, vv, &rgb[0], &rgb[1], &rgb[2]);
      }
      for (int c = 0; c < 3; ++c) {
        double v = rgb[c] + ap.brightness;
        if (ap.noise_amp > 0.0) v += ap.noise_amp * rng.normal();
        img->rgb[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)] =
            quantize(v);
      }
    }
  }
}

}  // namespace

DomainSpec apply_shift(const DomainSpec& source, double shift) {
  DomainSpec target = source;
  target.appearance.hue_rotation_deg += 90.0 * shift;
  target.appearance.brightness += 0.18 * shift;
  target.appearance.noise_amp += 0.10 * shift;
  return target;
}

GeneratedDomain generate_domain(const DomainSpec& spec, int count) {
  if (spec.height < 8 || spec.width < 8)
    throw std::invalid_argument("generate_domain: image size too small");
  if (spec.num_classes < 2 || spec.num_classes > 4)
    throw std::invalid_argument("generate_domain: num_classes must be in [2,4]");
  GeneratedDomain out;
  out.images.resize(static_cast<std::size_t>(count));
  out.masks.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    const auto shapes = place_shapes(spec, i, rng);
    render_image(spec, shapes, rng, &out.images[static_cast<std::size_t>(i)],
                 &out.masks[static_cast<std::size_t>(i)]);
  }
  return out;
}

SplitIndices make_split(int target_count, int k, int val_count, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("make_split: k must be >= 1");
  if (val_count < 1 || val_count >= target_count)
    throw std::invalid_argument("make_split: invalid validation size");
  const int pool = target_count - val_count;
  if (k > pool) throw std::invalid_argument("make_split: k exceeds target size - validation size");

  std::vector<int> indices(static_cast<std::size_t>(pool));
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(derive_seed(seed, "k_shot"));
  for (int i = 0; i < k; ++i) {
    const int j = i + rng.uniform_int(pool - i);
    std::swap(indices[static_cast<std::size_t>(i)], indices[static_cast<std::size_t>(j)]);
  }

  SplitIndices split;
  split.k_shot.assign(indices.begin(), indices.begin() + k);
  split.unlabeled.assign(indices.begin() + k, indices.end());
  std::sort(split.unlabeled.begin(), split.unlabeled.end());
  split.validation.resize(static_cast<std::size_t>(val_count));
  std::iota(split.validation.begin(), split.validation.end(), pool);
  return split;
}

namespace {

std::string index_name(int i, const char* ext) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", i);
  return std::string(buf) + ext;
}

void write_domain(const fs::path& dir, const GeneratedDomain& dom) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  for (std::size_t i = 0; i < dom.images.size(); ++i) {
    write_ppm((dir / "images" / index_name(static_cast<int>(i), ".ppm")).string(),
              dom.images[i]);
    write_pgm((dir / "masks" / index_name(static_cast<int>(i), ".pgm")).string(), dom.masks[i]);
  }
}

GeneratedDomain read_domain(const fs::path& dir, int count) {
  GeneratedDomain dom;
  dom.images.reserve(static_cast<std::size_t>(count));
  dom.masks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto ppm = dir / "images" / index_name(i, ".ppm");
    const auto pgm = dir / "masks" / index_name(i, ".pgm");
    if (!fs::exists(ppm) || !fs::exists(pgm))
      throw DataError("dataset is missing " + ppm.string() + " or " + pgm.string());
    dom.images.push_back(read_ppm(ppm.string()));
    dom.masks.push_back(read_pgm(pgm.string()));
  }
  return dom;
}

}  // namespace

void write_dataset(const std::string& root, const Dataset& ds) {
  const fs::path base(root);
  write_domain(base / "source", ds.source);
  write_domain(base / "target", ds.target);
  nlohmann::json j;
  j["num_classes"] = ds.num_classes;
  j["source_count"] = ds.source.images.size();
  j["target_count"] = ds.target.images.size();
  j["k_shot"] = ds.split.k_shot;
  j["unlabeled"] = ds.split.unlabeled;
  j["validation"] = ds.split.validation;
  std::ofstream out(base / "split.json");
  if (!out) throw DataError("cannot write split.json under " + root);
  out << j.dump(2) << "\n";
}

Dataset load_dataset(const std::string& root) {
  const fs::path base(root);
  std::ifstream in(base / "split.json");
  if (!in) throw DataError("missing split.json under " + root);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("split.json parse error: " + std::string(e.what()));
  }
  Dataset ds;
  try {
    ds.num_classes = j.at("num_classes").get<int>();
    const int source_count = j.at("source_count").get<int>();
    const int target_count = j.at("target_count").get<int>();
    ds.split.k_shot = j.at("k_shot").get<std::vector<int>>();
    ds.split.unlabeled = j.at("unlabeled").get<std::vector<int>>();
    ds.split.validation = j.at("validation").get<std::vector<int>>();
    ds.source = read_domain(base / "source", source_count);
    ds.target = read_domain(base / "target", target_count);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("split.json field error: " + std::string(e.what()));
  }
  for (const auto& list : {ds.split.k_shot, ds.split.unlabeled, ds.split.validation})
    for (int idx : list)
      if (idx < 0 || idx >= static_cast<int>(ds.target.images.size()))
        throw DataError("split.json index out of range");
  return ds;
}

Tensor image_to_tensor(const RawImage& img) {
  Tensor t({3, img.h, img.w});
  double* d = t.data();
  const std::int64_t pixels = static_cast<std::int64_t>(img.h) * img.w;
  for (std::int64_t p = 0; p < pixels; ++p)
    for (int c = 0; c < 3; ++c)
      d[c * pixels + p] = static_cast<double>(img.rgb[static_cast<std::size_t>(p * 3 + c)]) / 255.0;
  return t;
}

}  // namespace ssdas
