#include "san/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "san/netpbm.hpp"

namespace fs = std::filesystem;

namespace san {

void SaliencySample::validate(int num_classes) const {
  if (image.n() != 1 || image.c() != 3)
    fail(ErrorKind::kShape, id + ": image must be (1,3,h,w)");
  if (mask.n() != 1 || mask.c() != 1) fail(ErrorKind::kShape, id + ": mask must be (1,1,h,w)");
  if (image.h() != mask.h() || image.w() != mask.w())
    fail(ErrorKind::kShape, id + ": image/mask size mismatch");
  if (label < 1 || label > num_classes)
    fail(ErrorKind::kArgument, id + ": label " + std::to_string(label) + " outside 1.." +
                                   std::to_string(num_classes));
  for (i64 i = 0; i < image.numel(); ++i)
    if (image.at(i) < 0.0f || image.at(i) > 1.0f)
      fail(ErrorKind::kNumeric, id + ": image value outside [0,1]");
  bool any_fg = false;
  for (i64 i = 0; i < mask.numel(); ++i) {
    float v = mask.at(i);
    if (v != 0.0f && v != 1.0f) fail(ErrorKind::kNumeric, id + ": mask is not binary");
    any_fg = any_fg || v == 1.0f;
  }
  if (!any_fg) fail(ErrorKind::kArgument, id + ": mask has no salient object");
}

Tensor resize_nearest(const Tensor& t, i64 out_h, i64 out_w) {
  if (out_h < 1 || out_w < 1) fail(ErrorKind::kArgument, "resize_nearest: bad target size");
  Tensor out(t.n(), t.c(), out_h, out_w);
  for (i64 n = 0; n < t.n(); ++n)
    for (i64 c = 0; c < t.c(); ++c)
      for (i64 y = 0; y < out_h; ++y) {
        i64 sy = std::min(t.h() - 1, (2 * y + 1) * t.h() / (2 * out_h));
        for (i64 x = 0; x < out_w; ++x) {
          i64 sx = std::min(t.w() - 1, (2 * x + 1) * t.w() / (2 * out_w));
          out(n, c, y, x) = t(n, c, sy, sx);
        }
      }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace {

constexpr double kMinAreaFrac = 0.05;
constexpr double kMaxAreaFrac = 0.30;

struct ShapeRaster {
  std::vector<std::uint8_t> fg;  // per pixel, row-major
  i64 area = 0;
};

// Pixel-center-in-shape rasterizer for the five shape classes.
ShapeRaster raster_shape(int cls, i64 size, double cx, double cy, double r) {
  ShapeRaster out;
  out.fg.assign(static_cast<size_t>(size * size), 0);
  for (i64 y = 0; y < size; ++y)
    for (i64 x = 0; x < size; ++x) {
      double px = x + 0.5, py = y + 0.5;
      double dx = px - cx, dy = py - cy;
      bool in = false;
      switch (cls) {
        case 1:  // disc
          in = dx * dx + dy * dy <= r * r;
          break;
        case 2:  // axis-aligned square, half-side r
          in = std::abs(dx) <= r && std::abs(dy) <= r;
          break;
        case 3: {  // upward isoceles triangle inscribed in the 2r box
          // apex (cx, cy - r), base corners (cx +- r, cy + r)
          if (dy < -r || dy > r) break;
          double half_width = (dy + r) / 2.0;
          in = std::abs(dx) <= half_width;
          break;
        }
        case 4:  // diamond (L1 ball)
          in = std::abs(dx) + std::abs(dy) <= r;
          break;
        case 5:  // cross of two bars
          in = (std::abs(dx) <= r / 3.0 && std::abs(dy) <= r) ||
               (std::abs(dy) <= r / 3.0 && std::abs(dx) <= r);
          break;
        default:
          fail(ErrorKind::kArgument, "raster_shape: unknown class");
      }
      if (in) {
        out.fg[static_cast<size_t>(y * size + x)] = 1;
        ++out.area;
      }
    }
  return out;
}

}  // namespace

Dataset gen_synthetic_dataset(i64 n, int num_classes, i64 size, Prng& prng) {
  if (num_classes < 2 || num_classes > 5)
    fail(ErrorKind::kArgument, "gen_synthetic_dataset: num_classes must be in 2..5");
  if (n < 1 || size < 16) fail(ErrorKind::kArgument, "gen_synthetic_dataset: bad n or size");
  Dataset ds;
  ds.meta.num_classes = num_classes;
  const char* names[] = {"disc", "square", "triangle", "diamond", "cross"};
  for (int c = 0; c < num_classes; ++c) ds.meta.class_names.push_back(names[c]);

  const i64 total_px = size * size;
  for (i64 i = 0; i < n; ++i) {
    SaliencySample s;
    char id[32];
    std::snprintf(id, sizeof id, "syn%05lld", static_cast<long long>(i));
    s.id = id;
    s.label = static_cast<int>(prng.next_below(static_cast<u64>(num_classes))) + 1;

    float bg[3], fg[3];
    for (float& v : bg) v = static_cast<float>(0.15 + 0.7 * prng.next_double());
    // Foreground must contrast with the background in at least one channel.
    for (;;) {
      float dist = 0.0f;
      for (int c = 0; c < 3; ++c) {
        fg[c] = static_cast<float>(0.05 + 0.9 * prng.next_double());
        dist = std::max(dist, std::abs(fg[c] - bg[c]));
      }
      if (dist >= 0.4f) break;
    }

    // Draw geometry until the rastered area lands in the allowed band.
    ShapeRaster raster;
    for (;;) {
      double r_lo = 0.14 * size, r_hi = 0.30 * size;
      double r = r_lo + (r_hi - r_lo) * prng.next_double();
      double margin = r + 2.0;
      double cx = margin + (size - 2.0 * margin) * prng.next_double();
      double cy = margin + (size - 2.0 * margin) * prng.next_double();
      raster = raster_shape(s.label, size, cx, cy, r);
      double frac = static_cast<double>(raster.area) / static_cast<double>(total_px);
      if (frac >= kMinAreaFrac && frac <= kMaxAreaFrac) break;
    }

    s.image = Tensor(1, 3, size, size);
    s.mask = Tensor(1, 1, size, size);
    for (i64 y = 0; y < size; ++y)
      for (i64 x = 0; x < size; ++x) {
        bool in = raster.fg[static_cast<size_t>(y * size + x)] != 0;
        s.mask(0, 0, y, x) = in ? 1.0f : 0.0f;
        for (int c = 0; c < 3; ++c) {
          float v;
          if (in) {
            v = fg[c];
          } else {
            float noise = static_cast<float>((prng.next_double() - 0.5) * 0.12);
            v = bg[c] + noise;
          }
          s.image(0, c, y, x) = std::clamp(v, 0.0f, 1.0f);
        }
      }
    s.validate(num_classes);
    ds.samples.push_back(std::move(s));
  }
  ds.meta.size = static_cast<i64>(ds.samples.size());
  return ds;
}

// ---------------------------------------------------------------------------
// Directory I/O
// ---------------------------------------------------------------------------

void save_voc_style(const Dataset& ds, const std::string& root) {
  std::error_code ec;
  fs::create_directories(fs::path(root) / "images", ec);
  fs::create_directories(fs::path(root) / "masks", ec);
  if (ec) fail(ErrorKind::kIo, "cannot create dataset directories under " + root);

  std::vector<const SaliencySample*> ordered;
  for (const auto& s : ds.samples) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const SaliencySample* a, const SaliencySample* b) { return a->id < b->id; });

  std::ofstream labels((fs::path(root) / "labels.txt").string(), std::ios::trunc);
  if (!labels) fail(ErrorKind::kIo, "cannot write labels.txt under " + root);
  for (const SaliencySample* s : ordered) {
    write_ppm(s->image, (fs::path(root) / "images" / (s->id + ".ppm")).string());
    RawGray m;
    m.width = s->mask.w();
    m.height = s->mask.h();
    m.pixels.resize(static_cast<size_t>(s->mask.numel()));
    for (i64 i = 0; i < s->mask.numel(); ++i)
      m.pixels[static_cast<size_t>(i)] =
          s->mask.at(i) == 1.0f ? static_cast<std::uint8_t>(s->label) : 0;
    write_pgm_raw(m, (fs::path(root) / "masks" / (s->id + ".pgm")).string());
    labels << s->id << "\t" << s->label << "\n";
  }
  if (!labels) fail(ErrorKind::kIo, "write failed for labels.txt under " + root);
}

Dataset load_voc_style(const std::string& root, i64 resize_to) {
  std::ifstream labels((fs::path(root) / "labels.txt").string());
  if (!labels) fail(ErrorKind::kIo, "cannot open " + root + "/labels.txt");

  std::vector<std::pair<std::string, int>> roster;
  std::string line;
  int max_label = 0;
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      fail(ErrorKind::kFormat, root + "/labels.txt: expected id<TAB>label");
    std::string id = line.substr(0, tab);
    int lab;
    try {
      lab = std::stoi(line.substr(tab + 1));
    } catch (const std::exception&) {
      fail(ErrorKind::kFormat, root + "/labels.txt: bad label for id " + id);
    }
    if (lab < 1) fail(ErrorKind::kFormat, root + "/labels.txt: label must be >= 1");
    roster.emplace_back(id, lab);
    max_label = std::max(max_label, lab);
  }
  if (roster.empty()) fail(ErrorKind::kFormat, root + "/labels.txt: no samples listed");
  std::sort(roster.begin(), roster.end());

  Dataset ds;
  ds.meta.num_classes = max_label;
  for (int c = 1; c <= max_label; ++c) ds.meta.class_names.push_back("class_" + std::to_string(c));

  for (const auto& [id, declared] : roster) {
    fs::path img_path = fs::path(root) / "images" / (id + ".ppm");
    fs::path mask_path = fs::path(root) / "masks" / (id + ".pgm");
    if (!fs::exists(img_path) || !fs::exists(mask_path))
      fail(ErrorKind::kIo, root + ": missing image or mask for id " + id);

    SaliencySample s;
    s.id = id;
    s.image = read_ppm(img_path.string());
    RawGray m = read_pgm_raw(mask_path.string());
    if (m.height != s.image.h() || m.width != s.image.w())
      fail(ErrorKind::kShape, id + ": mask size differs from image size");

    // Binary saliency mask = union of all foreground classes; label = the
    // class with the largest pixel area.
    std::map<int, i64> area;
    s.mask = Tensor(1, 1, m.height, m.width);
    for (i64 i = 0; i < m.height * m.width; ++i) {
      int cls = m.pixels[static_cast<size_t>(i)];
      if (cls == 0) continue;
      if (cls > max_label)
        fail(ErrorKind::kFormat, id + ": unknown class index " + std::to_string(cls) +
                                     " (L = " + std::to_string(max_label) + ")");
      s.mask.at(i) = 1.0f;
      ++area[cls];
    }
    if (area.empty())
      fail(ErrorKind::kArgument, id + ": all-background mask, no salient object");
    i64 best = 0;
    for (const auto& [cls, px] : area)  // ascending class order; ties go to the smaller id
      if (px > best) {
        best = px;
        s.label = cls;
      }

    if (resize_to > 0 && (s.image.h() != resize_to || s.image.w() != resize_to)) {
      s.image = resize_nearest(s.image, resize_to, resize_to);
      s.mask = resize_nearest(s.mask, resize_to, resize_to);
    }
    s.validate(max_label);
    ds.samples.push_back(std::move(s));
  }
  ds.meta.size = static_cast<i64>(ds.samples.size());
  return ds;
}

}  // namespace san
