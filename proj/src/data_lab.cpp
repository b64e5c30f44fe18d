#include "eccd/data_lab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>

#include "eccd/binary_io.hpp"

namespace eccd {

TrainingSet NoisyDataset::training_view() const {
  TrainingSet out{{}, num_classes, height, width};
  out.samples.reserve(samples.size());
  for (const auto& s : samples) out.samples.push_back(s.observed);
  return out;
}

void NoisyDataset::validate() const {
  for (const auto& s : samples) {
    const auto& o = s.observed;
    if (!o.image.same_shape(height, width) || !o.noisy_labels.same_shape(height, width) ||
        (s.clean_labels && !s.clean_labels->same_shape(height, width)))
      throw std::invalid_argument("sample '" + o.sample_id + "' is not " +
                                  std::to_string(height) + "x" + std::to_string(width));
    for (auto c : o.noisy_labels.data)
      if (c >= num_classes)
        throw std::invalid_argument("sample '" + o.sample_id + "' has label " +
                                    std::to_string(c) + " >= K");
  }
}

// ---------------------------------------------------------------- generation

namespace {

std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%04zu", i);
  return buf;
}

void fill_ellipse(LabelMap& m, double cy, double cx, double ry, double rx) {
  for (std::size_t i = 0; i < m.height; ++i)
    for (std::size_t j = 0; j < m.width; ++j) {
      const double dy = (static_cast<double>(i) - cy) / ry;
      const double dx = (static_cast<double>(j) - cx) / rx;
      if (dy * dy + dx * dx <= 1.0) m(i, j) = 1;
    }
}

void fill_rect(LabelMap& m, std::size_t top, std::size_t left, std::size_t h,
               std::size_t w) {
  for (std::size_t i = top; i < std::min(m.height, top + h); ++i)
    for (std::size_t j = left; j < std::min(m.width, left + w); ++j) m(i, j) = 1;
}

LabelMap draw_shapes(std::size_t h, std::size_t w, RandomStream& rng,
                     const SynthOptions& opts) {
  const std::size_t span = opts.max_shapes - opts.min_shapes + 1;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    LabelMap mask(h, w, 0);
    const std::size_t shapes = opts.min_shapes + rng.below(span);
    for (std::size_t s = 0; s < shapes; ++s) {
      if (rng.bernoulli(0.5)) {
        const double ry = rng.uniform(3.0, std::max(3.5, h / 4.0));
        const double rx = rng.uniform(3.0, std::max(3.5, w / 4.0));
        const double cy = rng.uniform(ry, h - 1.0 - ry);
        const double cx = rng.uniform(rx, w - 1.0 - rx);
        fill_ellipse(mask, cy, cx, ry, rx);
      } else {
        const std::size_t rh = 5 + rng.below(std::max<std::size_t>(1, h / 2 - 4));
        const std::size_t rw = 5 + rng.below(std::max<std::size_t>(1, w / 2 - 4));
        const std::size_t top = rng.below(h - rh + 1);
        const std::size_t left = rng.below(w - rw + 1);
        fill_rect(mask, top, left, rh, rw);
      }
    }
    const Components comps = label_components(mask);
    const bool big_enough =
        std::all_of(comps.areas.begin(), comps.areas.end(),
                    [&](std::size_t a) { return a >= opts.min_component_area; });
    std::size_t fg = 0;
    for (auto v : mask.data) fg += v;
    const double frac = static_cast<double>(fg) / static_cast<double>(h * w);
    if (big_enough && frac > opts.min_foreground_fraction &&
        frac < opts.max_foreground_fraction)
      return mask;
  }
  throw std::runtime_error("synth_shapes: could not draw an admissible mask");
}

}  // namespace

NoisyDataset synth_shapes(std::size_t n, std::size_t height, std::size_t width,
                          std::uint64_t seed, const SynthOptions& opts) {
  if (height < 16 || width < 16)
    throw std::invalid_argument("synth_shapes: H and W must be at least 16");
  if (opts.min_shapes < 1 || opts.max_shapes < opts.min_shapes)
    throw std::invalid_argument("synth_shapes: invalid shape count range");
  NoisyDataset ds;
  ds.num_classes = 2;
  ds.height = height;
  ds.width = width;
  ds.provenance.add("generator_seed", std::to_string(seed));
  const RandomStream root(seed);
  for (std::size_t s = 0; s < n; ++s) {
    RandomStream rng = root.split(s);
    LabelMap mask = draw_shapes(height, width, rng, opts);
    Image img(height, width, 0.0);
    for (std::size_t a = 0; a < img.size(); ++a) {
      const double v = opts.background + opts.foreground_offset * mask[a] +
                       opts.texture_std * rng.normal();
      img[a] = std::round(255.0 * std::clamp(v, 0.0, 1.0)) / 255.0;
    }
    ds.samples.push_back({TrainingSample{sample_name(s), std::move(img), mask}, mask});
  }
  return ds;
}

// ----------------------------------------------------------- mask utilities

bool is_binary(const LabelMap& mask) {
  return std::all_of(mask.data.begin(), mask.data.end(), [](auto v) { return v <= 1; });
}

namespace {

void require_binary(const LabelMap& mask, const char* who) {
  if (!is_binary(mask)) throw std::invalid_argument(std::string(who) + ": mask is not binary");
}

// Separable square min/max filter; outside pixels are background.
LabelMap morph_filter(const LabelMap& mask, std::size_t r, bool dilation) {
  if (r == 0) return mask;
  const std::size_t h = mask.height, w = mask.width;
  auto pass = [&](const LabelMap& in, bool horizontal) {
    LabelMap out(h, w, 0);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t pos = horizontal ? j : i;
        const std::size_t len = horizontal ? w : h;
        bool acc = !dilation;
        for (std::ptrdiff_t d = -static_cast<std::ptrdiff_t>(r);
             d <= static_cast<std::ptrdiff_t>(r); ++d) {
          const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(pos) + d;
          bool v = false;
          if (q >= 0 && q < static_cast<std::ptrdiff_t>(len))
            v = horizontal ? in(i, q) != 0 : in(q, j) != 0;
          if (dilation) acc = acc || v;
          else acc = acc && v;
        }
        out(i, j) = acc ? 1 : 0;
      }
    return out;
  };
  return pass(pass(mask, true), false);
}

LabelMap affine(const LabelMap& mask, double ty, double tx, double angle, double scale) {
  const std::size_t h = mask.height, w = mask.width;
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double c = std::cos(angle), s = std::sin(angle);
  LabelMap out(h, w, 0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      // Inverse map: source = R^T (p - center - t) / scale + center.
      const double py = static_cast<double>(i) - cy - ty;
      const double px = static_cast<double>(j) - cx - tx;
      const double sy = (c * py - s * px) / scale + cy;
      const double sx = (s * py + c * px) / scale + cx;
      const long si = std::lround(sy), sj = std::lround(sx);
      if (si >= 0 && sj >= 0 && si < static_cast<long>(h) && sj < static_cast<long>(w))
        out(i, j) = mask(si, sj);
    }
  return out;
}

}  // namespace

LabelMap dilate(const LabelMap& mask, std::size_t radius) {
  return morph_filter(mask, radius, true);
}

LabelMap erode(const LabelMap& mask, std::size_t radius) {
  return morph_filter(mask, radius, false);
}

Components label_components(const LabelMap& mask) {
  Components c{Grid<std::uint32_t>(mask.height, mask.width, 0), 0, {}};
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (mask[start] == 0 || c.ids[start] != 0) continue;
    const auto id = static_cast<std::uint32_t>(++c.count);
    std::size_t area = 0;
    stack.push_back(start);
    c.ids[start] = id;
    while (!stack.empty()) {
      const std::size_t a = stack.back();
      stack.pop_back();
      ++area;
      const std::size_t i = a / mask.width, j = a % mask.width;
      auto visit = [&](std::size_t b) {
        if (mask[b] != 0 && c.ids[b] == 0) {
          c.ids[b] = id;
          stack.push_back(b);
        }
      };
      if (i > 0) visit(a - mask.width);
      if (i + 1 < mask.height) visit(a + mask.width);
      if (j > 0) visit(a - 1);
      if (j + 1 < mask.width) visit(a + 1);
    }
    c.areas.push_back(area);
  }
  return c;
}

// --------------------------------------------------------------------- noise

LabelMap morph_noise(const LabelMap& mask, double alpha, double beta, RandomStream& rng,
                     const MorphOptions& opts, NoiseReport* report) {
  require_binary(mask, "morph_noise");
  if (report) *report = NoiseReport{};
  if (!rng.bernoulli(alpha)) return mask;
  const auto radius = static_cast<std::size_t>(std::lround(opts.radius_per_beta * beta));
  const std::uint64_t pick = rng.below(3);
  if (pick == 0) {
    if (report) report->morph_op = MorphOp::dilate;
    return dilate(mask, radius);
  }
  if (pick == 1) {
    if (report) report->morph_op = MorphOp::erode;
    return erode(mask, radius);
  }
  if (report) report->morph_op = MorphOp::affine;
  const double t = opts.translate_per_beta * beta *
                   static_cast<double>(std::min(mask.height, mask.width));
  const double ty = rng.uniform(-t, t);
  const double tx = rng.uniform(-t, t);
  const double rot = opts.rotate_deg_per_beta * beta * std::numbers::pi / 180.0;
  const double angle = rng.uniform(-rot, rot);
  const double ds = opts.scale_per_beta * beta;
  const double scale = rng.uniform(1.0 - ds, 1.0 + ds);
  return affine(mask, ty, tx, angle, scale);
}

LabelMap whu_noise(const LabelMap& mask, double phi, double zeta, double lambda,
                   RandomStream& rng, NoiseReport* report) {
  require_binary(mask, "whu_noise");
  const Components comps = label_components(mask);
  NoiseReport rep;
  rep.components = comps.count;

  LabelMap out(mask.height, mask.width, 0);
  for (std::size_t id = 1; id <= comps.count; ++id) {
    if (rng.bernoulli(phi)) {
      ++rep.omitted;
      continue;
    }
    LabelMap part(mask.height, mask.width, 0);
    for (std::size_t a = 0; a < part.size(); ++a) part[a] = comps.ids[a] == id ? 1 : 0;
    if (rng.bernoulli(lambda)) {
      ++rep.perturbed;
      const std::size_t radius = 1 + rng.below(2);
      part = rng.bernoulli(0.5) ? dilate(part, radius) : erode(part, radius);
    }
    for (std::size_t a = 0; a < out.size(); ++a) out[a] |= part[a];
  }

  const auto fakes = static_cast<std::size_t>(
      std::ceil(zeta * static_cast<double>(comps.count) - 1e-12));
  if (fakes > 0 && comps.count > 0) {
    std::vector<std::size_t> areas = comps.areas;
    std::nth_element(areas.begin(), areas.begin() + areas.size() / 2, areas.end());
    const double median = static_cast<double>(areas[areas.size() / 2]);
    const std::size_t side_h =
        std::clamp<std::size_t>(std::lround(std::sqrt(median)), 2, mask.height);
    const std::size_t side_w = std::clamp<std::size_t>(
        std::lround(median / static_cast<double>(side_h)), 2, mask.width);
    for (std::size_t f = 0; f < fakes; ++f) {
      LabelMap occupied = out;
      for (std::size_t a = 0; a < out.size(); ++a) occupied[a] |= mask[a];
      occupied = dilate(occupied, 1);
      for (int attempt = 0; attempt < 200; ++attempt) {
        const std::size_t top = rng.below(mask.height - side_h + 1);
        const std::size_t left = rng.below(mask.width - side_w + 1);
        bool clear = true;
        for (std::size_t i = top; i < top + side_h && clear; ++i)
          for (std::size_t j = left; j < left + side_w; ++j)
            if (occupied(i, j)) {
              clear = false;
              break;
            }
        if (clear) {
          fill_rect(out, top, left, side_h, side_w);
          ++rep.added;
          break;
        }
      }
    }
  }
  if (report) *report = rep;
  return out;
}

// ------------------------------------------------------------------ metrics

namespace {

struct Overlap {
  std::size_t a = 0, b = 0, both = 0;
};

Overlap overlap(const LabelMap& a, const LabelMap& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("mask shapes differ: " + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " +
                                std::to_string(b.height) + "x" + std::to_string(b.width));
  Overlap o;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    o.a += x;
    o.b += y;
    o.both += x && y;
  }
  return o;
}

}  // namespace

double dice(const LabelMap& a, const LabelMap& b) {
  const Overlap o = overlap(a, b);
  if (o.a + o.b == 0) return 1.0;
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

double iou(const LabelMap& a, const LabelMap& b) {
  const Overlap o = overlap(a, b);
  const std::size_t uni = o.a + o.b - o.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size())
    throw std::invalid_argument("roc_auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });
  // Mann-Whitney U with mid-ranks for ties.
  double rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (positive[order[t]]) {
        rank_sum += mid;
        ++npos;
      }
    i = j;
  }
  const std::size_t nneg = scores.size() - npos;
  if (npos == 0 || nneg == 0) return std::nan("");
  const double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// ----------------------------------------------------------------------- I/O

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string pgm_token(const std::vector<char>& buf, std::size_t& pos,
                      const std::string& what) {
  while (pos < buf.size()) {
    const auto ch = static_cast<unsigned char>(buf[pos]);
    if (ch == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(ch)) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos])) &&
         buf[pos] != '#')
    tok += buf[pos++];
  if (tok.empty()) throw FormatError(what + ": malformed PGM header");
  return tok;
}

std::size_t pgm_number(const std::string& tok, const std::string& what) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(),
                                  [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }) ||
      tok.size() > 9)
    throw FormatError(what + ": malformed PGM header field '" + tok + "'");
  return std::stoul(tok);
}

}  // namespace

LabelMap read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
  const std::string what = path.string();
  std::size_t pos = 0;
  if (pgm_token(buf, pos, what) != "P5")
    throw FormatError(what + ": not a binary PGM (P5) file");
  const std::size_t w = pgm_number(pgm_token(buf, pos, what), what);
  const std::size_t h = pgm_number(pgm_token(buf, pos, what), what);
  const std::size_t maxval = pgm_number(pgm_token(buf, pos, what), what);
  if (maxval != 255)
    throw FormatError(what + ": unsupported PGM maxval " + std::to_string(maxval) +
                      " (only 255)");
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
    throw FormatError(what + ": malformed PGM header");
  ++pos;
  if (buf.size() - pos < w * h) throw FormatError(what + ": truncated PGM payload");
  LabelMap out(h, w, 0);
  for (std::size_t a = 0; a < w * h; ++a) out[a] = static_cast<std::uint8_t>(buf[pos + a]);
  return out;
}

void write_pgm(const std::filesystem::path& path, const LabelMap& grid) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P5\n" << grid.width << " " << grid.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(grid.data.data()),
            static_cast<std::streamsize>(grid.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Grid<std::uint8_t> quantize(const Image& image) {
  Grid<std::uint8_t> out(image.height, image.width, 0);
  for (std::size_t a = 0; a < image.size(); ++a)
    out[a] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(image[a], 0.0, 1.0)));
  return out;
}

Image dequantize(const Grid<std::uint8_t>& bytes) {
  Image out(bytes.height, bytes.width, 0.0);
  for (std::size_t a = 0; a < bytes.size(); ++a) out[a] = bytes[a] / 255.0;
  return out;
}

void write_dataset(const std::filesystem::path& dir, const NoisyDataset& ds) {
  ds.validate();
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "noisy");
  KeyValueFile manifest;
  manifest.add("format", "eccd-dataset-1");
  manifest.add("num_classes", std::to_string(ds.num_classes));
  manifest.add("height", std::to_string(ds.height));
  manifest.add("width", std::to_string(ds.width));
  manifest.add("count", std::to_string(ds.samples.size()));
  for (const auto& [k, v] : ds.provenance.entries()) manifest.add(k, v);
  for (const auto& s : ds.samples) {
    const std::string file = s.observed.sample_id + ".pgm";
    write_pgm(dir / "images" / file, quantize(s.observed.image));
    write_pgm(dir / "noisy" / file, s.observed.noisy_labels);
    if (s.clean_labels) write_pgm(dir / "clean" / file, *s.clean_labels);
    manifest.add("sample", s.observed.sample_id);
  }
  manifest.save(dir / "manifest");
}

NoisyDataset read_dataset(const std::filesystem::path& dir) {
  const KeyValueFile manifest = KeyValueFile::load(dir / "manifest");
  if (manifest.require("format") != "eccd-dataset-1")
    throw FormatError((dir / "manifest").string() + ": unknown dataset format");
  NoisyDataset ds;
  ds.num_classes = std::stoul(manifest.require("num_classes"));
  ds.height = std::stoul(manifest.require("height"));
  ds.width = std::stoul(manifest.require("width"));
  static const char* reserved[] = {"format", "num_classes", "height", "width", "count",
                                   "sample"};
  for (const auto& [k, v] : manifest.entries())
    if (std::find(std::begin(reserved), std::end(reserved), k) == std::end(reserved))
      ds.provenance.add(k, v);
  for (const std::string& id : manifest.get_all("sample")) {
    const std::string file = id + ".pgm";
    NoisySample s;
    s.observed.sample_id = id;
    s.observed.image = dequantize(read_pgm(dir / "images" / file));
    s.observed.noisy_labels = read_pgm(dir / "noisy" / file);
    if (std::filesystem::exists(dir / "clean" / file))
      s.clean_labels = read_pgm(dir / "clean" / file);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != std::stoul(manifest.require("count")))
    throw FormatError((dir / "manifest").string() + ": sample count mismatch");
  ds.validate();
  return ds;
}

}  // namespace eccd
