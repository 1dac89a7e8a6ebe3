#include "viteraser/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "viteraser/errors.hpp"
#include "viteraser/image_io.hpp"
#include "viteraser/random.hpp"

namespace fs = std::filesystem;

namespace viteraser {
namespace {

using Rgb = std::array<double, 3>;

// Float HWC canvas; converted to 8-bit before leaving this file.
struct Canvas {
  std::int64_t size;
  std::vector<double> px;
  explicit Canvas(std::int64_t s) : size(s), px(static_cast<std::size_t>(s * s * 3), 0.0) {}
  double* at(std::int64_t y, std::int64_t x) { return &px[static_cast<std::size_t>((y * size + x) * 3)]; }
};

Rgb random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

double luma(const Rgb& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

// Bilinear value noise over a (cells + 1)^2 random lattice, in [0, 1].
std::vector<double> value_noise(Rng& rng, std::int64_t size, int cells) {
  const int n = cells + 1;
  std::vector<double> lattice(static_cast<std::size_t>(n * n));
  for (auto& v : lattice) v = rng.uniform();
  std::vector<double> out(static_cast<std::size_t>(size * size));
  const double step = static_cast<double>(cells) / static_cast<double>(size);
  for (std::int64_t y = 0; y < size; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * step;
    const int iy = std::min(static_cast<int>(fy), cells - 1);
    const double ty = fy - iy;
    for (std::int64_t x = 0; x < size; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * step;
      const int ix = std::min(static_cast<int>(fx), cells - 1);
      const double tx = fx - ix;
      const double a = lattice[iy * n + ix], b = lattice[iy * n + ix + 1];
      const double c = lattice[(iy + 1) * n + ix], d = lattice[(iy + 1) * n + ix + 1];
      out[static_cast<std::size_t>(y * size + x)] =
          (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
    }
  }
  return out;
}

void paint_background(Canvas& canvas, Rng& rng) {
  const auto s = canvas.size;
  const Rgb c0 = random_color(rng), c1 = random_color(rng);
  const double dx = rng.uniform(-1.0, 1.0), dy = rng.uniform(-1.0, 1.0);
  // Projection range over the four corners normalizes the gradient to [0, 1].
  const double corners[] = {0.0, dx * s, dy * s, dx * s + dy * s};
  const double lo = *std::min_element(std::begin(corners), std::end(corners));
  const double hi = *std::max_element(std::begin(corners), std::end(corners));
  const double span = std::max(hi - lo, 1e-9);
  const auto noise = value_noise(rng, s, static_cast<int>(rng.range(2, 6)));
  const double amp = rng.uniform(0.0, 0.25);
  for (std::int64_t y = 0; y < s; ++y)
    for (std::int64_t x = 0; x < s; ++x) {
      const double t = (dx * x + dy * y - lo) / span;
      const double n = amp * (noise[static_cast<std::size_t>(y * s + x)] - 0.5);
      double* p = canvas.at(y, x);
      for (int c = 0; c < 3; ++c) p[c] = std::clamp(c0[c] * (1 - t) + c1[c] * t + n, 0.0, 1.0);
    }

  const auto shapes = rng.range(0, 3);
  for (std::int64_t k = 0; k < shapes; ++k) {
    const Rgb col = random_color(rng);
    const double alpha = rng.uniform(0.2, 0.7);
    const bool circle = rng.bernoulli(0.5);
    const double cx = rng.uniform(0.0, s), cy = rng.uniform(0.0, s);
    const double rx = rng.uniform(s / 16.0, s / 3.0), ry = rng.uniform(s / 16.0, s / 3.0);
    for (std::int64_t y = 0; y < s; ++y)
      for (std::int64_t x = 0; x < s; ++x) {
        const double u = (x + 0.5 - cx) / rx, v = (y + 0.5 - cy) / ry;
        const bool inside = circle ? u * u + v * v <= 1.0 : std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
        if (!inside) continue;
        double* p = canvas.at(y, x);
        for (int c = 0; c < 3; ++c) p[c] = p[c] * (1 - alpha) + col[c] * alpha;
      }
  }
}

enum Stroke { kLeft, kRight, kCentre, kTop, kMiddle, kBottom, kDiagDown, kDiagUp, kStrokeCount };

// Marks the pixels of one glyph inside a (gw x gh) cell.
void draw_glyph(std::vector<std::uint8_t>& ink, std::int64_t stride, std::int64_t ox, std::int64_t oy,
                std::int64_t gw, std::int64_t gh, std::int64_t thick, Rng& rng) {
  bool used[kStrokeCount] = {};
  const auto count = rng.range(2, 4);
  for (std::int64_t k = 0; k < count; ++k) used[rng.below(kStrokeCount)] = true;
  auto mark = [&](std::int64_t u, std::int64_t v) {
    ink[static_cast<std::size_t>((oy + v) * stride + ox + u)] = 1;
  };
  for (std::int64_t v = 0; v < gh; ++v)
    for (std::int64_t u = 0; u < gw; ++u) {
      bool on = false;
      on |= used[kLeft] && u < thick;
      on |= used[kRight] && u >= gw - thick;
      on |= used[kCentre] && std::abs(2 * u - (gw - 1)) < thick;
      on |= used[kTop] && v < thick;
      on |= used[kBottom] && v >= gh - thick;
      on |= used[kMiddle] && std::abs(2 * v - (gh - 1)) < thick;
      const double along = static_cast<double>(v) * (gw - 1) / std::max<std::int64_t>(gh - 1, 1);
      on |= used[kDiagDown] && std::abs(u - along) * 2.0 < thick;
      on |= used[kDiagUp] && std::abs((gw - 1 - u) - along) * 2.0 < thick;
      if (on) mark(u, v);
    }
}

torch::Tensor canvas_to_tensor(const std::vector<std::uint8_t>& bytes, std::int64_t size) {
  return torch::from_blob(const_cast<std::uint8_t*>(bytes.data()), {size, size, 3}, torch::kUInt8)
      .permute({2, 0, 1})
      .to(torch::kFloat32)
      .div(255.0)
      .contiguous();
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string stem_of(const std::string& name) { return fs::path(name).stem().string(); }

}  // namespace

SynthSample synth_sample_with_boxes(std::uint64_t seed, std::int64_t size) {
  if (size <= 0 || size % 32 != 0) {
    throw ValueError("synth_sample: size must be a positive multiple of 32, got " + std::to_string(size));
  }
  Rng rng(seed);
  Canvas canvas(size);
  paint_background(canvas, rng);

  std::vector<std::uint8_t> gt(canvas.px.size());
  for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = quantize(canvas.px[i]);
  std::vector<std::uint8_t> in = gt;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(size * size), 0);

  double bg_luma = 0.0;
  for (std::size_t i = 0; i < gt.size(); i += 3) bg_luma += luma({gt[i] / 255.0, gt[i + 1] / 255.0, gt[i + 2] / 255.0});
  bg_luma /= static_cast<double>(size * size);

  SynthSample out;
  const auto max_w = size / 2, max_h = size / 6;
  const auto runs = rng.range(1, 5);
  std::vector<std::uint8_t> ink(static_cast<std::size_t>(size * size));
  for (std::int64_t r = 0; r < runs; ++r) {
    const auto rh = rng.range(std::max<std::int64_t>(5, size / 16), std::max<std::int64_t>(5, max_h));
    const auto gw = std::max<std::int64_t>(3, (rh * 3) / 5);
    const auto gap = std::max<std::int64_t>(1, rh / 5);
    const auto thick = std::max<std::int64_t>(1, rh / 6);
    const auto max_glyphs = std::max<std::int64_t>(1, (max_w + gap) / (gw + gap));
    const auto glyphs = rng.range(1, max_glyphs);
    const auto rw = glyphs * gw + (glyphs - 1) * gap;
    const auto x0 = rng.range(0, size - rw);
    const auto y0 = rng.range(0, size - rh);

    std::fill(ink.begin(), ink.end(), 0);
    for (std::int64_t g = 0; g < glyphs; ++g) draw_glyph(ink, size, x0 + g * (gw + gap), y0, gw, rh, thick, rng);

    Rgb col = random_color(rng);
    if (std::abs(luma(col) - bg_luma) < 0.35) {
      const double level = bg_luma > 0.5 ? rng.uniform(0.0, 0.2) : rng.uniform(0.8, 1.0);
      col = {level, level, level};
      for (auto& c : col) c = std::clamp(c + rng.uniform(-0.1, 0.1), 0.0, 1.0);
    }
    const std::uint8_t q[3] = {quantize(col[0]), quantize(col[1]), quantize(col[2])};

    Box box{size, size, 0, 0};
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        if (!ink[static_cast<std::size_t>(y * size + x)]) continue;
        auto* p = &in[static_cast<std::size_t>((y * size + x) * 3)];
        p[0] = q[0];
        p[1] = q[1];
        p[2] = q[2];
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x + 1);
        box.y1 = std::max(box.y1, y + 1);
      }
    for (auto y = box.y0; y < box.y1; ++y)
      for (auto x = box.x0; x < box.x1; ++x) mask[static_cast<std::size_t>(y * size + x)] = 1;
    out.boxes.push_back(box);
  }

  out.sample.target = canvas_to_tensor(gt, size);
  out.sample.input = canvas_to_tensor(in, size);
  out.sample.mask = torch::from_blob(mask.data(), {1, size, size}, torch::kUInt8).to(torch::kFloat32);
  return out;
}

TrainSample synth_sample(std::uint64_t seed, std::int64_t size) {
  return synth_sample_with_boxes(seed, size).sample;
}

SynthSource::SynthSource(std::size_t count, std::int64_t size, std::uint64_t seed)
    : count_(count), image_size_(size), seed_(seed) {
  if (size <= 0 || size % 32 != 0) throw ValueError("SynthSource: size must be a positive multiple of 32");
}

TrainSample SynthSource::get(std::size_t index) const {
  if (index >= count_) throw std::out_of_range("SynthSource index");
  return synth_sample(derive_seed(seed_, {index}), image_size_);
}

PretrainSample SynthSource::get_pretrain(std::size_t index) const {
  const auto s = get(index);
  return {s.input, s.mask};
}

PairedDirDataset::PairedDirDataset(std::string root) : root_(std::move(root)) {
  if (!fs::is_directory(root_)) throw DataError("not a directory: '" + root_ + "'");
  const auto image_dir = fs::path(root_) / "image";
  if (!fs::exists(image_dir)) {
    if (fs::is_empty(root_)) return;
    throw DataError("missing directory: '" + image_dir.string() + "'");
  }
  names_ = list_png(image_dir.string());
  for (const auto& name : names_) {
    for (const char* sub : {"label", "mask"}) {
      const auto p = fs::path(root_) / sub / name;
      if (!fs::exists(p)) throw DataError("missing counterpart: '" + p.string() + "'");
    }
  }
}

TrainSample PairedDirDataset::get(std::size_t index) const {
  const auto& name = names_.at(index);
  const auto root = fs::path(root_);
  TrainSample s;
  s.input = to_tensor(read_png((root / "image" / name).string()));
  s.target = to_tensor(read_png((root / "label" / name).string()));
  s.mask = to_tensor(read_png((root / "mask" / name).string(), 1)).ge(0.5).to(torch::kFloat32);
  if (!s.input.sizes().equals(s.target.sizes()) || s.input.size(1) != s.mask.size(1) ||
      s.input.size(2) != s.mask.size(2)) {
    throw DataError("size mismatch between image, label and mask for '" + name + "'");
  }
  return s;
}

PairedDirDataset load_paired_dir(const std::string& root) { return PairedDirDataset(root); }

std::vector<Polygon> parse_annotation(const std::string& text) {
  std::vector<Polygon> polys;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    Polygon poly;
    std::string tok;
    // Trailing non-numeric fields (transcriptions) end the coordinate list.
    while (fields >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') break;
      poly.push_back(v);
    }
    if (poly.empty()) continue;
    if (poly.size() % 2 == 1) poly.pop_back();
    if (poly.size() == 4) {  // x0 y0 x1 y1 box
      poly = {poly[0], poly[1], poly[2], poly[1], poly[2], poly[3], poly[0], poly[3]};
    }
    if (poly.size() < 6) throw DataError("annotation line has too few coordinates: '" + line + "'");
    polys.push_back(std::move(poly));
  }
  return polys;
}

PretrainDirDataset::PretrainDirDataset(std::string root) : root_(std::move(root)) {
  if (!fs::is_directory(root_)) throw DataError("not a directory: '" + root_ + "'");
  const auto image_dir = fs::path(root_) / "image";
  if (!fs::exists(image_dir)) {
    if (fs::is_empty(root_)) return;
    throw DataError("missing directory: '" + image_dir.string() + "'");
  }
  names_ = list_png(image_dir.string());
  use_annotations_ = fs::is_directory(fs::path(root_) / "annotation");
  for (const auto& name : names_) {
    const auto p = use_annotations_ ? fs::path(root_) / "annotation" / (stem_of(name) + ".txt")
                                    : fs::path(root_) / "mask" / name;
    if (!fs::exists(p)) throw DataError("missing counterpart: '" + p.string() + "'");
  }
}

PretrainSample PretrainDirDataset::get(std::size_t index) const {
  const auto& name = names_.at(index);
  const auto root = fs::path(root_);
  PretrainSample s;
  s.image = to_tensor(read_png((root / "image" / name).string()));
  if (use_annotations_) {
    const auto path = root / "annotation" / (stem_of(name) + ".txt");
    std::ifstream in(path);
    if (!in) throw DataError("cannot read '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    s.segmentation = rasterize_polygons(s.image.size(1), s.image.size(2), parse_annotation(buf.str()));
  } else {
    s.segmentation = to_tensor(read_png((root / "mask" / name).string(), 1)).ge(0.5).to(torch::kFloat32);
  }
  return s;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0x5348554646ULL, epoch}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch_size) {
  if (batch_size == 0) throw ValueError("batch size must be positive");
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<std::size_t> b;
    for (std::size_t k = 0; k < batch_size; ++k) b.push_back(order[(start + k) % order.size()]);
    batches.push_back(std::move(b));
  }
  return batches;
}

TrainSample hflip(const TrainSample& s) {
  return {s.input.flip({-1}), s.target.flip({-1}), s.mask.flip({-1})};
}

namespace {

torch::Tensor resize_image(const torch::Tensor& x, std::int64_t size) {
  if (x.size(-2) == size && x.size(-1) == size) return x;
  namespace F = torch::nn::functional;
  return F::interpolate(x.unsqueeze(0), F::InterpolateFuncOptions()
                                            .size(std::vector<std::int64_t>{size, size})
                                            .mode(torch::kBilinear)
                                            .align_corners(false))
      .squeeze(0)
      .clamp(0.0, 1.0);
}

torch::Tensor resize_binary(const torch::Tensor& x, std::int64_t size) {
  if (x.size(-2) == size && x.size(-1) == size) return x;
  namespace F = torch::nn::functional;
  return F::interpolate(x.unsqueeze(0), F::InterpolateFuncOptions()
                                            .size(std::vector<std::int64_t>{size, size})
                                            .mode(torch::kNearest))
      .squeeze(0);
}

}  // namespace

TrainSample resize_to(const TrainSample& s, std::int64_t size) {
  return {resize_image(s.input, size), resize_image(s.target, size), resize_binary(s.mask, size)};
}

PretrainSample resize_to(const PretrainSample& s, std::int64_t size) {
  return {resize_image(s.image, size), resize_binary(s.segmentation, size)};
}

TrainSample augment(const TrainSample& sample, std::uint64_t seed, std::int64_t size) {
  Rng rng(seed);
  auto s = rng.bernoulli(0.5) ? hflip(sample) : sample;
  return {resize_image(s.input, size), resize_image(s.target, size), resize_binary(s.mask, size)};
}

PretrainSample augment(const PretrainSample& sample, std::uint64_t seed, std::int64_t size) {
  Rng rng(seed);
  PretrainSample s = sample;
  if (rng.bernoulli(0.5)) s = {s.image.flip({-1}), s.segmentation.flip({-1})};
  return {resize_image(s.image, size), resize_binary(s.segmentation, size)};
}

TrainSample collate(const std::vector<TrainSample>& samples) {
  std::vector<torch::Tensor> in, gt, m;
  for (const auto& s : samples) {
    in.push_back(s.input);
    gt.push_back(s.target);
    m.push_back(s.mask);
  }
  return {torch::stack(in), torch::stack(gt), torch::stack(m)};
}

PretrainSample collate(const std::vector<PretrainSample>& samples) {
  std::vector<torch::Tensor> im, seg;
  for (const auto& s : samples) {
    im.push_back(s.image);
    seg.push_back(s.segmentation);
  }
  return {torch::stack(im), torch::stack(seg)};
}

void write_synth_sample(const std::string& root, const std::string& name, const SynthSample& sample) {
  const auto base = fs::path(root);
  for (const char* sub : {"image", "label", "mask", "annotation"}) fs::create_directories(base / sub);
  const auto file = name + ".png";
  write_png((base / "image" / file).string(), to_image8(sample.sample.input));
  write_png((base / "label" / file).string(), to_image8(sample.sample.target));
  write_png((base / "mask" / file).string(), to_image8(sample.sample.mask));
  std::ofstream ann(base / "annotation" / (name + ".txt"));
  for (const auto& b : sample.boxes) {
    ann << b.x0 << ',' << b.y0 << ',' << b.x1 << ',' << b.y0 << ',' << b.x1 << ',' << b.y1 << ','
        << b.x0 << ',' << b.y1 << '\n';
  }
  if (!ann) throw DataError("cannot write annotation for '" + name + "'");
}

}  // namespace viteraser
