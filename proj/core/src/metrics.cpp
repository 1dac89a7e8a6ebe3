#include "viteraser/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>

#include "viteraser/errors.hpp"

namespace fs = std::filesystem;

namespace viteraser {
namespace {

void require_same_shape(const Image8& a, const Image8& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                     std::to_string(b.channels));
  }
}

// Single-channel double plane.
struct Plane {
  std::int64_t h = 0, w = 0;
  std::vector<double> v;
  double& at(std::int64_t y, std::int64_t x) { return v[static_cast<std::size_t>(y * w + x)]; }
  double at(std::int64_t y, std::int64_t x) const { return v[static_cast<std::size_t>(y * w + x)]; }
};

Plane channel_plane(const Image8& img, std::int64_t c) {
  Plane p{img.height, img.width, std::vector<double>(static_cast<std::size_t>(img.height * img.width))};
  for (std::int64_t y = 0; y < img.height; ++y)
    for (std::int64_t x = 0; x < img.width; ++x) p.at(y, x) = img.at(y, x, c);
  return p;
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  double sum = 0.0;
  const double centre = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - centre;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& x : k) x /= sum;
  return k;
}

// Separable 'valid' filtering.
Plane filter_valid(const Plane& p, const std::vector<double>& k) {
  const auto n = static_cast<std::int64_t>(k.size());
  Plane rows{p.h, p.w - n + 1, {}};
  rows.v.assign(static_cast<std::size_t>(rows.h * rows.w), 0.0);
  for (std::int64_t y = 0; y < rows.h; ++y)
    for (std::int64_t x = 0; x < rows.w; ++x) {
      double s = 0.0;
      for (std::int64_t i = 0; i < n; ++i) s += k[i] * p.at(y, x + i);
      rows.at(y, x) = s;
    }
  Plane out{p.h - n + 1, rows.w, {}};
  out.v.assign(static_cast<std::size_t>(out.h * out.w), 0.0);
  for (std::int64_t y = 0; y < out.h; ++y)
    for (std::int64_t x = 0; x < out.w; ++x) {
      double s = 0.0;
      for (std::int64_t i = 0; i < n; ++i) s += k[i] * rows.at(y + i, x);
      out.at(y, x) = s;
    }
  return out;
}

Plane downsample2(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.h * out.w));
  for (std::int64_t y = 0; y < out.h; ++y)
    for (std::int64_t x = 0; x < out.w; ++x)
      out.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                             p.at(2 * y + 1, 2 * x + 1));
  return out;
}

struct SsimTerms {
  double ssim;
  double cs;
};

SsimTerms ssim_terms(const Plane& a, const Plane& b, const std::vector<double>& k,
                     const SsimOptions& o) {
  const double c1 = (o.k1 * 255.0) * (o.k1 * 255.0);
  const double c2 = (o.k2 * 255.0) * (o.k2 * 255.0);
  Plane aa = a, bb = b, ab = a;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    aa.v[i] = a.v[i] * a.v[i];
    bb.v[i] = b.v[i] * b.v[i];
    ab.v[i] = a.v[i] * b.v[i];
  }
  const auto mu_a = filter_valid(a, k), mu_b = filter_valid(b, k);
  const auto e_aa = filter_valid(aa, k), e_bb = filter_valid(bb, k), e_ab = filter_valid(ab, k);
  double ssim_sum = 0.0, cs_sum = 0.0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = e_aa.v[i] - ma * ma, vb = e_bb.v[i] - mb * mb, cov = e_ab.v[i] - ma * mb;
    const double cs = (2.0 * cov + c2) / (va + vb + c2);
    cs_sum += cs;
    ssim_sum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1) * cs;
  }
  const auto n = static_cast<double>(mu_a.v.size());
  return {ssim_sum / n, cs_sum / n};
}

constexpr std::array<double, 5> kScaleWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

}  // namespace

double mse_8bit(const Image8& a, const Image8& b) {
  require_same_shape(a, b, "mse");
  if (a.pixels.empty()) throw ShapeError("mse: empty image");
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const int d = static_cast<int>(a.pixels[i]) - static_cast<int>(b.pixels[i]);
    sum += static_cast<std::uint64_t>(d * d);
  }
  return static_cast<double>(sum) / static_cast<double>(a.pixels.size());
}

double mse(const Image8& a, const Image8& b) { return mse_8bit(a, b) / (255.0 * 255.0); }

double psnr_from_mse_8bit(double mse8) {
  if (mse8 == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse8);
}

double psnr(const Image8& a, const Image8& b) { return psnr_from_mse_8bit(mse_8bit(a, b)); }

int mssim_scales(std::int64_t min_side, const SsimOptions& options) {
  int scales = 0;
  while (scales < options.max_scales && min_side >= options.window) {
    ++scales;
    min_side /= 2;
  }
  return scales;
}

double mssim(const Image8& a, const Image8& b, const SsimOptions& options) {
  require_same_shape(a, b, "mssim");
  const int scales = mssim_scales(std::min(a.height, a.width), options);
  if (scales == 0) {
    throw ShapeError("mssim: image smaller than the " + std::to_string(options.window) + "x" +
                     std::to_string(options.window) + " window");
  }
  const auto kernel = gaussian_kernel(options.window, options.sigma);
  double weight_sum = 0.0;
  for (int s = 0; s < scales; ++s) weight_sum += kScaleWeights[s];

  double total = 0.0;
  for (std::int64_t c = 0; c < a.channels; ++c) {
    auto pa = channel_plane(a, c), pb = channel_plane(b, c);
    double value = 1.0;
    for (int s = 0; s < scales; ++s) {
      const auto terms = ssim_terms(pa, pb, kernel, options);
      const double w = kScaleWeights[s] / weight_sum;
      const double term = s + 1 == scales ? terms.ssim : terms.cs;
      value *= std::pow(std::max(term, 0.0), w);
      if (s + 1 < scales) {
        pa = downsample2(pa);
        pb = downsample2(pb);
      }
    }
    total += value;
  }
  return total / static_cast<double>(a.channels);
}

Image8 to_gray(const Image8& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) throw ShapeError("to_gray: expected 1 or 3 channels");
  Image8 out(image.height, image.width, 1);
  for (std::int64_t y = 0; y < image.height; ++y)
    for (std::int64_t x = 0; x < image.width; ++x) {
      const double l = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
      out.at(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(l), 0L, 255L));
    }
  return out;
}

GrayErrors age_peps_pceps(const Image8& a, const Image8& b, int threshold) {
  require_same_shape(a, b, "age_peps_pceps");
  const auto ga = to_gray(a), gb = to_gray(b);
  const auto h = ga.height, w = ga.width;
  std::vector<std::uint8_t> err(static_cast<std::size_t>(h * w));
  double abs_sum = 0.0;
  std::int64_t errors = 0;
  for (std::int64_t i = 0; i < h * w; ++i) {
    const int d = std::abs(static_cast<int>(ga.pixels[i]) - static_cast<int>(gb.pixels[i]));
    abs_sum += d;
    err[i] = d > threshold;
    errors += err[i];
  }
  auto is_err = [&](std::int64_t y, std::int64_t x) {
    y = std::clamp<std::int64_t>(y, 0, h - 1);
    x = std::clamp<std::int64_t>(x, 0, w - 1);
    return err[static_cast<std::size_t>(y * w + x)] != 0;
  };
  std::int64_t clustered = 0;
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      if (is_err(y, x) && is_err(y - 1, x) && is_err(y + 1, x) && is_err(y, x - 1) && is_err(y, x + 1))
        ++clustered;
  const auto n = static_cast<double>(h * w);
  return {abs_sum / n, static_cast<double>(errors) / n, static_cast<double>(clustered) / n};
}

ImageMetrics compute_metrics(const Image8& pred, const Image8& gt, int threshold) {
  ImageMetrics m;
  const double mse8 = mse_8bit(pred, gt);
  m.mse = mse8 / (255.0 * 255.0);
  m.psnr = psnr_from_mse_8bit(mse8);
  m.mssim = mssim(pred, gt);
  const auto g = age_peps_pceps(pred, gt, threshold);
  m.age = g.age;
  m.peps = g.peps;
  m.pceps = g.pceps;
  return m;
}

MetricReport aggregate(std::vector<ImageMetrics> images) {
  MetricReport r;
  r.images = std::move(images);
  r.mean.name = "mean";
  if (r.images.empty()) return r;
  std::int64_t finite = 0;
  for (const auto& m : r.images) {
    if (std::isinf(m.psnr)) {
      ++r.psnr_excluded;
    } else {
      r.mean.psnr += m.psnr;
      ++finite;
    }
    r.mean.mssim += m.mssim;
    r.mean.mse += m.mse;
    r.mean.age += m.age;
    r.mean.peps += m.peps;
    r.mean.pceps += m.pceps;
  }
  const auto n = static_cast<double>(r.images.size());
  r.mean.psnr = finite > 0 ? r.mean.psnr / static_cast<double>(finite)
                           : std::numeric_limits<double>::infinity();
  r.mean.mssim /= n;
  r.mean.mse /= n;
  r.mean.age /= n;
  r.mean.peps /= n;
  r.mean.pceps /= n;
  return r;
}

std::string MetricReport::csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "name,psnr,mssim,mse,age,peps,pceps\n";
  auto row = [&](const ImageMetrics& m) {
    os << m.name << ',';
    if (std::isinf(m.psnr)) os << "inf"; else os << m.psnr;
    os << ',' << m.mssim << ',' << m.mse << ',' << m.age << ',' << m.peps << ',' << m.pceps << '\n';
  };
  for (const auto& m : images) row(m);
  row(mean);
  return os.str();
}

std::string MetricReport::summary() const {
  std::ostringstream os;
  os << std::fixed;
  os << "images:    " << images.size() << '\n';
  os << std::setprecision(4);
  os << "PSNR (dB): " << mean.psnr;
  if (psnr_excluded > 0) os << "  (" << psnr_excluded << " identical pair(s) excluded)";
  os << '\n';
  os << "MSSIM (%): " << mean.mssim * 100.0 << '\n';
  os << "MSE (%):   " << mean.mse * 100.0 << '\n';
  os << "AGE:       " << mean.age << '\n';
  os << "pEPs (%):  " << mean.peps * 100.0 << '\n';
  os << "pCEPs (%): " << mean.pceps * 100.0 << '\n';
  return os.str();
}

MetricReport evaluate_corpus(const std::string& pred_dir, const std::string& gt_dir, int threshold) {
  const auto names = list_png(pred_dir);
  if (names.empty()) throw DataError("no PNG images in '" + pred_dir + "'");
  if (!fs::is_directory(gt_dir)) throw DataError("not a directory: '" + gt_dir + "'");
  std::vector<ImageMetrics> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    const auto gt_path = (fs::path(gt_dir) / name).string();
    if (!fs::exists(gt_path)) throw DataError("missing ground-truth counterpart: '" + gt_path + "'");
    const auto pred = read_png((fs::path(pred_dir) / name).string());
    const auto gt = read_png(gt_path);
    auto m = compute_metrics(pred, gt, threshold);
    m.name = name;
    out.push_back(std::move(m));
  }
  return aggregate(std::move(out));
}

}  // namespace viteraser
