#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "viteraser/image_io.hpp"

namespace viteraser {

// Mean squared error on the 8-bit scale (over all channels).
double mse_8bit(const Image8& a, const Image8& b);
// Mean squared error on the [0, 1] scale.
double mse(const Image8& a, const Image8& b);
// 10 log10(255^2 / mse_8bit); +infinity when the images are identical.
double psnr(const Image8& a, const Image8& b);
double psnr_from_mse_8bit(double mse8);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  int max_scales = 5;
};

// Number of scales usable for an image whose smaller side is `min_side`:
// every scale must still fit one window.
int mssim_scales(std::int64_t min_side, const SsimOptions& options = {});
// Multi-scale SSIM per channel, averaged over channels. The canonical
// five-scale weights are truncated and renormalized for small images.
double mssim(const Image8& a, const Image8& b, const SsimOptions& options = {});

struct GrayErrors {
  double age = 0.0;    // mean absolute gray-level difference
  double peps = 0.0;   // fraction of pixels with |diff| > threshold
  double pceps = 0.0;  // fraction of error pixels whose 4 neighbours are all errors
};

// ITU-R 601 luma, rounded to 8 bits. Single-channel images pass through.
Image8 to_gray(const Image8& image);
GrayErrors age_peps_pceps(const Image8& a, const Image8& b, int threshold = 20);

struct ImageMetrics {
  std::string name;
  double psnr = 0.0;
  double mssim = 0.0;
  double mse = 0.0;
  double age = 0.0;
  double peps = 0.0;
  double pceps = 0.0;
};

ImageMetrics compute_metrics(const Image8& pred, const Image8& gt, int threshold = 20);

struct MetricReport {
  std::vector<ImageMetrics> images;
  // Arithmetic means; psnr averages only finite entries.
  ImageMetrics mean;
  std::int64_t psnr_excluded = 0;

  std::string csv() const;
  std::string summary() const;
};

MetricReport aggregate(std::vector<ImageMetrics> images);

// Pairs every PNG in `pred_dir` with the same-named file in `gt_dir`.
MetricReport evaluate_corpus(const std::string& pred_dir, const std::string& gt_dir,
                             int threshold = 20);

}  // namespace viteraser
