// Image file codecs: the only header that touches OpenCV (imgcodecs for
// PNG/JPEG, imgproc for load-time resizing). Everything downstream works on
// plain tensors.
#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <string>

#include "scgseg/errors.hpp"
#include "scgseg/tensor.hpp"

namespace scgseg {

namespace detail {
inline cv::Mat load_gray8(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot read image: " + path);
  return m;
}
}  // namespace detail

// Grayscale image scaled to [0,1] by the 8-bit range; bilinear resize only
// when the source size differs, so same-size loads are an exact /255.
inline Tensor<double> load_image_normalized(const std::string& path,
                                            int target_size) {
  if (target_size < 1)
    throw ValidationError("target_size must be positive");
  cv::Mat m = detail::load_gray8(path);
  if (m.rows != target_size || m.cols != target_size)
    cv::resize(m, m, cv::Size(target_size, target_size), 0, 0,
               cv::INTER_LINEAR);
  Tensor<double> t({target_size, target_size});
  for (int y = 0; y < target_size; ++y)
    for (int x = 0; x < target_size; ++x)
      t.at(y, x) = m.at<std::uint8_t>(y, x) / 255.0;
  return t;
}

// Mask loader: nearest-neighbour resize, then re-binarized at half range.
inline Tensor<double> load_mask_binary(const std::string& path,
                                       int target_size) {
  if (target_size < 1)
    throw ValidationError("target_size must be positive");
  cv::Mat m = detail::load_gray8(path);
  if (m.rows != target_size || m.cols != target_size)
    cv::resize(m, m, cv::Size(target_size, target_size), 0, 0,
               cv::INTER_NEAREST);
  Tensor<double> t({target_size, target_size});
  for (int y = 0; y < target_size; ++y)
    for (int x = 0; x < target_size; ++x)
      t.at(y, x) = m.at<std::uint8_t>(y, x) >= 128 ? 1.0 : 0.0;
  return t;
}

// {H,W} mask of {0,1} -> 8-bit PNG of {0,255}.
inline void save_mask_png(const std::string& path, const Tensor<double>& mask) {
  require_rank(mask, 2, "save_mask_png mask");
  cv::Mat m(mask.dim(0), mask.dim(1), CV_8UC1);
  for (int y = 0; y < mask.dim(0); ++y)
    for (int x = 0; x < mask.dim(1); ++x)
      m.at<std::uint8_t>(y, x) = mask.at(y, x) >= 0.5 ? 255 : 0;
  if (!cv::imwrite(path, m)) throw IoError("cannot write image: " + path);
}

// {H,W} probabilities in [0,1] -> 16-bit PNG.
inline void save_prob_png16(const std::string& path,
                            const Tensor<double>& prob) {
  require_rank(prob, 2, "save_prob_png16 prob");
  cv::Mat m(prob.dim(0), prob.dim(1), CV_16UC1);
  for (int y = 0; y < prob.dim(0); ++y)
    for (int x = 0; x < prob.dim(1); ++x) {
      const double p = std::min(1.0, std::max(0.0, prob.at(y, x)));
      m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(
          std::lround(p * 65535.0));
    }
  if (!cv::imwrite(path, m)) throw IoError("cannot write image: " + path);
}

}  // namespace scgseg
