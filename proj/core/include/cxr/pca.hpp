#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

// Per-channel PCA basis. The H rows of a channel are the observations, the W
// columns the features; `components` rows form an orthonormal basis of the
// retained directions, sorted by singular value.
struct ChannelPca {
  Tensor mean;                                  // (W)
  Tensor components;                            // (k_max, W); empty when rank 0
  std::vector<double> singular_values;          // non-increasing
  std::vector<double> explained_variance_ratio; // sums to 1 when variance > 0

  std::size_t rank() const { return singular_values.size(); }
};

struct CompressedChannel {
  ChannelPca pca;   // truncated to k components
  Tensor coeffs;    // (H, k); empty when k == 0
};

struct CompressedImage {
  std::vector<CompressedChannel> channels;
  std::size_t height = 0;
  std::size_t width = 0;

  // Number of stored scalar values (coefficients + basis + means + sigmas).
  std::size_t payload_values() const;
};

// PCA of the channel rows: column mean removed, basis from the SVD of the
// centered matrix, explained-variance-ratio_i = sigma_i^2 / sum sigma_j^2.
// Components with sigma < 1e-12 * sigma_max are discarded as numerical
// noise; each kept component is sign-fixed so its largest-magnitude entry is
// non-negative. Rejects non-finite channels.
ChannelPca fit_channel_pca(const Tensor& channel);

// Truncates every channel to at most k components (fewer when the channel
// rank is lower). Rejects k outside [1, min(H, W)] naming the valid range.
CompressedImage compress(const Tensor& image, std::size_t k);

// coeffs * components + mean per channel, reassembled to (C, H, W).
Tensor reconstruct(const CompressedImage& compressed);

// Smallest k whose cumulative explained variance reaches `threshold`;
// 0 for a constant channel. Threshold must lie in (0, 1].
std::size_t components_for_variance(const ChannelPca& pca, double threshold);

// Cumulative explained variance for k = 1..k_max; empty for a constant
// channel.
std::vector<std::pair<std::size_t, double>> variance_curve(const ChannelPca& pca);

// Directory container: one NPY file per field (mean_c{i}, components_c{i},
// coeffs_c{i}, sigma_c{i}) plus a shape.json header.
void save_compressed(const CompressedImage& image, const std::string& dir);
CompressedImage load_compressed(const std::string& dir);

}  // namespace cxr
