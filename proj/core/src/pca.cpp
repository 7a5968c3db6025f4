#include "cxr/pca.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cxr/error.hpp"
#include "cxr/npy.hpp"
#include "cxr/svd.hpp"

namespace cxr {

namespace {

Tensor channel_of(const Tensor& image, std::size_t c) {
  const std::size_t H = image.extent(1), W = image.extent(2);
  Tensor ch({H, W});
  const double* src = image.data() + c * H * W;
  std::copy(src, src + H * W, ch.data());
  return ch;
}

}  // namespace

std::size_t CompressedImage::payload_values() const {
  std::size_t n = 0;
  for (const CompressedChannel& ch : channels) {
    n += ch.pca.mean.size();
    n += ch.pca.components.size();
    n += ch.coeffs.size();
    n += ch.pca.singular_values.size();
  }
  return n;
}

ChannelPca fit_channel_pca(const Tensor& channel) {
  if (channel.rank() != 2) {
    throw ShapeError("fit_channel_pca expects an (H, W) channel, got " + channel.shape_string());
  }
  if (!channel.all_finite()) {
    throw ValueError("fit_channel_pca: channel contains non-finite values");
  }
  const std::size_t H = channel.extent(0), W = channel.extent(1);

  ChannelPca pca;
  pca.mean = Tensor({W});

  // A constant channel has no variance and no basis; detect it on the raw
  // values so the floating-point mean cannot leave residue.
  double lo = channel[0], hi = channel[0];
  for (std::size_t i = 0; i < channel.size(); ++i) {
    lo = std::min(lo, channel[i]);
    hi = std::max(hi, channel[i]);
  }
  if (lo == hi) {
    for (std::size_t j = 0; j < W; ++j) pca.mean[j] = lo;
    return pca;
  }

  for (std::size_t j = 0; j < W; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < H; ++i) s += channel.at2(i, j);
    pca.mean[j] = s / static_cast<double>(H);
  }

  Tensor centered({H, W});
  double max_abs = 0.0;
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      const double v = channel.at2(i, j) - pca.mean[j];
      centered.at2(i, j) = v;
      max_abs = std::max(max_abs, std::fabs(v));
    }
  }
  if (max_abs == 0.0) return pca;  // constant columns

  SvdResult svd = jacobi_svd(centered);
  const double sigma_max = svd.sigma.empty() ? 0.0 : svd.sigma[0];
  if (sigma_max == 0.0) return pca;

  double total_energy = 0.0;
  for (double s : svd.sigma) total_energy += s * s;

  std::size_t kept = 0;
  while (kept < svd.sigma.size() && svd.sigma[kept] >= 1e-12 * sigma_max) ++kept;

  pca.components = Tensor({kept, W});
  pca.singular_values.resize(kept);
  pca.explained_variance_ratio.resize(kept);
  for (std::size_t r = 0; r < kept; ++r) {
    pca.singular_values[r] = svd.sigma[r];
    pca.explained_variance_ratio[r] = svd.sigma[r] * svd.sigma[r] / total_energy;
    // Sign convention: largest-magnitude entry non-negative.
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t j = 0; j < W; ++j) {
      const double v = std::fabs(svd.v.at2(j, r));
      if (v > best) {
        best = v;
        arg = j;
      }
    }
    const double flip = svd.v.at2(arg, r) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < W; ++j) pca.components.at2(r, j) = flip * svd.v.at2(j, r);
  }
  return pca;
}

CompressedImage compress(const Tensor& image, std::size_t k) {
  if (image.rank() != 3) {
    throw ShapeError("compress expects a (C, H, W) image, got " + image.shape_string());
  }
  const std::size_t C = image.extent(0), H = image.extent(1), W = image.extent(2);
  const std::size_t k_limit = std::min(H, W);
  if (k < 1 || k > k_limit) {
    throw ValueError("compress: k = " + std::to_string(k) + " outside valid range [1, " +
                     std::to_string(k_limit) + "]");
  }

  CompressedImage out;
  out.height = H;
  out.width = W;
  out.channels.reserve(C);
  for (std::size_t c = 0; c < C; ++c) {
    Tensor channel = channel_of(image, c);
    ChannelPca pca = fit_channel_pca(channel);
    const std::size_t k_eff = std::min(k, pca.rank());

    CompressedChannel cc;
    cc.pca.mean = pca.mean;
    if (k_eff > 0) {
      cc.pca.components = Tensor({k_eff, W});
      std::copy(pca.components.data(), pca.components.data() + k_eff * W,
                cc.pca.components.data());
      cc.pca.singular_values.assign(pca.singular_values.begin(),
                                    pca.singular_values.begin() + k_eff);
      cc.pca.explained_variance_ratio.assign(pca.explained_variance_ratio.begin(),
                                             pca.explained_variance_ratio.begin() + k_eff);
      // coeffs = centered rows projected on the basis.
      cc.coeffs = Tensor({H, k_eff});
      for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t r = 0; r < k_eff; ++r) {
          double acc = 0.0;
          for (std::size_t j = 0; j < W; ++j) {
            acc += (channel.at2(i, j) - pca.mean[j]) * cc.pca.components.at2(r, j);
          }
          cc.coeffs.at2(i, r) = acc;
        }
      }
    }
    out.channels.push_back(std::move(cc));
  }
  return out;
}

Tensor reconstruct(const CompressedImage& compressed) {
  const std::size_t C = compressed.channels.size();
  if (C == 0) throw ValueError("reconstruct: empty compressed image");
  const std::size_t H = compressed.height, W = compressed.width;

  Tensor out({C, H, W});
  for (std::size_t c = 0; c < C; ++c) {
    const CompressedChannel& cc = compressed.channels[c];
    if (cc.pca.mean.size() != W) {
      throw ShapeError("reconstruct: channel " + std::to_string(c) + " mean " +
                       cc.pca.mean.shape_string() + " inconsistent with width " +
                       std::to_string(W));
    }
    const std::size_t k = cc.pca.rank();
    if (k > 0 &&
        (cc.coeffs.rank() != 2 || cc.coeffs.extent(0) != H || cc.coeffs.extent(1) != k ||
         cc.pca.components.extent(0) != k || cc.pca.components.extent(1) != W)) {
      throw ShapeError("reconstruct: channel " + std::to_string(c) + " coeffs " +
                       cc.coeffs.shape_string() + " inconsistent with components " +
                       cc.pca.components.shape_string());
    }
    double* dst = out.data() + c * H * W;
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) dst[i * W + j] = cc.pca.mean[j];
      for (std::size_t r = 0; r < k; ++r) {
        const double coef = cc.coeffs.at2(i, r);
        const double* comp = cc.pca.components.data() + r * W;
        for (std::size_t j = 0; j < W; ++j) dst[i * W + j] += coef * comp[j];
      }
    }
  }
  return out;
}

std::size_t components_for_variance(const ChannelPca& pca, double threshold) {
  if (!(threshold > 0.0) || threshold > 1.0) {
    throw ValueError("components_for_variance: threshold must lie in (0, 1]");
  }
  if (pca.rank() == 0) return 0;
  double cum = 0.0;
  for (std::size_t k = 0; k < pca.rank(); ++k) {
    cum += pca.explained_variance_ratio[k];
    if (cum >= threshold - 1e-12) return k + 1;
  }
  return pca.rank();
}

std::vector<std::pair<std::size_t, double>> variance_curve(const ChannelPca& pca) {
  std::vector<std::pair<std::size_t, double>> curve;
  curve.reserve(pca.rank());
  double cum = 0.0;
  for (std::size_t k = 0; k < pca.rank(); ++k) {
    cum += pca.explained_variance_ratio[k];
    curve.emplace_back(k + 1, cum);
  }
  return curve;
}

void save_compressed(const CompressedImage& image, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json header;
  header["channels"] = image.channels.size();
  header["height"] = image.height;
  header["width"] = image.width;
  std::vector<std::size_t> ks;
  for (const CompressedChannel& cc : image.channels) ks.push_back(cc.pca.rank());
  header["k"] = ks;

  std::ofstream out(fs::path(dir) / "shape.json");
  if (!out) throw IoError("cannot write shape header in '" + dir + "'");
  out << header.dump(2) << "\n";

  for (std::size_t c = 0; c < image.channels.size(); ++c) {
    const CompressedChannel& cc = image.channels[c];
    const std::string suffix = "_c" + std::to_string(c) + ".npy";
    write_npy((fs::path(dir) / ("mean" + suffix)).string(), cc.pca.mean);
    if (cc.pca.rank() > 0) {
      write_npy((fs::path(dir) / ("components" + suffix)).string(), cc.pca.components);
      write_npy((fs::path(dir) / ("coeffs" + suffix)).string(), cc.coeffs);
      write_npy((fs::path(dir) / ("sigma" + suffix)).string(),
                Tensor({cc.pca.rank()}, std::vector<double>(cc.pca.singular_values)));
    }
  }
}

CompressedImage load_compressed(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "shape.json");
  if (!in) throw IoError("cannot read shape header in '" + dir + "'");
  nlohmann::json header = nlohmann::json::parse(in, nullptr, true);

  CompressedImage image;
  image.height = header.at("height").get<std::size_t>();
  image.width = header.at("width").get<std::size_t>();
  const std::size_t C = header.at("channels").get<std::size_t>();
  const std::vector<std::size_t> ks = header.at("k").get<std::vector<std::size_t>>();
  if (ks.size() != C) throw IoError("shape header channel/k mismatch in '" + dir + "'");

  for (std::size_t c = 0; c < C; ++c) {
    const std::string suffix = "_c" + std::to_string(c) + ".npy";
    CompressedChannel cc;
    cc.pca.mean = read_npy((fs::path(dir) / ("mean" + suffix)).string()).to_tensor();
    if (ks[c] > 0) {
      cc.pca.components =
          read_npy((fs::path(dir) / ("components" + suffix)).string()).to_tensor();
      cc.coeffs = read_npy((fs::path(dir) / ("coeffs" + suffix)).string()).to_tensor();
      Tensor sigma = read_npy((fs::path(dir) / ("sigma" + suffix)).string()).to_tensor();
      cc.pca.singular_values.assign(sigma.data(), sigma.data() + sigma.size());
      double total = 0.0;
      for (double s : cc.pca.singular_values) total += s * s;
      for (double s : cc.pca.singular_values) {
        cc.pca.explained_variance_ratio.push_back(total > 0.0 ? s * s / total : 0.0);
      }
    }
    image.channels.push_back(std::move(cc));
  }
  return image;
}

}  // namespace cxr
