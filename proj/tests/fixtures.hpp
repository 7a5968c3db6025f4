#pragma once

// Synthetic datasets shared by the trainer tests, the CLI tests and the
// acceptance suite.

#include <fstream>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"
#include "cxr/image.hpp"
#include "cxr/rng.hpp"
#include "cxr/tensor.hpp"
#include "cxr/trainer.hpp"

namespace fixtures {

// Bright 3x3 patch on a dark noisy background; the patch mean alone
// separates the classes, so a linear probe already classifies perfectly.
inline cxr::Tensor patch_image(bool positive, std::size_t side, cxr::RandomStream& rng) {
  cxr::Tensor img({1, side, side});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = 0.1 + 0.25 * rng.uniform();
  if (positive) {
    for (std::size_t y = 1; y < 4; ++y) {
      for (std::size_t x = 1; x < 4; ++x) img[y * side + x] = 0.85 + 0.1 * rng.uniform();
    }
  }
  return img;
}

inline cxr::LabelVector disease_label(bool positive) {
  cxr::LabelVector l;
  if (positive) l.bits[1] = 1;  // Cardiomegaly, arbitrarily
  return l;
}

// 32-sample balanced separable set.
inline cxr::DataSet separable_32(std::size_t side = 16, std::uint64_t seed = 404) {
  cxr::RandomStream rng(seed);
  cxr::DataSet data;
  for (int i = 0; i < 32; ++i) {
    const bool positive = i % 2 == 1;
    data.images.push_back(patch_image(positive, side, rng));
    data.labels.push_back(disease_label(positive));
  }
  return data;
}

// n samples with the given positive count, shuffled deterministically.
inline cxr::DataSet imbalanced(std::size_t n, std::size_t positives, std::size_t side,
                               std::uint64_t seed) {
  cxr::RandomStream rng(seed);
  std::vector<int> flags(n, 0);
  for (std::size_t i = 0; i < positives; ++i) flags[i] = 1;
  rng.shuffle(flags);
  cxr::DataSet data;
  for (std::size_t i = 0; i < n; ++i) {
    data.images.push_back(patch_image(flags[i] != 0, side, rng));
    data.labels.push_back(disease_label(flags[i] != 0));
  }
  return data;
}

// Twelve PGM images across six patients, each patient contributing one
// diseased and one clean image, plus the matching metadata CSV. Returns the
// metadata path.
inline std::string write_cli_fixture(const std::string& dir) {
  cxr::RandomStream rng(777);
  const char* diseases[6] = {"Cardiomegaly", "Effusion",  "Atelectasis",
                             "Pneumonia",    "Infiltration", "Mass"};
  std::string csv =
      "Image Index,Finding Labels,Patient ID,Patient Age,Patient Gender,View Position\n";
  for (int p = 0; p < 6; ++p) {
    for (int j = 0; j < 2; ++j) {
      const bool positive = j == 0;
      const std::string id = "img" + std::to_string(p) + (positive ? "a" : "b") + ".pgm";
      cxr::Tensor img({1, 20, 14});
      for (std::size_t i = 0; i < img.size(); ++i) img[i] = 0.1 + 0.25 * rng.uniform();
      if (positive) {
        for (std::size_t y = 2; y < 6; ++y) {
          for (std::size_t x = 2; x < 6; ++x) img[y * 14 + x] = 0.85 + 0.1 * rng.uniform();
        }
      }
      cxr::write_pgm(dir + "/" + id, img);
      csv += id + "," + (positive ? diseases[p] : "No Finding") + ",P" + std::to_string(p) + "," +
             std::to_string(30 + 7 * p) + "," + (p % 2 ? "F" : "M") + "," +
             (p % 3 ? "PA" : "AP") + "\n";
    }
  }
  const std::string metadata = dir + "/metadata.csv";
  std::ofstream out(metadata);
  out << csv;
  return metadata;
}

}  // namespace fixtures
