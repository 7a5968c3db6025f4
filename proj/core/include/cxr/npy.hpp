#pragma once

#include <string>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

enum class NpyDtype { F4, F8 };

// Decoded NPY v1.0 payload; exactly one of `f4`/`f8` is populated.
struct NpyArray {
  NpyDtype dtype = NpyDtype::F8;
  std::vector<std::size_t> shape;
  std::vector<float> f4;
  std::vector<double> f8;

  std::size_t size() const { return dtype == NpyDtype::F4 ? f4.size() : f8.size(); }
  Tensor to_tensor() const;  // widens f4 payloads to double
};

// Writers emit NPY v1.0: magic \x93NUMPY, version 01 00, little-endian
// IEEE-754, C-contiguous order. Finite values only.
void write_npy(const std::string& path, const Tensor& tensor);  // <f8
void write_npy(const std::string& path, const std::vector<std::size_t>& shape,
               const std::vector<float>& data);  // <f4

// Rejects malformed magic/version (naming the byte offset), fortran_order,
// and dtypes other than <f4 / <f8.
NpyArray read_npy(const std::string& path);

}  // namespace cxr
