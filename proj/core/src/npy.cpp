#include "cxr/npy.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cxr/error.hpp"

namespace cxr {

namespace {

constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

std::string header_dict(const char* descr, const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << shape[i];
    if (shape.size() == 1 || i + 1 < shape.size()) os << ",";
    if (i + 1 < shape.size()) os << " ";
  }
  os << "), }";
  return os.str();
}

void write_payload(const std::string& path, const char* descr,
                   const std::vector<std::size_t>& shape, const void* data, std::size_t bytes) {
  std::string dict = header_dict(descr, shape);
  // Pad with spaces so that magic + version + length + header is a multiple
  // of 64 bytes, terminated by a newline.
  std::size_t total = 10 + dict.size() + 1;
  std::size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - total, ' ');
  dict.push_back('\n');
  if (dict.size() > 0xffff) throw IoError("npy header too large");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kMagic, 6);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const std::uint16_t hlen = static_cast<std::uint16_t>(dict.size());
  const char hlen_le[2] = {static_cast<char>(hlen & 0xff), static_cast<char>(hlen >> 8)};
  out.write(hlen_le, 2);
  out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("write failed for '" + path + "'");
}

class HeaderParser {
 public:
  explicit HeaderParser(const std::string& text) : text_(text) {}

  std::string string_value(const std::string& key) {
    std::size_t p = find_key(key);
    p = text_.find('\'', p);
    if (p == std::string::npos) bad(key);
    std::size_t q = text_.find('\'', p + 1);
    if (q == std::string::npos) bad(key);
    return text_.substr(p + 1, q - p - 1);
  }

  bool bool_value(const std::string& key) {
    std::size_t p = skip_ws(find_key(key));
    if (text_.compare(p, 4, "True") == 0) return true;
    if (text_.compare(p, 5, "False") == 0) return false;
    bad(key);
    return false;
  }

  std::vector<std::size_t> shape_value(const std::string& key) {
    std::size_t p = text_.find('(', find_key(key));
    if (p == std::string::npos) bad(key);
    std::size_t q = text_.find(')', p);
    if (q == std::string::npos) bad(key);
    std::vector<std::size_t> shape;
    std::string body = text_.substr(p + 1, q - p - 1);
    std::istringstream is(body);
    std::string item;
    while (std::getline(is, item, ',')) {
      std::size_t b = item.find_first_not_of(" \t");
      if (b == std::string::npos) continue;
      shape.push_back(static_cast<std::size_t>(std::stoull(item.substr(b))));
    }
    return shape;
  }

 private:
  std::size_t find_key(const std::string& key) {
    std::size_t p = text_.find("'" + key + "'");
    if (p == std::string::npos) bad(key);
    p = text_.find(':', p);
    if (p == std::string::npos) bad(key);
    return p + 1;
  }

  std::size_t skip_ws(std::size_t p) {
    while (p < text_.size() && (text_[p] == ' ' || text_[p] == '\t')) ++p;
    return p;
  }

  [[noreturn]] void bad(const std::string& key) {
    throw IoError("npy header missing or malformed key '" + key + "': " + text_);
  }

  const std::string& text_;
};

}  // namespace

Tensor NpyArray::to_tensor() const {
  if (dtype == NpyDtype::F8) return Tensor(shape, f8);
  std::vector<double> widened(f4.begin(), f4.end());
  return Tensor(shape, std::move(widened));
}

void write_npy(const std::string& path, const Tensor& tensor) {
  if (!tensor.all_finite()) throw ValueError("refusing to write non-finite values to " + path);
  write_payload(path, "<f8", tensor.shape(), tensor.data(), tensor.size() * sizeof(double));
}

void write_npy(const std::string& path, const std::vector<std::size_t>& shape,
               const std::vector<float>& data) {
  std::size_t expect = 1;
  for (std::size_t e : shape) expect *= e;
  if (expect != data.size()) {
    throw ShapeError("npy payload length " + std::to_string(data.size()) +
                     " does not match shape " + Tensor::shape_string(shape));
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw ValueError("refusing to write non-finite values to " + path);
  }
  write_payload(path, "<f4", shape, data.data(), data.size() * sizeof(float));
}

NpyArray read_npy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kMagic, 6) != 0) {
    throw IoError("'" + path + "': bad npy magic string at offset 0");
  }
  char version[2];
  in.read(version, 2);
  if (!in || version[0] != 1 || version[1] != 0) {
    throw IoError("'" + path + "': unsupported npy version at offset 6 (want 1.0)");
  }
  unsigned char hlen_le[2];
  in.read(reinterpret_cast<char*>(hlen_le), 2);
  if (!in) throw IoError("'" + path + "': truncated npy header length at offset 8");
  const std::size_t hlen = hlen_le[0] | (static_cast<std::size_t>(hlen_le[1]) << 8);

  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("'" + path + "': truncated npy header at offset 10");

  HeaderParser parser(header);
  const std::string descr = parser.string_value("descr");
  if (parser.bool_value("fortran_order")) {
    throw IoError("'" + path + "': fortran_order arrays are not supported");
  }
  NpyArray array;
  array.shape = parser.shape_value("shape");
  std::size_t count = 1;
  for (std::size_t e : array.shape) count *= e;

  if (descr == "<f4") {
    array.dtype = NpyDtype::F4;
    array.f4.resize(count);
    in.read(reinterpret_cast<char*>(array.f4.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
  } else if (descr == "<f8") {
    array.dtype = NpyDtype::F8;
    array.f8.resize(count);
    in.read(reinterpret_cast<char*>(array.f8.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    throw IoError("'" + path + "': unsupported npy dtype '" + descr + "' (want <f4 or <f8)");
  }
  if (!in) throw IoError("'" + path + "': truncated npy payload");
  return array;
}

}  // namespace cxr
