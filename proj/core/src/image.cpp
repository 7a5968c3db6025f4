#include "cxr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "cxr/error.hpp"
#include "cxr/npy.hpp"

namespace cxr {

Tensor resize_image(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 3) {
    throw ShapeError("resize_image expects (C, H, W), got " + image.shape_string());
  }
  if (out_h == 0 || out_w == 0) throw ValueError("resize_image: target extents must be positive");
  if (!image.all_finite()) throw ValueError("resize_image: non-finite pixel values");

  const std::size_t C = image.extent(0), H = image.extent(1), W = image.extent(2);
  if (H == out_h && W == out_w) return image;

  Tensor out({C, out_h, out_w});
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  for (std::size_t c = 0; c < C; ++c) {
    const double* src = image.data() + c * H * W;
    double* dst = out.data() + c * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      // Half-pixel centers, clamped at the borders.
      double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(H - 1));
      const std::size_t y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, H - 1);
      const double wy = fy - static_cast<double>(y0);
      for (std::size_t x = 0; x < out_w; ++x) {
        double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(W - 1));
        const std::size_t x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, W - 1);
        const double wx = fx - static_cast<double>(x0);
        const double top = src[y0 * W + x0] * (1.0 - wx) + src[y0 * W + x1] * wx;
        const double bot = src[y1 * W + x0] * (1.0 - wx) + src[y1 * W + x1] * wx;
        dst[y * out_w + x] = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_pgm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      while (in.get(c) && c != '\n') {
      }
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

Tensor read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  if (next_pgm_token(in) != "P5") throw IoError("'" + path + "': not a binary PGM (P5) file");
  const std::size_t w = std::stoull(next_pgm_token(in));
  const std::size_t h = std::stoull(next_pgm_token(in));
  const unsigned long maxval = std::stoul(next_pgm_token(in));
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
    throw IoError("'" + path + "': invalid PGM header");
  }

  Tensor out({1, h, w});
  const double inv = 1.0 / static_cast<double>(maxval);
  if (maxval < 256) {
    std::vector<unsigned char> buf(h * w);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw IoError("'" + path + "': truncated PGM payload");
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i] * inv;
  } else {
    std::vector<unsigned char> buf(h * w * 2);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw IoError("'" + path + "': truncated PGM payload");
    for (std::size_t i = 0; i < h * w; ++i) {
      out[i] = (buf[2 * i] * 256u + buf[2 * i + 1]) * inv;  // big-endian
    }
  }
  return out;
}

void write_pgm(const std::string& path, const Tensor& image, unsigned maxval) {
  if (image.rank() != 3 || image.extent(0) != 1) {
    throw ShapeError("write_pgm expects (1, H, W), got " + image.shape_string());
  }
  if (maxval == 0 || maxval > 65535) throw ValueError("write_pgm: maxval out of range");
  const std::size_t h = image.extent(1), w = image.extent(2);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P5\n" << w << " " << h << "\n" << maxval << "\n";
  for (std::size_t i = 0; i < h * w; ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0) * maxval;
    const unsigned long q = static_cast<unsigned long>(std::lround(v));
    if (maxval < 256) {
      out.put(static_cast<char>(q));
    } else {
      out.put(static_cast<char>(q >> 8));
      out.put(static_cast<char>(q & 0xff));
    }
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

Tensor load_image(const std::string& path) {
  const std::size_t dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".pgm") return read_pgm(path);
  if (ext == ".npy") {
    Tensor t = read_npy(path).to_tensor();
    if (t.rank() == 2) return t.reshaped({1, t.extent(0), t.extent(1)});
    if (t.rank() == 3) return t;
    throw ShapeError("'" + path + "': expected (H,W) or (C,H,W) image array, got " +
                     t.shape_string());
  }
  throw IoError("'" + path + "': unsupported image format (want .npy or .pgm)");
}

}  // namespace cxr
