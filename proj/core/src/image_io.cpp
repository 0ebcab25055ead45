#include "dsppnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace dsppnet {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::string lower_ext(const std::string& path) {
  const std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

// Reads the next header token of a PNM file, skipping whitespace and
// '#'-to-end-of-line comments.
std::string pnm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) {
        // Leave the delimiter in the stream: after the maxval token it is
        // the single byte separating the header from the raster.
        in.unget();
        return tok;
      }
      continue;
    }
    tok += static_cast<char>(c);
  }
  if (tok.empty()) fail(path, "truncated PNM header");
  return tok;
}

int pnm_int(std::istream& in, const std::string& path, const char* what) {
  const std::string tok = pnm_token(in, path);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(path, std::string("malformed ") + what + " field '" + tok + "'");
  }
}

// Shared raster reader for P5 (1 plane) and P6 (3 planes).
Tensor read_pnm(const std::string& path, const char* magic, int planes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != magic[0] || m1 != magic[1]) {
    fail(path, std::string("not a ") + magic + " file");
  }
  const int w = pnm_int(in, path, "width");
  const int h = pnm_int(in, path, "height");
  const int maxval = pnm_int(in, path, "maxval");
  if (w < 1 || h < 1) fail(path, "non-positive image dimensions");
  if (maxval < 1 || maxval > 255) {
    fail(path, "unsupported maxval " + std::to_string(maxval) + " (8-bit only)");
  }
  // Exactly one whitespace byte separates the header from the raster.
  const int sep = in.get();
  if (sep == EOF || !std::isspace(sep)) fail(path, "missing raster separator");

  const std::size_t count =
      static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
      static_cast<std::size_t>(planes);
  std::vector<unsigned char> raster(count);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) fail(path, "truncated raster");

  Tensor out = Tensor::zeros({planes, h, w});
  const double scale = 1.0 / static_cast<double>(maxval);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int p = 0; p < planes; ++p) {
      out.at(static_cast<std::int64_t>(p) * plane + i) =
          static_cast<double>(raster[static_cast<std::size_t>(i * planes + p)]) * scale;
    }
  }
  return out;
}

unsigned char quantize(double v) {
  v = std::min(1.0, std::max(0.0, v));
  return static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
}

// Accepts [H,W] or [1,H,W]; returns pointer plus extents.
const double* gray_plane(const Tensor& t, int* h, int* w, const char* who) {
  if (t.rank() == 2) {
    *h = t.dim(0);
    *w = t.dim(1);
  } else if (t.rank() == 3 && t.dim(0) == 1) {
    *h = t.dim(1);
    *w = t.dim(2);
  } else {
    throw std::invalid_argument(std::string(who) + ": expected [H,W] or [1,H,W], got " +
                                t.shape_str());
  }
  return t.data();
}

}  // namespace

Tensor read_pgm(const std::string& path) { return read_pnm(path, "P5", 1); }

Tensor read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    fail(path, std::string("libpng: ") + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int planes = color ? 3 : 1;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    fail(path, "libpng: " + msg);
  }
  const int h = static_cast<int>(img.height);
  const int w = static_cast<int>(img.width);
  Tensor out = Tensor::zeros({planes, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int p = 0; p < planes; ++p) {
      out.at(static_cast<std::int64_t>(p) * plane + i) =
          static_cast<double>(buf[static_cast<std::size_t>(i * planes + p)]) / 255.0;
    }
  }
  return out;
}

bool image_extension_supported(const std::string& path) {
  const std::string ext = lower_ext(path);
  return ext == "pgm" || ext == "png";
}

Tensor read_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "pgm") return read_pgm(path);
  if (ext == "png") return read_png(path);
  fail(path, "unsupported image extension '" + ext + "' (expected .pgm or .png)");
}

void write_pgm(const std::string& path, const Tensor& image) {
  int h = 0, w = 0;
  const double* src = gray_plane(image, &h, &w, "write_pgm");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> raster(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < raster.size(); ++i) raster[i] = quantize(src[i]);
  out.write(reinterpret_cast<const char*>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
  if (!out) fail(path, "short write");
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("write_ppm: expected [3,H,W], got " + image.shape_str());
  }
  const int h = image.dim(1), w = image.dim(2);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> raster(static_cast<std::size_t>(plane) * 3);
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int p = 0; p < 3; ++p) {
      raster[static_cast<std::size_t>(i * 3 + p)] =
          quantize(image.at(static_cast<std::int64_t>(p) * plane + i));
    }
  }
  out.write(reinterpret_cast<const char*>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
  if (!out) fail(path, "short write");
}

void write_overlay_ppm(const std::string& path, const Tensor& base,
                       const Tensor& heat) {
  int h = 0, w = 0, hh = 0, hw = 0;
  const double* b = gray_plane(base, &h, &w, "write_overlay_ppm");
  const double* m = gray_plane(heat, &hh, &hw, "write_overlay_ppm");
  if (h != hh || w != hw) {
    throw std::invalid_argument("write_overlay_ppm: base " + base.shape_str() +
                                " and heat " + heat.shape_str() + " disagree");
  }
  Tensor rgb = Tensor::zeros({3, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < plane; ++i) {
    const double gray = std::min(1.0, std::max(0.0, b[i]));
    const double hv = std::min(1.0, std::max(0.0, m[i]));
    rgb.at(i) = gray + (1.0 - gray) * hv;  // toward pure red
    rgb.at(plane + i) = gray * (1.0 - hv);
    rgb.at(2 * plane + i) = gray * (1.0 - hv);
  }
  write_ppm(path, rgb);
}

}  // namespace dsppnet
