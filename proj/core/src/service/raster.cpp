#include <png.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "apl/error.hpp"
#include "apl/service.hpp"

namespace apl::service {

Plane<std::uint8_t> window_slice(const Plane<float>& slice, double centre, double width) {
  if (!(width > 0.0)) throw Error(ErrorCode::validation, "window width must be positive");
  Plane<std::uint8_t> out(slice.width, slice.height);
  const double lo = centre - width / 2.0;
  for (std::size_t i = 0; i < slice.data.size(); ++i) {
    const double t = std::clamp((static_cast<double>(slice.data[i]) - lo) / width, 0.0, 1.0);
    out.data[i] = static_cast<std::uint8_t>(std::floor(t * 255.0 + 0.5));
  }
  return out;
}

std::vector<std::uint8_t> encode_pgm(const Plane<std::uint8_t>& raster) {
  const std::string header =
      "P5\n" + std::to_string(raster.width) + " " + std::to_string(raster.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), raster.data.begin(), raster.data.end());
  return out;
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Plane<std::uint8_t>& raster) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::write, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::write, "png encoding failed");
  }
  png_set_write_fn(png, &out, png_append, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width), static_cast<png_uint_32>(raster.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::int64_t v = 0; v < raster.height; ++v) {
    png_write_row(png, const_cast<png_bytep>(raster.data.data() + v * raster.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace apl::service
