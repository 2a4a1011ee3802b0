#include "txsp/image_io.hpp"

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <jpeglib.h>
#include <png.h>

namespace txsp {
namespace {

Tensorf from_interleaved(const std::vector<std::uint8_t>& px, int h, int w, int channels) {
  Tensorf out(Shape{1, 3, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c) {
        const int src = channels < 3 ? 0 : c;
        out(0, c, i, j) = px[(static_cast<std::size_t>(i) * w + j) * channels + src] / 255.0f;
      }
  return out;
}

Tensorf load_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw ImageIoError("cannot read PNG '" + path.string() + "': " + image.message);
  // Read with alpha so it can be discarded rather than composited.
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ImageIoError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  return from_interleaved(px, static_cast<int>(image.height), static_cast<int>(image.width), 4);
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Level -1 marks corrupt data (e.g. a truncated file), which libjpeg would
// otherwise pad with grey; trace messages are dropped.
void on_jpeg_message(j_common_ptr cinfo, int level) {
  if (level < 0) on_jpeg_error(cinfo);
}

Tensorf load_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw ImageIoError("cannot open '" + path.string() + "'");
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = on_jpeg_error;
  err.mgr.emit_message = on_jpeg_message;
  std::vector<std::uint8_t> px;
  int h = 0, w = 0, channels = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageIoError("cannot decode JPEG '" + path.string() + "': " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space != JCS_GRAYSCALE) cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  h = static_cast<int>(cinfo.output_height);
  w = static_cast<int>(cinfo.output_width);
  channels = cinfo.output_components;
  px.resize(static_cast<std::size_t>(h) * w * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = px.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_interleaved(px, h, w, channels);
}

}  // namespace

std::uint8_t quantize(float v) {
  const float c = std::clamp(std::isnan(v) ? 0.0f : v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::floor(c * 255.0f + 0.5f));
}

Tensorf quantized(const Tensorf& img) {
  Tensorf out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = quantize(img[i]) / 255.0f;
  return out;
}

Tensorf load_image(const std::filesystem::path& path) {
  unsigned char sig[8] = {};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIoError("cannot open '" + path.string() + "'");
    in.read(reinterpret_cast<char*>(sig), sizeof sig);
  }
  if (png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
  if (sig[0] == 0xFF && sig[1] == 0xD8) return load_jpeg(path);
  throw ImageIoError("'" + path.string() + "' is neither PNG nor JPEG");
}

void save_png(const std::filesystem::path& path, const Tensorf& img) {
  require(img.n() == 1 && (img.c() == 3 || img.c() == 1),
          "save_png expects [1,3,H,W] or [1,1,H,W], got " + img.shape().str());
  require_nonempty(img.shape(), "save_png");
  const int h = img.h(), w = img.w(), c = img.c();
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w * c);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < c; ++k)
        px[(static_cast<std::size_t>(i) * w + j) * c + k] = quantize(img(0, k, i, j));

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr))
    throw ImageIoError("cannot write PNG '" + path.string() + "': " + image.message);
}

}  // namespace txsp
