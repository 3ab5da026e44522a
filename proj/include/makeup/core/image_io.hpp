#pragma once

#include <openssl/evp.h>
#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "makeup/core/tensor.hpp"

namespace makeup {

using real = float;
using Image = Tensor<real>;  // [3,H,W], RGB, values in [0,1]

// Decode + center-crop to square + resize. Values are exact k/255 so a
// save/load round trip is bit-stable.
inline Image load_image(const std::string& path, int resolution) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("unreadable image: " + path);
  int side = std::min(bgr.rows, bgr.cols);
  int y0 = (bgr.rows - side) / 2, x0 = (bgr.cols - side) / 2;
  cv::Mat sq = bgr(cv::Rect(x0, y0, side, side));
  cv::Mat resized;
  if (side == resolution)
    resized = sq.clone();
  else
    cv::resize(sq, resized, cv::Size(resolution, resolution), 0, 0,
               side > resolution ? cv::INTER_AREA : cv::INTER_LINEAR);
  Image img({3, resolution, resolution});
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x) {
      cv::Vec3b px = resized.at<cv::Vec3b>(y, x);
      img.at(0, y, x) = static_cast<real>(px[2]) / real(255);  // R
      img.at(1, y, x) = static_cast<real>(px[1]) / real(255);
      img.at(2, y, x) = static_cast<real>(px[0]) / real(255);  // B
    }
  return img;
}

inline std::vector<unsigned char> quantize_u8(const Image& img) {
  std::vector<unsigned char> out(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) {
    real v = img.data[i];
    v = v < real(0) ? real(0) : (v > real(1) ? real(1) : v);
    out[i] = static_cast<unsigned char>(std::lround(static_cast<double>(v) * 255.0));
  }
  return out;
}

inline void save_image(const std::string& path, const Image& img) {
  int h = img.dim(1), w = img.dim(2);
  auto u8 = quantize_u8(img);
  cv::Mat bgr(h, w, CV_8UC3);
  size_t plane = static_cast<size_t>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      size_t i = static_cast<size_t>(y) * w + x;
      bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(u8[2 * plane + i], u8[plane + i], u8[i]);
    }
  if (!cv::imwrite(path, bgr)) throw std::runtime_error("cannot write image: " + path);
}

// ---- paletted mask PNG (region codes 0..4 stored as palette indices) ----

inline void write_mask_png(const std::string& path, const std::vector<unsigned char>& codes,
                           int w, int h) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write mask: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("libpng write failure: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  // 0: none, 1: skin, 2: lips, 3: eye-left, 4: eye-right
  png_color palette[5] = {{0, 0, 0}, {180, 140, 120}, {200, 40, 60}, {60, 60, 200}, {60, 200, 200}};
  png_set_PLTE(png, info, palette, 5);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(codes.data() + static_cast<size_t>(y) * w));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// Reads palette indices without palette expansion.
inline std::vector<unsigned char> read_mask_png(const std::string& path, int& w, int& h) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open mask: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("libpng read failure: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_PALETTE)
    png_longjmp(png, 1);
  if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
  png_read_update_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  std::vector<unsigned char> codes(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    png_read_row(png, codes.data() + static_cast<size_t>(y) * w, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return codes;
}

// ---- hashing ----

inline std::string sha256_hex(const unsigned char* data, size_t n) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_hex(const std::string& s) {
  return sha256_hex(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

// Hash of an image's 8-bit quantization; the manifest stores these.
inline std::string image_content_hash(const Image& img) {
  auto u8 = quantize_u8(img);
  return sha256_hex(u8.data(), u8.size());
}

inline std::string file_sha256(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot hash missing file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

}  // namespace makeup
