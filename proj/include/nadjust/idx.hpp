#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "nadjust/mlp.hpp"
#include "nadjust/rng.hpp"

namespace nadjust {

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError("unexpected end of IDX header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace detail

// Reader for the big-endian IDX image/label pair (magic 0x00000803 for ubyte
// image cubes, 0x00000801 for ubyte label vectors). Pixels are scaled from
// 0..255 into [0,1]; labels become one-hot targets over num_classes.
inline Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                std::size_t num_classes = 10) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open IDX image file: " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open IDX label file: " + labels_path);

  if (detail::read_u32_be(img, images_path) != 0x00000803u)
    throw ParseError("bad IDX image magic in " + images_path);
  const std::uint32_t n_img = detail::read_u32_be(img, images_path);
  const std::uint32_t rows = detail::read_u32_be(img, images_path);
  const std::uint32_t cols = detail::read_u32_be(img, images_path);

  if (detail::read_u32_be(lab, labels_path) != 0x00000801u)
    throw ParseError("bad IDX label magic in " + labels_path);
  const std::uint32_t n_lab = detail::read_u32_be(lab, labels_path);
  if (n_img != n_lab)
    throw InvalidData("IDX image/label count mismatch: " + images_path + " vs " + labels_path);

  const std::size_t pix = std::size_t(rows) * cols;
  Dataset d;
  d.x.reserve(n_img);
  d.y.reserve(n_img);
  d.labels.reserve(n_img);
  std::vector<unsigned char> buf(pix);
  for (std::uint32_t i = 0; i < n_img; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), std::streamsize(pix)))
      throw ParseError("truncated IDX image data in " + images_path);
    Vec x(pix);
    for (std::size_t j = 0; j < pix; ++j) x[j] = double(buf[j]) / 255.0;
    unsigned char l = 0;
    if (!lab.read(reinterpret_cast<char*>(&l), 1))
      throw ParseError("truncated IDX label data in " + labels_path);
    if (l >= num_classes)
      throw InvalidData("IDX label out of range in " + labels_path);
    Vec y(num_classes, 0.0);
    y[l] = 1.0;
    d.x.push_back(std::move(x));
    d.y.push_back(std::move(y));
    d.labels.push_back(int(l));
  }
  return d;
}

struct BlobSpec {
  std::size_t classes = 3;
  std::size_t dim = 4;
  std::size_t per_class = 60;
  double center_scale = 1.0;  // class centers ~ center_scale * N(0, I)
  double spread = 0.25;       // within-class standard deviation
};

// Small synthetic classification problem: one Gaussian cloud per class
// around a randomly drawn center. Cheap enough that confidence-interval
// paths can be exercised end to end in unit tests.
inline Dataset gaussian_blob_dataset(const BlobSpec& spec, RngStream& rng) {
  if (spec.classes < 2 || spec.dim < 1 || spec.per_class < 1)
    throw InvalidParams("gaussian_blob_dataset: need >= 2 classes, dim >= 1, per_class >= 1");
  std::vector<Vec> centers(spec.classes, Vec(spec.dim));
  for (Vec& c : centers)
    for (double& v : c) v = spec.center_scale * rng.normal();
  Dataset d;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Vec x(spec.dim);
      for (std::size_t j = 0; j < spec.dim; ++j) x[j] = centers[c][j] + spec.spread * rng.normal();
      Vec y(spec.classes, 0.0);
      y[c] = 1.0;
      d.x.push_back(std::move(x));
      d.y.push_back(std::move(y));
      d.labels.push_back(int(c));
    }
  }
  return d;
}

}  // namespace nadjust
