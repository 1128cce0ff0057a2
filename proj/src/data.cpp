#include "trapnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "trapnet/error.hpp"
#include "trapnet/json_io.hpp"
#include "trapnet/rng.hpp"

namespace trapnet {

namespace fs = std::filesystem;

namespace {

constexpr unsigned char kIdxUnsignedByte = 0x08;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Rescales to [lo, hi] using the template's own min/max.
void stretch(Tensor2D& t, double lo, double hi) {
  const auto v = t.values();
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double a = *mn;
  const double range = *mx - a;
  for (auto& p : v) p = range > 0.0 ? lo + (hi - lo) * (p - a) / range : 0.5 * (lo + hi);
}

Tensor2D make_template(std::size_t family, std::size_t side, double background,
                       double contrast, Rng& rng) {
  Tensor2D t(1, side * side);
  const double s = static_cast<double>(side);
  const double pi = std::numbers::pi;
  switch (family % 4) {
    case 0: {  // stripes
      const bool horizontal = rng.coin();
      const double freq = 1.0 + static_cast<double>(rng.below(3));
      const double phase = rng.uniform(0.0, 2.0 * pi);
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
          const double u = static_cast<double>(horizontal ? r : c) / s;
          t[r * side + c] = std::sin(2.0 * pi * freq * u + phase);
        }
      }
      break;
    }
    case 1: {  // rings
      const double cy = s / 2.0 + rng.uniform(-1.0, 1.0);
      const double cx = s / 2.0 + rng.uniform(-1.0, 1.0);
      const double period = rng.uniform(0.35, 0.6) * s;
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
          const double d = std::hypot(static_cast<double>(r) - cy, static_cast<double>(c) - cx);
          t[r * side + c] = std::cos(2.0 * pi * d / period);
        }
      }
      break;
    }
    case 2: {  // blobs
      const std::size_t count = 2 + rng.below(2);
      for (std::size_t b = 0; b < count; ++b) {
        const double by = rng.uniform(0.0, s);
        const double bx = rng.uniform(0.0, s);
        const double width = rng.uniform(0.12, 0.25) * s;
        for (std::size_t r = 0; r < side; ++r) {
          for (std::size_t c = 0; c < side; ++c) {
            const double dy = static_cast<double>(r) - by;
            const double dx = static_cast<double>(c) - bx;
            t[r * side + c] += std::exp(-(dy * dy + dx * dx) / (2.0 * width * width));
          }
        }
      }
      break;
    }
    default: {  // ramp
      const double angle = rng.uniform(0.0, 2.0 * pi);
      const double ca = std::cos(angle);
      const double sa = std::sin(angle);
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
          t[r * side + c] = ca * static_cast<double>(c) + sa * static_cast<double>(r);
        }
      }
      break;
    }
  }
  const double lo = background + contrast * rng.uniform(0.0, 0.2);
  stretch(t, lo, lo + 2.0 * contrast * rng.uniform(0.8, 1.0));
  return t;
}

std::uint32_t read_be32(std::span<const unsigned char> buf, std::size_t offset,
                        const char* what) {
  if (offset + 4 > buf.size()) {
    throw FormatError(std::string(what) + ": truncated header", buf.size());
  }
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void append_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

// Returns the dimension sizes after checking the magic number.
std::vector<std::uint32_t> read_idx_header(std::span<const unsigned char> buf,
                                           unsigned char expected_ndims, const char* what) {
  if (buf.size() < 4) throw FormatError(std::string(what) + ": truncated magic number", buf.size());
  for (std::size_t i = 0; i < 2; ++i) {
    if (buf[i] != 0) throw FormatError(std::string(what) + ": bad magic number", i);
  }
  if (buf[2] != kIdxUnsignedByte) {
    throw FormatError(std::string(what) + ": unsupported element type (expected unsigned byte)", 2);
  }
  if (buf[3] != expected_ndims) {
    throw FormatError(std::string(what) + ": expected " + std::to_string(expected_ndims) +
                          " dimensions, found " + std::to_string(buf[3]),
                      3);
  }
  std::vector<std::uint32_t> dims;
  for (std::size_t d = 0; d < expected_ndims; ++d) dims.push_back(read_be32(buf, 4 + 4 * d, what));
  return dims;
}

std::vector<unsigned char> read_binary(const fs::path& path) {
  const std::string text = read_text_file(path);
  return {text.begin(), text.end()};
}

}  // namespace

void Dataset::validate() const {
  if (images.size() != labels.size()) {
    throw ConfigError("dataset has " + std::to_string(images.size()) + " images but " +
                      std::to_string(labels.size()) + " labels");
  }
  if (num_classes < 2) throw ConfigError("dataset needs at least two classes");
  const std::size_t dim = input_dim();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != dim) {
      throw ConfigError("image " + std::to_string(i) + " has inconsistent size");
    }
    for (double p : images[i].values()) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError("image " + std::to_string(i) + " has a pixel outside [0,1]");
      }
    }
    if (labels[i] >= num_classes) {
      throw ConfigError("label " + std::to_string(labels[i]) + " out of range at sample " +
                        std::to_string(i));
    }
  }
}

void GenConfig::validate() const {
  if (num_classes < 2) throw ConfigError("gen config: num_classes must be >= 2");
  if (image_side < 4) throw ConfigError("gen config: image_side must be >= 4");
  if (samples_per_class == 0) throw ConfigError("gen config: samples_per_class must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("gen config: noise_sigma must be finite and >= 0");
  }
  if (!(contrast > 0.0 && contrast <= 0.5)) {
    throw ConfigError("gen config: contrast must lie in (0, 0.5]");
  }
  if (!(background >= 0.0 && background + 2.0 * contrast <= 1.0)) {
    throw ConfigError("gen config: background + 2 * contrast must lie in [0, 1]");
  }
}

std::vector<Tensor2D> synthetic_templates(const GenConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "templates"));
  std::vector<Tensor2D> templates;
  for (std::size_t k = 0; k < config.num_classes; ++k) {
    templates.push_back(
        make_template(k, config.image_side, config.background, config.contrast, rng));
  }
  return templates;
}

Dataset gen_synthetic(const GenConfig& config) {
  const auto templates = synthetic_templates(config);
  Rng rng(derive_seed(config.seed, "noise"));
  Dataset ds;
  ds.num_classes = config.num_classes;
  for (std::size_t k = 0; k < config.num_classes; ++k) {
    for (std::size_t i = 0; i < config.samples_per_class; ++i) {
      Tensor2D img = templates[k];
      if (config.noise_sigma > 0.0) {
        for (auto& p : img.values()) p = clamp01(p + rng.normal(0.0, config.noise_sigma));
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(k);
    }
  }
  return ds;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= ds.size()) throw IndexError("subset index " + std::to_string(i) + " out of range");
    out.images.push_back(ds.images[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed) {
  if (ds.empty()) throw ConfigError("split: empty dataset");
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw ConfigError("split: train_frac must lie in (0, 1)");
  }
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(ds.size())));
  const std::span<const std::size_t> all(order);
  return {subset(ds, all.first(n_train)), subset(ds, all.subspan(n_train))};
}

Dataset parse_idx(std::span<const unsigned char> images, std::span<const unsigned char> labels) {
  const auto idims = read_idx_header(images, 3, "IDX images");
  const auto ldims = read_idx_header(labels, 1, "IDX labels");
  const std::size_t count = idims[0];
  const std::size_t rows = idims[1];
  const std::size_t cols = idims[2];
  if (ldims[0] != count) {
    throw FormatError("IDX labels: count " + std::to_string(ldims[0]) +
                          " does not match image count " + std::to_string(count),
                      4);
  }
  if (rows == 0 || cols == 0) throw FormatError("IDX images: zero image dimension", 8);
  const std::size_t image_header = 16;
  const std::size_t label_header = 8;
  const std::size_t pixels = rows * cols;
  if (images.size() < image_header + count * pixels) {
    throw FormatError("IDX images: truncated pixel data, expected " +
                          std::to_string(image_header + count * pixels) + " bytes",
                      images.size());
  }
  if (labels.size() < label_header + count) {
    throw FormatError("IDX labels: truncated label data, expected " +
                          std::to_string(label_header + count) + " bytes",
                      labels.size());
  }
  Dataset ds;
  std::size_t max_label = 0;
  for (std::size_t n = 0; n < count; ++n) {
    Tensor2D img(1, pixels);
    const unsigned char* src = images.data() + image_header + n * pixels;
    for (std::size_t p = 0; p < pixels; ++p) img[p] = static_cast<double>(src[p]) / 255.0;
    ds.images.push_back(std::move(img));
    const std::size_t y = labels[label_header + n];
    max_label = std::max(max_label, y);
    ds.labels.push_back(y);
  }
  ds.num_classes = std::max<std::size_t>(2, max_label + 1);
  return ds;
}

Dataset load_idx(const fs::path& images_path, const fs::path& labels_path) {
  const auto images = read_binary(images_path);
  const auto labels = read_binary(labels_path);
  return parse_idx(images, labels);
}

void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols, const fs::path& images_path,
               const fs::path& labels_path) {
  ds.validate();
  if (!ds.empty() && ds.input_dim() != rows * cols) {
    throw ShapeError("write_idx: images are not " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  std::string img;
  img += std::string("\x00\x00\x08\x03", 4);
  append_be32(img, static_cast<std::uint32_t>(ds.size()));
  append_be32(img, static_cast<std::uint32_t>(rows));
  append_be32(img, static_cast<std::uint32_t>(cols));
  for (const auto& im : ds.images) {
    for (double p : im.values()) img.push_back(static_cast<char>(std::lround(p * 255.0)));
  }
  std::string lab;
  lab += std::string("\x00\x00\x08\x01", 4);
  append_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (auto y : ds.labels) {
    if (y > 255) throw ConfigError("write_idx: label does not fit in a byte");
    lab.push_back(static_cast<char>(y));
  }
  write_text_file(images_path, img);
  write_text_file(labels_path, lab);
}

void write_dataset_cache(const Dataset& ds, const fs::path& stem) {
  ds.validate();
  std::string blob;
  blob.reserve(ds.size() * ds.input_dim() * 8);
  for (const auto& im : ds.images) {
    for (double p : im.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(p);
      for (int b = 0; b < 8; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
  auto blob_path = stem;
  blob_path += ".bin";
  auto manifest_path = stem;
  manifest_path += ".json";
  Json manifest = {
      {"format", "trapnet-dataset"},
      {"version", 1},
      {"count", ds.size()},
      {"input_dim", ds.input_dim()},
      {"num_classes", ds.num_classes},
      {"labels", ds.labels},
      {"pixel_encoding", "f64le"},
      {"blob", blob_path.filename().string()},
      {"blob_sha256", sha256_hex(blob)},
  };
  write_text_file(blob_path, blob);
  write_text_file(manifest_path, to_canonical_json(manifest));
}

Dataset read_dataset_cache(const fs::path& stem) {
  auto manifest_path = stem;
  manifest_path += ".json";
  const Json m = read_json_file(manifest_path);
  Dataset ds;
  std::size_t count = 0;
  std::size_t dim = 0;
  std::string blob_name;
  try {
    if (m.at("format").get<std::string>() != "trapnet-dataset") {
      throw ConfigError("not a dataset manifest: " + manifest_path.string());
    }
    count = m.at("count").get<std::size_t>();
    dim = m.at("input_dim").get<std::size_t>();
    ds.num_classes = m.at("num_classes").get<std::size_t>();
    ds.labels = m.at("labels").get<std::vector<std::size_t>>();
    blob_name = m.at("blob").get<std::string>();
  } catch (const Json::exception& e) {
    throw ConfigError("malformed dataset manifest " + manifest_path.string() + ": " + e.what());
  }
  const auto blob_text = read_text_file(manifest_path.parent_path() / blob_name);
  if (blob_text.size() != count * dim * 8) {
    throw FormatError("dataset blob has wrong size for " + std::to_string(count) + " images",
                      blob_text.size());
  }
  ds.images.reserve(count);
  std::size_t off = 0;
  for (std::size_t n = 0; n < count; ++n) {
    Tensor2D img(1, dim);
    for (std::size_t p = 0; p < dim; ++p) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= std::uint64_t{static_cast<unsigned char>(blob_text[off + b])} << (8 * b);
      }
      off += 8;
      img[p] = std::bit_cast<double>(bits);
    }
    ds.images.push_back(std::move(img));
  }
  ds.validate();
  return ds;
}

Trapdoor make_trapdoor(std::size_t image_side, std::size_t target_class, std::uint64_t seed,
                       std::size_t patch_side, double amplitude) {
  if (patch_side == 0 || patch_side > image_side) {
    throw ConfigError("trapdoor patch of side " + std::to_string(patch_side) +
                      " does not fit a " + std::to_string(image_side) + " image");
  }
  if (!(amplitude > 0.0 && amplitude <= 1.0)) {
    throw ConfigError("trapdoor amplitude must lie in (0, 1]");
  }
  Rng rng(seed);
  Trapdoor t{Tensor2D(1, image_side * image_side), Tensor2D(1, image_side * image_side),
             target_class, amplitude};
  const std::size_t start = image_side - patch_side;
  for (std::size_t r = start; r < image_side; ++r) {
    for (std::size_t c = start; c < image_side; ++c) {
      const std::size_t i = r * image_side + c;
      t.mask[i] = 1.0;
      const double check = ((r + c) % 2 == 0) ? 0.9 : 0.1;
      t.pattern[i] = clamp01(check + rng.uniform(-0.1, 0.1));
    }
  }
  return t;
}

Tensor2D apply_trapdoor(const Tensor2D& x, const Trapdoor& t) {
  require_same_size(x, t.mask, "apply_trapdoor");
  require_same_size(x, t.pattern, "apply_trapdoor");
  Tensor2D out = x;
  const double a = t.amplitude;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = t.mask[i];
    const double inside = (1.0 - a) * x[i] + a * t.pattern[i];
    out[i] = clamp01((1.0 - m) * x[i] + m * inside);
  }
  return out;
}

}  // namespace trapnet
