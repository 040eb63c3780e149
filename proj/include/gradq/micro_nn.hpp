#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradq::nn {

/// Dense row-major tensor.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0) : shape(std::move(s)) {
    values.assign(element_count(shape), fill);
  }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return values.size(); }
  bool valid() const { return values.size() == element_count(shape); }

  double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }
};

inline constexpr std::size_t kKernel = 3;
inline constexpr std::size_t kKernelSize = kKernel * kKernel;
inline constexpr std::size_t kParamCount = 2 * (kKernelSize + 1) + 2 + 1;

/// Flat parameter layout:
///   [0, 9)   filter-1 weights (row-major 3x3)
///   9        filter-1 bias
///   [10, 19) filter-2 weights
///   19       filter-2 bias
///   20, 21   dense weights (feature-1, feature-2)
///   22       dense bias
namespace layout {
inline constexpr std::size_t filter_offset(std::size_t f) { return f * (kKernelSize + 1); }
inline constexpr std::size_t filter_bias(std::size_t f) { return filter_offset(f) + kKernelSize; }
inline constexpr std::size_t dense_weight(std::size_t f) { return 2 * (kKernelSize + 1) + f; }
inline constexpr std::size_t dense_bias = 2 * (kKernelSize + 1) + 2;
}  // namespace layout

/// Ideal horizontal-line (filter-1) and vertical-line (filter-2) detectors.
inline constexpr std::array<double, kKernelSize> kHorizontalTemplate = {-1, -1, -1, 2, 2, 2, -1, -1, -1};
inline constexpr std::array<double, kKernelSize> kVerticalTemplate = {-1, 2, -1, -1, 2, -1, -1, 2, -1};

/// Two parallel 3x3 convolution filters, each followed by global max
/// pooling, feeding a 2 -> 1 dense head.
class LineDetectorModel {
 public:
  LineDetectorModel() : params_(kParamCount, 0.0) {}

  /// Uniform [-scale, scale] per parameter.
  static LineDetectorModel random(std::uint64_t seed, double scale = 0.5) {
    LineDetectorModel m;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& p : m.params_) p = u(rng);
    return m;
  }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::span<double> filter(std::size_t f) { return {params_.data() + layout::filter_offset(f), kKernelSize}; }
  std::span<const double> filter(std::size_t f) const {
    return {params_.data() + layout::filter_offset(f), kKernelSize};
  }
  double& filter_bias(std::size_t f) { return params_[layout::filter_bias(f)]; }
  double& dense_weight(std::size_t f) { return params_[layout::dense_weight(f)]; }
  double& dense_bias() { return params_[layout::dense_bias]; }

 private:
  std::vector<double> params_;
};

/// Images are H x W tensors with values in [0, 1]; label 0 = horizontal
/// line, 1 = vertical line.
struct LineDataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Tensor> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
  std::size_t count(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
  }
};

/// `p` horizontal and `q` vertical single-line images in shuffled order,
/// with optional clipped Gaussian pixel noise.
inline LineDataset generate_lines(std::size_t height, std::size_t width, std::size_t p, std::size_t q,
                                  double noise_std, std::uint64_t seed) {
  if (height < kKernel || width < kKernel)
    throw std::invalid_argument("generate_lines: images must be at least 3x3");
  if (noise_std < 0.0) throw std::invalid_argument("generate_lines: noise_std must be >= 0");
  std::mt19937_64 rng(seed);
  std::vector<int> labels(p, 0);
  labels.insert(labels.end(), q, 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  LineDataset ds;
  ds.height = height;
  ds.width = width;
  std::uniform_int_distribution<std::size_t> row(0, height - 1);
  std::uniform_int_distribution<std::size_t> col(0, width - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int label : labels) {
    Tensor img({height, width});
    if (label == 0) {
      const std::size_t r = row(rng);
      for (std::size_t c = 0; c < width; ++c) img.at(r, c) = 1.0;
    } else {
      const std::size_t c = col(rng);
      for (std::size_t r = 0; r < height; ++r) img.at(r, c) = 1.0;
    }
    if (noise_std > 0.0)
      for (auto& v : img.values) v = std::clamp(v + noise_std * noise(rng), 0.0, 1.0);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

struct ForwardResult {
  double logit = 0.0;
  std::array<double, 2> features{};
  /// Row-major index of the max-pool winner in each response map.
  std::array<std::size_t, 2> argmax{};
};

inline void check_image(const Tensor& image) {
  if (image.shape.size() != 2 || !image.valid())
    throw std::invalid_argument("forward: image must be a valid 2-D tensor");
  if (image.shape[0] < kKernel || image.shape[1] < kKernel)
    throw std::invalid_argument("forward: image must be at least 3x3");
}

/// Valid 3x3 cross-correlation + bias, global max pool (first index on ties)
/// and the dense head.
inline ForwardResult forward(const LineDetectorModel& model, const Tensor& image) {
  check_image(image);
  const auto params = model.params();
  const std::size_t out_h = image.shape[0] - kKernel + 1;
  const std::size_t out_w = image.shape[1] - kKernel + 1;
  ForwardResult res;
  for (std::size_t f = 0; f < 2; ++f) {
    const auto w = model.filter(f);
    const double bias = params[layout::filter_bias(f)];
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t r = 0; r < out_h; ++r)
      for (std::size_t c = 0; c < out_w; ++c) {
        double s = bias;
        for (std::size_t i = 0; i < kKernel; ++i)
          for (std::size_t j = 0; j < kKernel; ++j) s += w[i * kKernel + j] * image.at(r + i, c + j);
        if (s > best) {
          best = s;
          best_idx = r * out_w + c;
        }
      }
    res.features[f] = best;
    res.argmax[f] = best_idx;
  }
  res.logit = params[layout::dense_weight(0)] * res.features[0] + params[layout::dense_weight(1)] * res.features[1] +
              params[layout::dense_bias];
  return res;
}

/// Binary cross-entropy of sigmoid(logit) against label y, computed stably.
inline double bce_with_logit(double logit, int y) {
  const double softplus = logit > 0.0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
  return softplus - static_cast<double>(y) * logit;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Adds scale * d(loss)/d(params) for one sample into `grad`; returns the
/// forward pass.
inline ForwardResult accumulate_grad(const LineDetectorModel& model, const Tensor& image, int label, double scale,
                                     std::span<double> grad, double* loss = nullptr) {
  const auto fw = forward(model, image);
  const auto params = model.params();
  if (loss) *loss = bce_with_logit(fw.logit, label);
  const double dlogit = scale * (sigmoid(fw.logit) - static_cast<double>(label));
  const std::size_t out_w = image.shape[1] - kKernel + 1;
  for (std::size_t f = 0; f < 2; ++f) {
    grad[layout::dense_weight(f)] += dlogit * fw.features[f];
    const double dfeat = dlogit * params[layout::dense_weight(f)];
    const std::size_t r0 = fw.argmax[f] / out_w;
    const std::size_t c0 = fw.argmax[f] % out_w;
    for (std::size_t i = 0; i < kKernel; ++i)
      for (std::size_t j = 0; j < kKernel; ++j)
        grad[layout::filter_offset(f) + i * kKernel + j] += dfeat * image.at(r0 + i, c0 + j);
    grad[layout::filter_bias(f)] += dfeat;
  }
  grad[layout::dense_bias] += dlogit;
  return fw;
}

struct PerSampleResult {
  std::vector<double> losses;
  std::vector<std::vector<double>> grads;
  std::vector<std::vector<double>> features;

  std::size_t size() const { return losses.size(); }
  double mean_loss() const {
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
  }
};

/// Loss, exact gradient and pooled features of every sample in `indices`.
inline PerSampleResult per_sample_grads(const LineDetectorModel& model, const LineDataset& data,
                                        std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("per_sample_grads: empty batch");
  PerSampleResult out;
  out.losses.reserve(indices.size());
  out.grads.reserve(indices.size());
  out.features.reserve(indices.size());
  for (std::size_t idx : indices) {
    std::vector<double> g(kParamCount, 0.0);
    double loss = 0.0;
    const auto fw = accumulate_grad(model, data.images.at(idx), data.labels.at(idx), 1.0, g, &loss);
    out.losses.push_back(loss);
    out.grads.push_back(std::move(g));
    out.features.push_back({fw.features[0], fw.features[1]});
  }
  return out;
}

inline PerSampleResult per_sample_grads(const LineDetectorModel& model, const LineDataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return per_sample_grads(model, data, all);
}

inline double mean_loss(const LineDetectorModel& model, const LineDataset& data, std::span<const std::size_t> indices) {
  double s = 0.0;
  for (std::size_t idx : indices) s += bce_with_logit(forward(model, data.images.at(idx)).logit, data.labels.at(idx));
  return s / static_cast<double>(indices.size());
}

/// Gradient of the mean loss in a single backward sweep.
inline std::vector<double> mean_loss_grad(const LineDetectorModel& model, const LineDataset& data,
                                          std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("mean_loss_grad: empty batch");
  std::vector<double> g(kParamCount, 0.0);
  const double scale = 1.0 / static_cast<double>(indices.size());
  for (std::size_t idx : indices) accumulate_grad(model, data.images.at(idx), data.labels.at(idx), scale, g);
  return g;
}

/// Cosine similarity between a mean-subtracted filter and a template; zero
/// when either has zero norm.
inline double cosine_alignment(std::span<const double> filter, std::span<const double> tmpl) {
  const double fm = std::accumulate(filter.begin(), filter.end(), 0.0) / static_cast<double>(filter.size());
  const double tm = std::accumulate(tmpl.begin(), tmpl.end(), 0.0) / static_cast<double>(tmpl.size());
  double dot = 0.0, nf = 0.0, nt = 0.0;
  for (std::size_t i = 0; i < filter.size(); ++i) {
    const double a = filter[i] - fm;
    const double b = tmpl[i] - tm;
    dot += a * b;
    nf += a * a;
    nt += b * b;
  }
  if (nf == 0.0 || nt == 0.0) return 0.0;
  return dot / std::sqrt(nf * nt);
}

/// Alignment of filter-1 with the horizontal template and filter-2 with the
/// vertical template.
inline std::array<double, 2> template_alignment(const LineDetectorModel& model) {
  return {cosine_alignment(model.filter(0), kHorizontalTemplate), cosine_alignment(model.filter(1), kVerticalTemplate)};
}

// Dataset CSV: a "# lines height=H width=W" line, a header row
// "label,p0,...,pN", then one row per image with pixels in row-major order.

inline void write_dataset_csv(std::ostream& os, const LineDataset& ds) {
  os << "# lines height=" << ds.height << " width=" << ds.width << "\n";
  os << "label";
  for (std::size_t i = 0; i < ds.height * ds.width; ++i) os << ",p" << i;
  os << "\n";
  os << std::setprecision(17);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    os << ds.labels[n];
    for (double v : ds.images[n].values) os << "," << v;
    os << "\n";
  }
}

inline LineDataset read_dataset_csv(std::istream& is) {
  LineDataset ds;
  std::string line;
  if (!std::getline(is, line) || std::sscanf(line.c_str(), "# lines height=%zu width=%zu", &ds.height, &ds.width) != 2)
    throw std::runtime_error("read_dataset_csv: missing '# lines height=H width=W' preamble");
  if (ds.height < kKernel || ds.width < kKernel) throw std::runtime_error("read_dataset_csv: images smaller than 3x3");
  if (!std::getline(is, line) || line.rfind("label", 0) != 0) throw std::runtime_error("read_dataset_csv: missing header");
  const std::size_t pixels = ds.height * ds.width;
  std::size_t lineno = 2;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    if (cells.size() != pixels + 1)
      throw std::runtime_error("read_dataset_csv: line " + std::to_string(lineno) + " has " +
                               std::to_string(cells.size()) + " cells, expected " + std::to_string(pixels + 1));
    const int label = static_cast<int>(cells[0]);
    if (label != 0 && label != 1) throw std::runtime_error("read_dataset_csv: label must be 0 or 1");
    Tensor img({ds.height, ds.width});
    std::copy(cells.begin() + 1, cells.end(), img.values.begin());
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

inline void save_dataset(const std::string& path, const LineDataset& ds) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset_csv(os, ds);
}

inline LineDataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_dataset_csv(is);
}

}  // namespace gradq::nn
