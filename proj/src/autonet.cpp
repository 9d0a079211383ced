#include "infusenet/autonet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "infusenet/imaging.hpp"
#include "infusenet/kernels.hpp"

namespace ifn::nn {

namespace {

std::size_t product(const std::vector<int>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

void require_rank(const DiffTensor& x, int rank, const char* op) {
  if (static_cast<int>(x.dims().size()) != rank) {
    throw Error(Errc::dimension_mismatch, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                              shape_string(x.dims()));
  }
}

DiffTensor make_output(Tensor value, std::initializer_list<const DiffTensor*> inputs, const char* op) {
  check_finite(value, op);
  bool grad = false;
  for (const auto* in : inputs) grad = grad || in->requires_grad();
  return DiffTensor(std::move(value), grad);
}

}  // namespace

Tensor::Tensor(std::vector<int> d, double fill) : dims(std::move(d)), data(product(dims), fill) {}

Tensor::Tensor(std::vector<int> d, std::vector<double> values) : dims(std::move(d)), data(std::move(values)) {
  if (data.size() != product(dims)) {
    throw Error(Errc::dimension_mismatch, "tensor data length " + std::to_string(data.size()) + " does not match " +
                                              shape_string(dims));
  }
}

std::string shape_string(const std::vector<int>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + ")";
}

DiffTensor::DiffTensor(Tensor value, bool requires_grad)
    : node_(std::make_shared<Node>(Node{std::move(value), Tensor(), requires_grad})) {}

Tensor& DiffTensor::grad() const {
  if (node_->grad.data.empty()) node_->grad = Tensor(node_->value.dims);
  return node_->grad;
}

void Tape::backward(const DiffTensor& root) {
  if (root.value().size() != 1) throw Error(Errc::invalid_argument, "backward root must be a scalar");
  root.grad().data[0] = 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  steps_.clear();
}

void check_finite(const Tensor& t, const char* where) {
  for (double v : t.data) {
    if (!std::isfinite(v)) throw Error(Errc::non_finite, std::string("non-finite value in ") + where);
  }
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Conv2d make_conv2d(int in_channels, int out_channels, int kernel, Rng& rng) {
  if (kernel % 2 == 0 || kernel < 1 || kernel > 7) throw Error(Errc::invalid_argument, "conv kernel must be odd and at most 7");
  const double limit = std::sqrt(6.0 / ((in_channels + out_channels) * kernel * kernel));
  Tensor w({out_channels, in_channels, kernel, kernel});
  for (auto& v : w.data) v = rng.uniform(-limit, limit);
  return {DiffTensor(std::move(w), true), DiffTensor(Tensor({out_channels}), true), in_channels, out_channels, kernel};
}

Linear make_linear(int in_features, int out_features, Rng& rng) {
  const double limit = std::sqrt(6.0 / (in_features + out_features));
  Tensor w({out_features, in_features});
  for (auto& v : w.data) v = rng.uniform(-limit, limit);
  return {DiffTensor(std::move(w), true), DiffTensor(Tensor({out_features}), true), in_features, out_features};
}

DiffTensor conv2d(Tape& tape, const DiffTensor& x, const Conv2d& layer) {
  require_rank(x, 4, "conv2d");
  const auto& d = x.dims();
  if (d[1] != layer.in_channels) {
    throw Error(Errc::dimension_mismatch, "conv2d: input " + shape_string(d) + " vs " +
                                              std::to_string(layer.in_channels) + " channels");
  }
  const kernels::ConvShape s{d[0], layer.in_channels, layer.out_channels, d[2], d[3], layer.kernel};
  Tensor y({d[0], layer.out_channels, d[2], d[3]});
  kernels::omp::conv2d_forward(s, x.value().data, layer.weight.value().data, layer.bias.value().data, y.data);
  DiffTensor out = make_output(std::move(y), {&x, &layer.weight, &layer.bias}, "conv2d");
  if (!out.requires_grad()) return out;
  tape.record([s, x, w = layer.weight, b = layer.bias, out] {
    if (!out.has_grad()) return;
    const auto& gy = out.grad().data;
    if (x.requires_grad()) kernels::omp::conv2d_backward_input(s, w.value().data, gy, x.grad().data);
    if (w.requires_grad() || b.requires_grad()) {
      kernels::omp::conv2d_backward_weight(s, x.value().data, gy, w.grad().data, b.grad().data);
    }
  });
  return out;
}

DiffTensor relu_pool(Tape& tape, const DiffTensor& x) {
  require_rank(x, 4, "relu_pool");
  const auto& d = x.dims();
  const int n = d[0], c = d[1], h = d[2], w = d[3];
  if (h % 2 != 0 || w % 2 != 0) throw Error(Errc::dimension_mismatch, "relu_pool: odd spatial dims " + shape_string(d));
  const int oh = h / 2, ow = w / 2;
  Tensor y({n, c, oh, ow});
  std::vector<std::int64_t> route(y.size(), -1);  // source index, -1 when the output was clamped to 0
  const auto& xv = x.value().data;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t in0 = static_cast<std::size_t>(p) * h * w;
    const std::size_t out0 = static_cast<std::size_t>(p) * oh * ow;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        std::size_t best = in0 + static_cast<std::size_t>(2 * i) * w + 2 * j;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t k = in0 + static_cast<std::size_t>(2 * i + dy) * w + 2 * j + dx;
            if (xv[k] > xv[best]) best = k;
          }
        }
        const std::size_t o = out0 + static_cast<std::size_t>(i) * ow + j;
        if (xv[best] > 0.0) {
          y.data[o] = xv[best];
          route[o] = static_cast<std::int64_t>(best);
        }
      }
    }
  }
  DiffTensor out = make_output(std::move(y), {&x}, "relu_pool");
  if (!out.requires_grad()) return out;
  tape.record([x, out, route = std::move(route)] {
    if (!out.has_grad()) return;
    const auto& gy = out.grad().data;
    auto& gx = x.grad().data;
    for (std::size_t o = 0; o < route.size(); ++o) {
      if (route[o] >= 0) gx[static_cast<std::size_t>(route[o])] += gy[o];
    }
  });
  return out;
}

DiffTensor linear(Tape& tape, const DiffTensor& x, const Linear& layer) {
  require_rank(x, 2, "linear");
  const int n = x.dims()[0], in = x.dims()[1];
  if (in != layer.in_features) {
    throw Error(Errc::dimension_mismatch, "linear: input " + shape_string(x.dims()) + " vs " +
                                              std::to_string(layer.in_features) + " features");
  }
  const int outf = layer.out_features;
  const auto& xv = x.value().data;
  const auto& wv = layer.weight.value().data;
  const auto& bv = layer.bias.value().data;
  Tensor y({n, outf});
  for (int s = 0; s < n; ++s) {
    for (int o = 0; o < outf; ++o) {
      double acc = bv[static_cast<std::size_t>(o)];
      for (int i = 0; i < in; ++i) acc += wv[static_cast<std::size_t>(o) * in + i] * xv[static_cast<std::size_t>(s) * in + i];
      y.data[static_cast<std::size_t>(s) * outf + o] = acc;
    }
  }
  DiffTensor out = make_output(std::move(y), {&x, &layer.weight, &layer.bias}, "linear");
  if (!out.requires_grad()) return out;
  tape.record([x, w = layer.weight, b = layer.bias, out, n, in, outf] {
    if (!out.has_grad()) return;
    const auto& gy = out.grad().data;
    const auto& xv = x.value().data;
    const auto& wv = w.value().data;
    if (x.requires_grad()) {
      auto& gx = x.grad().data;
      for (int s = 0; s < n; ++s) {
        for (int o = 0; o < outf; ++o) {
          const double g = gy[static_cast<std::size_t>(s) * outf + o];
          for (int i = 0; i < in; ++i) gx[static_cast<std::size_t>(s) * in + i] += wv[static_cast<std::size_t>(o) * in + i] * g;
        }
      }
    }
    if (w.requires_grad()) {
      auto& gw = w.grad().data;
      for (int s = 0; s < n; ++s) {
        for (int o = 0; o < outf; ++o) {
          const double g = gy[static_cast<std::size_t>(s) * outf + o];
          for (int i = 0; i < in; ++i) gw[static_cast<std::size_t>(o) * in + i] += g * xv[static_cast<std::size_t>(s) * in + i];
        }
      }
    }
    if (b.requires_grad()) {
      auto& gb = b.grad().data;
      for (int s = 0; s < n; ++s) {
        for (int o = 0; o < outf; ++o) gb[static_cast<std::size_t>(o)] += gy[static_cast<std::size_t>(s) * outf + o];
      }
    }
  });
  return out;
}

DiffTensor global_avg_pool(Tape& tape, const DiffTensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const auto& d = x.dims();
  const int planes = d[0] * d[1];
  const std::size_t area = static_cast<std::size_t>(d[2]) * d[3];
  Tensor y({d[0], d[1]});
  const auto& xv = x.value().data;
  for (int p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < area; ++k) acc += xv[p * area + k];
    y.data[static_cast<std::size_t>(p)] = acc / static_cast<double>(area);
  }
  DiffTensor out = make_output(std::move(y), {&x}, "global_avg_pool");
  if (!out.requires_grad()) return out;
  tape.record([x, out, planes, area] {
    if (!out.has_grad()) return;
    const auto& gy = out.grad().data;
    auto& gx = x.grad().data;
    for (int p = 0; p < planes; ++p) {
      const double g = gy[static_cast<std::size_t>(p)] / static_cast<double>(area);
      for (std::size_t k = 0; k < area; ++k) gx[p * area + k] += g;
    }
  });
  return out;
}

DiffTensor concat_features(Tape& tape, const DiffTensor& a, const DiffTensor& b) {
  require_rank(a, 2, "concat_features");
  require_rank(b, 2, "concat_features");
  if (a.dims()[0] != b.dims()[0]) throw Error(Errc::dimension_mismatch, "concat_features: batch sizes differ");
  const int n = a.dims()[0], fa = a.dims()[1], fb = b.dims()[1];
  Tensor y({n, fa + fb});
  for (int s = 0; s < n; ++s) {
    std::copy_n(a.value().data.begin() + static_cast<std::ptrdiff_t>(s) * fa, fa,
                y.data.begin() + static_cast<std::ptrdiff_t>(s) * (fa + fb));
    std::copy_n(b.value().data.begin() + static_cast<std::ptrdiff_t>(s) * fb, fb,
                y.data.begin() + static_cast<std::ptrdiff_t>(s) * (fa + fb) + fa);
  }
  DiffTensor out = make_output(std::move(y), {&a, &b}, "concat_features");
  if (!out.requires_grad()) return out;
  tape.record([a, b, out, n, fa, fb] {
    if (!out.has_grad()) return;
    const auto& gy = out.grad().data;
    for (int s = 0; s < n; ++s) {
      if (a.requires_grad()) {
        for (int i = 0; i < fa; ++i) a.grad().data[static_cast<std::size_t>(s) * fa + i] += gy[static_cast<std::size_t>(s) * (fa + fb) + i];
      }
      if (b.requires_grad()) {
        for (int i = 0; i < fb; ++i) b.grad().data[static_cast<std::size_t>(s) * fb + i] += gy[static_cast<std::size_t>(s) * (fa + fb) + fa + i];
      }
    }
  });
  return out;
}

DiffTensor minmax_normalize(Tape& tape, const DiffTensor& x) {
  require_rank(x, 4, "minmax_normalize");
  const auto& d = x.dims();
  const int planes = d[0] * d[1];
  const std::size_t area = static_cast<std::size_t>(d[2]) * d[3];
  const auto& xv = x.value().data;
  Tensor y(d);
  // Per plane: index of the (first) minimum and maximum, and the range.
  std::vector<std::size_t> argmin(static_cast<std::size_t>(planes)), argmax(static_cast<std::size_t>(planes));
  std::vector<double> range(static_cast<std::size_t>(planes));
  for (int p = 0; p < planes; ++p) {
    const std::size_t base = p * area;
    std::size_t lo = base, hi = base;
    for (std::size_t k = base; k < base + area; ++k) {
      if (xv[k] < xv[lo]) lo = k;
      if (xv[k] > xv[hi]) hi = k;
    }
    const double r = xv[hi] - xv[lo];
    argmin[static_cast<std::size_t>(p)] = lo;
    argmax[static_cast<std::size_t>(p)] = hi;
    range[static_cast<std::size_t>(p)] = r;
    if (r > 0.0) {
      const double mn = xv[lo];
      for (std::size_t k = base; k < base + area; ++k) y.data[k] = std::clamp((xv[k] - mn) / r, 0.0, 1.0);
    }
  }
  DiffTensor out = make_output(std::move(y), {&x}, "minmax_normalize");
  if (!out.requires_grad()) return out;
  tape.record([x, out, planes, area, argmin = std::move(argmin), argmax = std::move(argmax),
               range = std::move(range)] {
    if (!out.has_grad()) return;
    const auto& gy = out.grad().data;
    const auto& yv = out.value().data;
    auto& gx = x.grad().data;
    for (int p = 0; p < planes; ++p) {
      const double r = range[static_cast<std::size_t>(p)];
      if (!(r > 0.0)) continue;
      const std::size_t base = p * area;
      // y_k = (x_k - min) / r: direct term plus the dependence of min and max on their source elements.
      double sum_g = 0.0, sum_gy = 0.0;
      for (std::size_t k = base; k < base + area; ++k) {
        gx[k] += gy[k] / r;
        sum_g += gy[k];
        sum_gy += gy[k] * yv[k];
      }
      gx[argmin[static_cast<std::size_t>(p)]] += (sum_gy - sum_g) / r;
      gx[argmax[static_cast<std::size_t>(p)]] -= sum_gy / r;
    }
  });
  return out;
}

DiffTensor infuse(Tape& tape, const DiffTensor& features, const DiffTensor& mask) {
  if (features.dims() != mask.dims()) {
    throw Error(Errc::dimension_mismatch, "infuse: features " + shape_string(features.dims()) + " vs mask " +
                                              shape_string(mask.dims()));
  }
  Tensor y(features.dims());
  const auto& f = features.value().data;
  const auto& a = mask.value().data;
  for (std::size_t k = 0; k < y.size(); ++k) y.data[k] = f[k] * a[k];
  DiffTensor out = make_output(std::move(y), {&features, &mask}, "infuse");
  if (!out.requires_grad()) return out;
  tape.record([features, mask, out] {
    if (!out.has_grad()) return;
    const auto& gy = out.grad().data;
    if (features.requires_grad()) {
      auto& gf = features.grad().data;
      const auto& a = mask.value().data;
      for (std::size_t k = 0; k < gy.size(); ++k) gf[k] += gy[k] * a[k];
    }
    if (mask.requires_grad()) {
      auto& ga = mask.grad().data;
      const auto& f = features.value().data;
      for (std::size_t k = 0; k < gy.size(); ++k) ga[k] += gy[k] * f[k];
    }
  });
  return out;
}

DiffTensor add(Tape& tape, const DiffTensor& a, const DiffTensor& b) {
  if (a.dims() != b.dims()) {
    throw Error(Errc::dimension_mismatch, "add: " + shape_string(a.dims()) + " vs " + shape_string(b.dims()));
  }
  Tensor y(a.dims());
  for (std::size_t k = 0; k < y.size(); ++k) y.data[k] = a.value().data[k] + b.value().data[k];
  DiffTensor out = make_output(std::move(y), {&a, &b}, "add");
  if (!out.requires_grad()) return out;
  tape.record([a, b, out] {
    if (!out.has_grad()) return;
    const auto& gy = out.grad().data;
    for (const auto* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto& g = t->grad().data;
      for (std::size_t k = 0; k < gy.size(); ++k) g[k] += gy[k];
    }
  });
  return out;
}

DiffTensor weighted_sum(Tape& tape, const DiffTensor& x, const Tensor& weights) {
  if (weights.size() != x.value().size()) throw Error(Errc::dimension_mismatch, "weighted_sum: weight count mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) acc += x.value().data[k] * weights.data[k];
  DiffTensor out = make_output(Tensor({1}, {acc}), {&x}, "weighted_sum");
  if (!out.requires_grad()) return out;
  tape.record([x, out, weights] {
    if (!out.has_grad()) return;
    const double g = out.grad().data[0];
    auto& gx = x.grad().data;
    for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += g * weights.data[k];
  });
  return out;
}

namespace {

void check_labels(const DiffTensor& logits, const Tensor& labels, const char* op) {
  require_rank(logits, 2, op);
  if (labels.dims != logits.dims()) {
    throw Error(Errc::dimension_mismatch, std::string(op) + ": labels " + shape_string(labels.dims) + " vs logits " +
                                              shape_string(logits.dims()));
  }
  for (double y : labels.data) {
    if (y != 0.0 && y != 1.0) throw Error(Errc::invalid_argument, std::string(op) + ": labels must be 0 or 1");
  }
}

}  // namespace

DiffTensor bce_multilabel_loss(Tape& tape, const DiffTensor& logits, const Tensor& labels) {
  check_labels(logits, labels, "bce_multilabel_loss");
  const auto& z = logits.value().data;
  const double scale = 1.0 / static_cast<double>(z.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    acc += std::max(z[k], 0.0) - z[k] * labels.data[k] + std::log1p(std::exp(-std::abs(z[k])));
  }
  DiffTensor out = make_output(Tensor({1}, {acc * scale}), {&logits}, "bce_multilabel_loss");
  if (!out.requires_grad()) return out;
  tape.record([logits, labels, out, scale] {
    if (!out.has_grad()) return;
    const double g = out.grad().data[0] * scale;
    const auto& z = logits.value().data;
    auto& gz = logits.grad().data;
    for (std::size_t k = 0; k < z.size(); ++k) gz[k] += g * (sigmoid(z[k]) - labels.data[k]);
  });
  return out;
}

DiffTensor softmax_ce_loss(Tape& tape, const DiffTensor& logits, const Tensor& labels) {
  check_labels(logits, labels, "softmax_ce_loss");
  const int n = logits.dims()[0], k = logits.dims()[1];
  const auto& z = logits.value().data;
  std::vector<double> prob(z.size()), target(z.size());
  double acc = 0.0;
  for (int s = 0; s < n; ++s) {
    const std::size_t row = static_cast<std::size_t>(s) * k;
    double total = 0.0;
    for (int c = 0; c < k; ++c) total += labels.data[row + c];
    if (total == 0.0) throw Error(Errc::invalid_argument, "softmax_ce_loss: sample without positive label");
    const double zmax = *std::max_element(z.begin() + static_cast<std::ptrdiff_t>(row), z.begin() + static_cast<std::ptrdiff_t>(row + k));
    double denom = 0.0;
    for (int c = 0; c < k; ++c) denom += std::exp(z[row + c] - zmax);
    const double lse = zmax + std::log(denom);
    for (int c = 0; c < k; ++c) {
      prob[row + c] = std::exp(z[row + c] - lse);
      target[row + c] = labels.data[row + c] / total;
      acc += target[row + c] * (lse - z[row + c]);
    }
  }
  const double scale = 1.0 / n;
  DiffTensor out = make_output(Tensor({1}, {acc * scale}), {&logits}, "softmax_ce_loss");
  if (!out.requires_grad()) return out;
  tape.record([logits, out, prob = std::move(prob), target = std::move(target), scale] {
    if (!out.has_grad()) return;
    const double g = out.grad().data[0] * scale;
    auto& gz = logits.grad().data;
    for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += g * (prob[i] - target[i]);
  });
  return out;
}

GradCheckResult grad_check(const ScalarFn& fn, const std::vector<DiffTensor>& inputs, double h,
                           std::size_t max_elements_per_input) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw Error(Errc::invalid_argument, "grad_check step must lie in [1e-7, 1e-3]");
  std::vector<DiffTensor> args = inputs;
  for (auto& a : args) a.zero_grad();

  std::vector<Tensor> analytic;
  {
    Tape tape;
    const DiffTensor out = fn(tape, args);
    if (out.value().size() != 1) throw Error(Errc::invalid_argument, "grad_check function must return a scalar");
    tape.backward(out);
    for (auto& a : args) analytic.push_back(a.has_grad() ? a.grad() : Tensor(a.dims()));
  }

  const auto evaluate = [&]() -> long double {
    Tape scratch;
    const double v = fn(scratch, args).value().data[0];
    if (!std::isfinite(v)) throw Error(Errc::non_finite, "grad_check: non-finite function value");
    return v;
  };

  GradCheckResult result;
  for (std::size_t k = 0; k < args.size(); ++k) {
    auto& values = args[k].mutable_value().data;
    const std::size_t n = values.size();
    const std::size_t stride = (max_elements_per_input && n > max_elements_per_input) ? n / max_elements_per_input : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = values[i];
      values[i] = orig + h;
      const long double fp = evaluate();
      values[i] = orig - h;
      const long double fm = evaluate();
      values[i] = orig;
      const long double numeric = (fp - fm) / (2.0L * h);
      const long double a = analytic[k].data[i];
      const long double denom = std::max({std::abs(a), std::abs(numeric), 1e-8L});
      result.max_rel_error = std::max(result.max_rel_error, static_cast<double>(std::abs(a - numeric) / denom));
      ++result.checked;
    }
  }
  for (auto& a : args) a.zero_grad();
  return result;
}

void save_checkpoint(const ParamList& params, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error(Errc::unwritable_path, dir.string());
  nlohmann::json index = nlohmann::json::object();
  for (const auto& [name, p] : params) {
    const std::string file = name + ".ifnt";
    std::vector<std::uint32_t> dims(p.dims().begin(), p.dims().end());
    store_tensor(to_tensor_file(dims, p.value().data), dir / file);
    index[name] = {{"file", file}, {"dims", p.dims()}};
  }
  std::ofstream out(dir / "index.json");
  if (!out) throw Error(Errc::unwritable_path, (dir / "index.json").string());
  out << index.dump(2) << '\n';
}

std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw Error(Errc::missing_prerequisite, "no checkpoint index in " + dir.string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::parse_error, (dir / "index.json").string() + ": " + e.what());
  }
  std::map<std::string, Tensor> values;
  for (const auto& [name, entry] : index.items()) {
    const TensorFile t = load_tensor(dir / entry.at("file").get<std::string>());
    const auto dims = entry.at("dims").get<std::vector<int>>();
    if (dims.size() != t.dims.size() || !std::equal(dims.begin(), dims.end(), t.dims.begin(),
                                                    [](int a, std::uint32_t b) { return static_cast<std::uint32_t>(a) == b; })) {
      throw Error(Errc::structure_mismatch, "checkpoint entry " + name + " disagrees with its index dims");
    }
    values.emplace(name, Tensor(dims, std::vector<double>(t.data.begin(), t.data.end())));
  }
  return values;
}

void assign_checkpoint(const ParamList& params, const std::map<std::string, Tensor>& values) {
  if (params.size() != values.size()) {
    throw Error(Errc::structure_mismatch, "checkpoint holds " + std::to_string(values.size()) + " tensors, model has " +
                                              std::to_string(params.size()));
  }
  for (const auto& [name, p] : params) {
    const auto it = values.find(name);
    if (it == values.end()) throw Error(Errc::structure_mismatch, "checkpoint lacks " + name);
    if (it->second.dims != p.dims()) throw Error(Errc::structure_mismatch, "checkpoint shape mismatch for " + name);
    check_finite(it->second, name.c_str());
    DiffTensor(p).mutable_value() = it->second;
  }
}

}  // namespace ifn::nn
