#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "infusenet/error.hpp"
#include "infusenet/rng.hpp"

namespace ifn::nn {

/// Dense row-major tensor of rank 1-4. Image tensors are NCHW.
struct Tensor {
  std::vector<int> dims;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> d, double fill = 0.0);
  Tensor(std::vector<int> d, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(dims.size()); }
  int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(const std::vector<int>& dims);

struct Node {
  Tensor value;
  Tensor grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
};

/// Handle to a value in a computation graph, optionally carrying a gradient.
/// Copies share the underlying node.
class DiffTensor {
 public:
  DiffTensor() = default;
  explicit DiffTensor(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const std::vector<int>& dims() const { return node_->value.dims; }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.data.empty(); }
  /// Gradient buffer; allocated (zeroed) on first access.
  Tensor& grad() const;
  void zero_grad() const { node_->grad = Tensor(); }
  bool defined() const { return static_cast<bool>(node_); }
  const Node* node() const { return node_.get(); }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode tape. Ops append their backward step; `backward` replays
/// them newest first. One tape belongs to one thread.
class Tape {
 public:
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }
  /// Seeds d(root)/d(root) = 1 and propagates. `root` must be a scalar.
  void backward(const DiffTensor& root);
  std::size_t size() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
};

struct Conv2d {
  DiffTensor weight;  // (out, in, k, k)
  DiffTensor bias;    // (out)
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
};

struct Linear {
  DiffTensor weight;  // (out, in)
  DiffTensor bias;    // (out)
  int in_features = 0;
  int out_features = 0;
};

/// Glorot-uniform weights, zero bias.
Conv2d make_conv2d(int in_channels, int out_channels, int kernel, Rng& rng);
Linear make_linear(int in_features, int out_features, Rng& rng);

/// Stride-1 cross-correlation with zero padding k/2 (H x W preserved).
DiffTensor conv2d(Tape& tape, const DiffTensor& x, const Conv2d& layer);
/// max(0, x) followed by 2x2 / stride-2 max pooling; ties go to the first
/// element in row-major window order.
DiffTensor relu_pool(Tape& tape, const DiffTensor& x);
/// x: (N, in) -> (N, out).
DiffTensor linear(Tape& tape, const DiffTensor& x, const Linear& layer);
/// (N, C, H, W) -> (N, C) spatial mean.
DiffTensor global_avg_pool(Tape& tape, const DiffTensor& x);
/// (N, A) ++ (N, B) -> (N, A + B).
DiffTensor concat_features(Tape& tape, const DiffTensor& a, const DiffTensor& b);
/// Per (sample, channel) min-max scaling over the spatial extent. Constant
/// channels map to zero. The backward pass is the exact derivative,
/// including the dependence of min and max on their source elements.
DiffTensor minmax_normalize(Tape& tape, const DiffTensor& x);
/// Elementwise (Hadamard) product.
DiffTensor infuse(Tape& tape, const DiffTensor& features, const DiffTensor& mask);
/// Elementwise a + b (identical dims).
DiffTensor add(Tape& tape, const DiffTensor& a, const DiffTensor& b);
/// Scalar sum(x * weights); used to reduce arbitrary outputs in checks.
DiffTensor weighted_sum(Tape& tape, const DiffTensor& x, const Tensor& weights);

/// Mean over samples and classes of the logistic loss, in the stable form
/// max(z,0) - z*y + log(1 + exp(-|z|)). Labels must be 0/1.
DiffTensor bce_multilabel_loss(Tape& tape, const DiffTensor& logits, const Tensor& labels);
/// Softmax cross-entropy against the label vector normalised to sum 1;
/// mean over samples.
DiffTensor softmax_ce_loss(Tape& tape, const DiffTensor& logits, const Tensor& labels);

double sigmoid(double z);

/// Throws Errc::non_finite naming `where` if any value is NaN or infinite.
void check_finite(const Tensor& t, const char* where);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

using ScalarFn = std::function<DiffTensor(Tape&, std::span<const DiffTensor>)>;

/// Central finite differences of `fn` with respect to every element of every
/// input, compared against the tape gradient. Relative error per element is
/// |a - n| / max(|a|, |n|, 1e-8). `h` must lie in [1e-7, 1e-3]. When
/// `max_elements_per_input` is nonzero, an evenly strided subset is checked.
GradCheckResult grad_check(const ScalarFn& fn, const std::vector<DiffTensor>& inputs, double h,
                           std::size_t max_elements_per_input = 0);

/// Ordered named parameters of a model.
using ParamList = std::vector<std::pair<std::string, DiffTensor>>;

/// Writes one IFNT file per parameter plus index.json mapping name -> {file, dims}.
void save_checkpoint(const ParamList& params, const std::filesystem::path& dir);
/// Reads a checkpoint directory into name -> tensor.
std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& dir);
/// Copies loaded values into `params`; every name and shape must match.
void assign_checkpoint(const ParamList& params, const std::map<std::string, Tensor>& values);

}  // namespace ifn::nn
