#pragma once

// A small, deterministic CNN training engine: plain conv/relu/pool/dense
// stacks ending in softmax cross-entropy, trained by SGD. Samples are
// processed one at a time and gradients are summed in a fixed order, so a
// fixed seed and data order always produce bit-identical weights.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deeptwist/tensor.hpp"

namespace deeptwist {

enum class LayerKind : std::uint8_t {
  conv2d = 1,
  relu = 2,
  maxpool = 3,
  global_avg_pool = 4,
  dense = 5,
  softmax_xent = 6,
};

const char* to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  // conv2d: d, in (S), out (T), stride, padding. dense: in, out.
  // maxpool: pool (window == stride).
  std::size_t d = 0;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t pool = 0;
  bool bias = false;

  static LayerSpec conv2d(std::string name, std::size_t d, std::size_t in, std::size_t out,
                          std::size_t stride = 1, std::size_t padding = 0, bool bias = true);
  static LayerSpec relu(std::string name);
  static LayerSpec maxpool(std::string name, std::size_t k);
  static LayerSpec global_avg_pool(std::string name);
  static LayerSpec dense(std::string name, std::size_t in, std::size_t out, bool bias = true);
  static LayerSpec softmax_xent(std::string name);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
  LayerSpec spec;
  Kernel4 kernel;            // conv2d
  Matrix weights;            // dense, out × in
  std::vector<double> bias;  // conv2d (T) or dense (out), when spec.bias

  /// Number of trainable scalars in this layer.
  std::size_t parameter_count() const;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct ModelState {
  Shape input_shape;  // [C, H, W]
  std::vector<Layer> layers;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;

  std::size_t num_classes() const;
  std::size_t parameter_count() const;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Checks that the layer specs chain from `input_shape` and end in
/// softmax_xent; returns the per-layer output shapes. Throws ArgumentError.
std::vector<Shape> infer_shapes(const Shape& input_shape, const std::vector<LayerSpec>& specs);

/// He-normal weights (std = sqrt(2 / fan_in)) drawn from a generator seeded
/// with `seed`; biases start at zero.
ModelState init_model(Shape input_shape, std::vector<LayerSpec> specs, std::uint64_t seed);

/// Two 3×3 conv layers, a 2×2 max-pool and a dense classifier.
std::vector<LayerSpec> toy_cnn(std::size_t channels, std::size_t image_size, std::size_t classes,
                               std::size_t width1 = 16, std::size_t width2 = 16);

/// Labelled images stored contiguously, each of shape `image_shape`.
struct Dataset {
  Shape image_shape;
  std::size_t num_classes = 0;
  std::vector<double> pixels;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_size() const { return shape_size(image_shape); }
  std::span<const double> image(std::size_t i) const {
    return {pixels.data() + i * image_size(), image_size()};
  }
  /// Subset in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct ForwardResult {
  std::vector<std::vector<double>> logits;
  double loss = 0.0;      // mean cross-entropy
  double accuracy = 0.0;  // fraction of argmax hits
};

/// Forward pass over `indices` of `data`. Throws ArgumentError on shape
/// mismatch and NumericalError if the loss is not finite.
ForwardResult forward(const ModelState& model, const Dataset& data,
                      std::span<const std::size_t> indices);

/// Logits of a single image of shape model.input_shape.
std::vector<double> predict(const ModelState& model, std::span<const double> image);

/// Parameter gradients laid out like ModelState::layers.
struct LayerGrad {
  std::vector<double> weights;  // kernel (Kernel4 flat order) or dense (row-major)
  std::vector<double> bias;
};

struct Gradients {
  std::vector<LayerGrad> layers;
  double loss = 0.0;
};

/// Mean loss over the batch and its gradient with respect to every weight.
Gradients loss_and_gradients(const ModelState& model, const Dataset& data,
                             std::span<const std::size_t> indices);

/// SGD, optionally with classical momentum: v ← μ·v + g, w ← w − lr·v.
/// With momentum 0 this is exactly w ← w − lr·g. Weight decay λ adds λ·w to
/// the gradient of conv and dense weights (not biases).
class SgdOptimizer {
 public:
  explicit SgdOptimizer(double momentum = 0.0, double weight_decay = 0.0)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  double momentum() const noexcept { return momentum_; }
  double weight_decay() const noexcept { return weight_decay_; }
  void apply(ModelState& model, const Gradients& grads, double lr);
  void reset() { velocity_.clear(); }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<LayerGrad> velocity_;
};

/// One SGD step on the batch; returns the pre-update batch loss.
/// Throws NumericalError (model untouched) if any gradient is not finite.
double backward_and_step(ModelState& model, const Dataset& data,
                         std::span<const std::size_t> indices, double lr, SgdOptimizer& optimizer);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean loss and accuracy over the whole dataset. Empty data → ArgumentError.
Evaluation evaluate(const ModelState& model, const Dataset& data);

/// Epoch-indexed piecewise-constant learning rate.
class LrSchedule {
 public:
  struct Segment {
    std::size_t epochs = 1;
    double rate = 0.1;
  };

  LrSchedule() = default;
  explicit LrSchedule(std::vector<Segment> segments);

  /// Rate for a 0-based epoch; past the end the last rate holds.
  double rate_at_epoch(std::size_t epoch) const;
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::size_t total_epochs() const;

  /// "0.1:100,0.01:50" — rate:epochs pairs.
  static LrSchedule parse(const std::string& text);
  std::string to_string() const;

 private:
  std::vector<Segment> segments_{{1, 0.1}};
};

}  // namespace deeptwist
