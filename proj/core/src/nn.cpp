#include "deeptwist/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "deeptwist/errors.hpp"

namespace deeptwist {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax_xent: return "softmax_xent";
  }
  return "unknown";
}

// ------------------------------------------------------------ LayerSpec

LayerSpec LayerSpec::conv2d(std::string name, std::size_t d, std::size_t in, std::size_t out,
                            std::size_t stride, std::size_t padding, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.name = std::move(name);
  s.d = d;
  s.in = in;
  s.out = out;
  s.stride = stride;
  s.padding = padding;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::relu;
  s.name = std::move(name);
  return s;
}

LayerSpec LayerSpec::maxpool(std::string name, std::size_t k) {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.name = std::move(name);
  s.pool = k;
  return s;
}

LayerSpec LayerSpec::global_avg_pool(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::global_avg_pool;
  s.name = std::move(name);
  return s;
}

LayerSpec LayerSpec::dense(std::string name, std::size_t in, std::size_t out, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.name = std::move(name);
  s.in = in;
  s.out = out;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::softmax_xent(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::softmax_xent;
  s.name = std::move(name);
  return s;
}

std::size_t Layer::parameter_count() const {
  switch (spec.kind) {
    case LayerKind::conv2d: return kernel.tensor().size() + bias.size();
    case LayerKind::dense: return weights.size() + bias.size();
    default: return 0;
  }
}

std::size_t ModelState::num_classes() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it)
    if (it->spec.kind == LayerKind::dense) return it->spec.out;
  return 0;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

// --------------------------------------------------------- shape checks

std::vector<Shape> infer_shapes(const Shape& input_shape, const std::vector<LayerSpec>& specs) {
  if (specs.empty() || specs.back().kind != LayerKind::softmax_xent) {
    throw ArgumentError("model must end with a softmax_xent layer");
  }
  std::set<std::string> names;
  std::vector<Shape> shapes;
  Shape cur = input_shape;
  for (std::size_t li = 0; li < specs.size(); ++li) {
    const auto& s = specs[li];
    const std::string where = "layer '" + s.name + "': ";
    if (!names.insert(s.name).second) throw ArgumentError(where + "duplicate layer name");
    switch (s.kind) {
      case LayerKind::conv2d: {
        if (cur.size() != 3 || cur[0] != s.in) throw ArgumentError(where + "input channels mismatch");
        if (s.d == 0 || s.out == 0 || s.stride == 0) throw ArgumentError(where + "bad conv geometry");
        if (cur[1] + 2 * s.padding < s.d || cur[2] + 2 * s.padding < s.d) {
          throw ArgumentError(where + "kernel larger than padded input");
        }
        cur = {s.out, (cur[1] + 2 * s.padding - s.d) / s.stride + 1,
               (cur[2] + 2 * s.padding - s.d) / s.stride + 1};
        break;
      }
      case LayerKind::relu: break;
      case LayerKind::maxpool:
        if (cur.size() != 3 || s.pool == 0 || cur[1] < s.pool || cur[2] < s.pool) {
          throw ArgumentError(where + "bad pooling window");
        }
        cur = {cur[0], cur[1] / s.pool, cur[2] / s.pool};
        break;
      case LayerKind::global_avg_pool:
        if (cur.size() != 3) throw ArgumentError(where + "expects [C,H,W] input");
        cur = {cur[0]};
        break;
      case LayerKind::dense:
        if (shape_size(cur) != s.in || s.out == 0) throw ArgumentError(where + "input size mismatch");
        cur = {s.out};
        break;
      case LayerKind::softmax_xent:
        if (li + 1 != specs.size()) throw ArgumentError(where + "softmax_xent must be last");
        if (cur.size() != 1 || cur[0] < 2) throw ArgumentError(where + "expects a logit vector");
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

ModelState init_model(Shape input_shape, std::vector<LayerSpec> specs, std::uint64_t seed) {
  infer_shapes(input_shape, specs);
  ModelState model;
  model.input_shape = std::move(input_shape);
  model.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& spec : specs) {
    Layer layer;
    layer.spec = std::move(spec);
    const auto& s = layer.spec;
    if (s.kind == LayerKind::conv2d) {
      layer.kernel = Kernel4(s.d, s.in, s.out);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(s.d * s.d * s.in)));
      for (auto& w : layer.kernel.tensor().data()) w = dist(rng);
      if (s.bias) layer.bias.assign(s.out, 0.0);
    } else if (s.kind == LayerKind::dense) {
      layer.weights = Matrix(s.out, s.in);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(s.in)));
      for (auto& w : layer.weights.data()) w = dist(rng);
      if (s.bias) layer.bias.assign(s.out, 0.0);
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

std::vector<LayerSpec> toy_cnn(std::size_t channels, std::size_t image_size, std::size_t classes,
                               std::size_t width1, std::size_t width2) {
  const std::size_t pooled = image_size / 2;
  return {LayerSpec::conv2d("conv1", 3, channels, width1, 1, 1),
          LayerSpec::relu("relu1"),
          LayerSpec::conv2d("conv2", 3, width1, width2, 1, 1),
          LayerSpec::relu("relu2"),
          LayerSpec::maxpool("pool", 2),
          LayerSpec::dense("fc", width2 * pooled * pooled, classes),
          LayerSpec::softmax_xent("loss")};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out{image_shape, num_classes, {}, {}};
  out.pixels.reserve(indices.size() * image_size());
  for (auto i : indices) {
    if (i >= size()) throw ArgumentError("Dataset::subset: index out of range");
    auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

// ------------------------------------------------------- layer kernels

namespace {

using Vec = std::vector<double>;

void conv_forward(const Layer& layer, const Shape& in_shape, const Shape& out_shape, const Vec& in,
                  Vec& out) {
  const auto& s = layer.spec;
  const std::size_t S = in_shape[0], H = in_shape[1], W = in_shape[2];
  const std::size_t T = out_shape[0], Ho = out_shape[1], Wo = out_shape[2];
  const std::size_t d = s.d;
  // Accumulate position-major (t fastest) to walk the kernel contiguously.
  Vec tmp(Ho * Wo * T, 0.0);
  const double* kbase = layer.kernel.tensor().data().data();
  for (std::size_t y = 0; y < Ho; ++y)
    for (std::size_t x = 0; x < Wo; ++x) {
      double* acc = tmp.data() + (y * Wo + x) * T;
      if (s.bias) std::copy(layer.bias.begin(), layer.bias.end(), acc);
      for (std::size_t i = 0; i < d; ++i) {
        const long iy = static_cast<long>(y * s.stride + i) - static_cast<long>(s.padding);
        if (iy < 0 || iy >= static_cast<long>(H)) continue;
        for (std::size_t j = 0; j < d; ++j) {
          const long ix = static_cast<long>(x * s.stride + j) - static_cast<long>(s.padding);
          if (ix < 0 || ix >= static_cast<long>(W)) continue;
          for (std::size_t c = 0; c < S; ++c) {
            const double v = in[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)];
            const double* kp = kbase + ((i * d + j) * S + c) * T;
            for (std::size_t t = 0; t < T; ++t) acc[t] += kp[t] * v;
          }
        }
      }
    }
  out.assign(T * Ho * Wo, 0.0);
  for (std::size_t p = 0; p < Ho * Wo; ++p)
    for (std::size_t t = 0; t < T; ++t) out[t * Ho * Wo + p] = tmp[p * T + t];
}

void conv_backward(const Layer& layer, const Shape& in_shape, const Shape& out_shape, const Vec& in,
                   const Vec& gout, Vec& gin, LayerGrad& grad) {
  const auto& s = layer.spec;
  const std::size_t S = in_shape[0], H = in_shape[1], W = in_shape[2];
  const std::size_t T = out_shape[0], Ho = out_shape[1], Wo = out_shape[2];
  const std::size_t d = s.d;
  Vec gt(Ho * Wo * T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t p = 0; p < Ho * Wo; ++p) gt[p * T + t] = gout[t * Ho * Wo + p];
  gin.assign(S * H * W, 0.0);
  const double* kbase = layer.kernel.tensor().data().data();
  for (std::size_t y = 0; y < Ho; ++y)
    for (std::size_t x = 0; x < Wo; ++x) {
      const double* g = gt.data() + (y * Wo + x) * T;
      if (s.bias)
        for (std::size_t t = 0; t < T; ++t) grad.bias[t] += g[t];
      for (std::size_t i = 0; i < d; ++i) {
        const long iy = static_cast<long>(y * s.stride + i) - static_cast<long>(s.padding);
        if (iy < 0 || iy >= static_cast<long>(H)) continue;
        for (std::size_t j = 0; j < d; ++j) {
          const long ix = static_cast<long>(x * s.stride + j) - static_cast<long>(s.padding);
          if (ix < 0 || ix >= static_cast<long>(W)) continue;
          for (std::size_t c = 0; c < S; ++c) {
            const std::size_t in_at = (c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix);
            const double v = in[in_at];
            const std::size_t koff = ((i * d + j) * S + c) * T;
            const double* kp = kbase + koff;
            double* gk = grad.weights.data() + koff;
            double back = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
              gk[t] += g[t] * v;
              back += kp[t] * g[t];
            }
            gin[in_at] += back;
          }
        }
      }
    }
}

void maxpool_forward(std::size_t k, const Shape& in_shape, const Shape& out_shape, const Vec& in,
                     Vec& out, std::vector<std::size_t>& argmax) {
  const std::size_t C = in_shape[0], H = in_shape[1], W = in_shape[2];
  const std::size_t Ho = out_shape[1], Wo = out_shape[2];
  out.assign(C * Ho * Wo, 0.0);
  argmax.assign(out.size(), 0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t x = 0; x < Wo; ++x) {
        std::size_t best = (c * H + y * k) * W + x * k;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t at = (c * H + y * k + i) * W + x * k + j;
            if (in[at] > in[best]) best = at;
          }
        const std::size_t o = (c * Ho + y) * Wo + x;
        out[o] = in[best];
        argmax[o] = best;
      }
}

void softmax(std::span<const double> logits, Vec& probs, double& log_norm) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  probs.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - peak);
    z += probs[k];
  }
  for (auto& p : probs) p /= z;
  log_norm = peak + std::log(z);
}

std::size_t argmax_of(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Activations of one sample through every layer except the loss.
struct Trace {
  std::vector<Vec> acts;  // acts[l] is the input of layer l
  std::vector<std::vector<std::size_t>> argmax;
};

Trace run_forward(const ModelState& model, const std::vector<Shape>& shapes, std::span<const double> image) {
  Trace tr;
  const std::size_t L = model.layers.size();
  tr.acts.resize(L);
  tr.argmax.resize(L);
  tr.acts[0].assign(image.begin(), image.end());
  for (std::size_t l = 0; l + 1 < L; ++l) {
    const auto& layer = model.layers[l];
    const Shape& in_shape = l == 0 ? model.input_shape : shapes[l - 1];
    const Vec& in = tr.acts[l];
    Vec& out = tr.acts[l + 1];
    switch (layer.spec.kind) {
      case LayerKind::conv2d: conv_forward(layer, in_shape, shapes[l], in, out); break;
      case LayerKind::relu:
        out.resize(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        break;
      case LayerKind::maxpool:
        maxpool_forward(layer.spec.pool, in_shape, shapes[l], in, out, tr.argmax[l]);
        break;
      case LayerKind::global_avg_pool: {
        const std::size_t C = in_shape[0], HW = in_shape[1] * in_shape[2];
        out.assign(C, 0.0);
        for (std::size_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (std::size_t p = 0; p < HW; ++p) acc += in[c * HW + p];
          out[c] = acc / static_cast<double>(HW);
        }
        break;
      }
      case LayerKind::dense: {
        const auto& s = layer.spec;
        out.assign(s.out, 0.0);
        for (std::size_t o = 0; o < s.out; ++o) {
          auto row = layer.weights.row(o);
          double acc = s.bias ? layer.bias[o] : 0.0;
          for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * in[i];
          out[o] = acc;
        }
        break;
      }
      case LayerKind::softmax_xent: break;
    }
  }
  return tr;
}

void check_input(const ModelState& model, const Dataset& data, std::span<const std::size_t> indices) {
  if (data.image_shape != model.input_shape) throw ArgumentError("dataset image shape does not match model input");
  for (auto i : indices) {
    if (i >= data.size()) throw ArgumentError("batch index out of range");
    if (data.labels[i] < 0 || static_cast<std::size_t>(data.labels[i]) >= model.num_classes()) {
      throw ArgumentError("label out of range for model");
    }
  }
}

std::vector<Shape> model_shapes(const ModelState& model) {
  std::vector<LayerSpec> specs;
  specs.reserve(model.layers.size());
  for (const auto& l : model.layers) specs.push_back(l.spec);
  return infer_shapes(model.input_shape, specs);
}

}  // namespace

// -------------------------------------------------------------- forward

std::vector<double> predict(const ModelState& model, std::span<const double> image) {
  const auto shapes = model_shapes(model);
  if (image.size() != shape_size(model.input_shape)) throw ArgumentError("predict: image size mismatch");
  return run_forward(model, shapes, image).acts.back();
}

ForwardResult forward(const ModelState& model, const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ArgumentError("forward: empty batch");
  const auto shapes = model_shapes(model);
  check_input(model, data, indices);
  ForwardResult res;
  double loss = 0.0;
  std::size_t hits = 0;
  Vec probs;
  for (auto idx : indices) {
    Trace tr = run_forward(model, shapes, data.image(idx));
    const Vec& logits = tr.acts.back();
    double log_norm = 0.0;
    softmax(logits, probs, log_norm);
    const auto label = static_cast<std::size_t>(data.labels[idx]);
    loss += log_norm - logits[label];
    if (argmax_of(logits) == label) ++hits;
    res.logits.push_back(logits);
  }
  res.loss = loss / static_cast<double>(indices.size());
  res.accuracy = static_cast<double>(hits) / static_cast<double>(indices.size());
  if (!std::isfinite(res.loss)) throw NumericalError("forward: non-finite loss");
  return res;
}

Evaluation evaluate(const ModelState& model, const Dataset& data) {
  if (data.size() == 0) throw ArgumentError("evaluate: empty dataset");
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto res = forward(model, data, all);
  return {res.loss, res.accuracy};
}

// ------------------------------------------------------------- backward

Gradients loss_and_gradients(const ModelState& model, const Dataset& data,
                             std::span<const std::size_t> indices) {
  if (indices.empty()) throw ArgumentError("loss_and_gradients: empty batch");
  const auto shapes = model_shapes(model);
  check_input(model, data, indices);
  const std::size_t L = model.layers.size();

  Gradients grads;
  grads.layers.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = model.layers[l];
    if (layer.spec.kind == LayerKind::conv2d) grads.layers[l].weights.assign(layer.kernel.tensor().size(), 0.0);
    if (layer.spec.kind == LayerKind::dense) grads.layers[l].weights.assign(layer.weights.size(), 0.0);
    grads.layers[l].bias.assign(layer.bias.size(), 0.0);
  }

  Vec probs, g, gin;
  double loss = 0.0;
  for (auto idx : indices) {
    Trace tr = run_forward(model, shapes, data.image(idx));
    const auto label = static_cast<std::size_t>(data.labels[idx]);
    double log_norm = 0.0;
    softmax(tr.acts.back(), probs, log_norm);
    loss += log_norm - tr.acts.back()[label];
    g = probs;
    g[label] -= 1.0;

    for (std::size_t l = L - 1; l-- > 0;) {
      const auto& layer = model.layers[l];
      const Shape& in_shape = l == 0 ? model.input_shape : shapes[l - 1];
      const Vec& in = tr.acts[l];
      auto& lg = grads.layers[l];
      switch (layer.spec.kind) {
        case LayerKind::conv2d: conv_backward(layer, in_shape, shapes[l], in, g, gin, lg); break;
        case LayerKind::relu:
          gin.resize(in.size());
          for (std::size_t i = 0; i < in.size(); ++i) gin[i] = in[i] > 0.0 ? g[i] : 0.0;
          break;
        case LayerKind::maxpool:
          gin.assign(in.size(), 0.0);
          for (std::size_t o = 0; o < g.size(); ++o) gin[tr.argmax[l][o]] += g[o];
          break;
        case LayerKind::global_avg_pool: {
          const std::size_t C = in_shape[0], HW = in_shape[1] * in_shape[2];
          gin.resize(in.size());
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t p = 0; p < HW; ++p) gin[c * HW + p] = g[c] / static_cast<double>(HW);
          break;
        }
        case LayerKind::dense: {
          const auto& s = layer.spec;
          gin.assign(s.in, 0.0);
          for (std::size_t o = 0; o < s.out; ++o) {
            auto row = layer.weights.row(o);
            double* gw = lg.weights.data() + o * s.in;
            for (std::size_t i = 0; i < s.in; ++i) {
              gw[i] += g[o] * in[i];
              gin[i] += row[i] * g[o];
            }
            if (s.bias) lg.bias[o] += g[o];
          }
          break;
        }
        case LayerKind::softmax_xent: break;
      }
      std::swap(g, gin);
    }
  }

  const double inv = 1.0 / static_cast<double>(indices.size());
  for (auto& lg : grads.layers) {
    for (auto& w : lg.weights) w *= inv;
    for (auto& b : lg.bias) b *= inv;
  }
  grads.loss = loss * inv;
  if (!std::isfinite(grads.loss)) throw NumericalError("loss_and_gradients: non-finite loss");
  return grads;
}

void SgdOptimizer::apply(ModelState& model, const Gradients& grads, double lr) {
  if (grads.layers.size() != model.layers.size()) throw ArgumentError("SgdOptimizer: gradient layout mismatch");
  if (momentum_ != 0.0 && velocity_.size() != grads.layers.size()) {
    velocity_.assign(grads.layers.size(), {});
    for (std::size_t l = 0; l < grads.layers.size(); ++l) {
      velocity_[l].weights.assign(grads.layers[l].weights.size(), 0.0);
      velocity_[l].bias.assign(grads.layers[l].bias.size(), 0.0);
    }
  }
  auto update = [&](std::span<double> w, const Vec& gw, Vec* vel, double decay) {
    if (w.size() != gw.size()) throw ArgumentError("SgdOptimizer: gradient size mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = decay != 0.0 ? gw[i] + decay * w[i] : gw[i];
      double step = g;
      if (vel) {
        (*vel)[i] = momentum_ * (*vel)[i] + g;
        step = (*vel)[i];
      }
      w[i] -= lr * step;
    }
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    const auto& lg = grads.layers[l];
    LayerGrad* v = momentum_ != 0.0 ? &velocity_[l] : nullptr;
    if (layer.spec.kind == LayerKind::conv2d) update(layer.kernel.tensor().data(), lg.weights, v ? &v->weights : nullptr, weight_decay_);
    if (layer.spec.kind == LayerKind::dense) update(layer.weights.data(), lg.weights, v ? &v->weights : nullptr, weight_decay_);
    if (!layer.bias.empty()) update(layer.bias, lg.bias, v ? &v->bias : nullptr, 0.0);
  }
}

double backward_and_step(ModelState& model, const Dataset& data, std::span<const std::size_t> indices,
                         double lr, SgdOptimizer& optimizer) {
  Gradients grads = loss_and_gradients(model, data, indices);
  for (const auto& lg : grads.layers) {
    for (double x : lg.weights)
      if (!std::isfinite(x)) throw NumericalError("backward_and_step: non-finite gradient");
    for (double x : lg.bias)
      if (!std::isfinite(x)) throw NumericalError("backward_and_step: non-finite gradient");
  }
  optimizer.apply(model, grads, lr);
  ++model.step;
  return grads.loss;
}

// ---------------------------------------------------------- LrSchedule

LrSchedule::LrSchedule(std::vector<Segment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw ArgumentError("LrSchedule: no segments");
  for (const auto& s : segments_) {
    if (s.epochs < 1) throw ArgumentError("LrSchedule: segment with zero epochs");
    if (!(s.rate > 0.0)) throw ArgumentError("LrSchedule: learning rate must be positive");
  }
}

double LrSchedule::rate_at_epoch(std::size_t epoch) const {
  std::size_t end = 0;
  for (const auto& s : segments_) {
    end += s.epochs;
    if (epoch < end) return s.rate;
  }
  return segments_.back().rate;
}

std::size_t LrSchedule::total_epochs() const {
  std::size_t n = 0;
  for (const auto& s : segments_) n += s.epochs;
  return n;
}

LrSchedule LrSchedule::parse(const std::string& text) {
  std::vector<Segment> segs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ArgumentError("LrSchedule: expected rate:epochs, got '" + item + "'");
    try {
      std::size_t used = 0;
      Segment seg;
      seg.rate = std::stod(item.substr(0, colon), &used);
      const long epochs = std::stol(item.substr(colon + 1));
      if (epochs < 1) throw ArgumentError("LrSchedule: epochs must be >= 1 in '" + item + "'");
      seg.epochs = static_cast<std::size_t>(epochs);
      segs.push_back(seg);
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ArgumentError*>(&e)) throw;
      throw ArgumentError("LrSchedule: cannot parse '" + item + "'");
    }
  }
  return LrSchedule(std::move(segs));
}

std::string LrSchedule::to_string() const {
  std::ostringstream os;
  os.precision(9);
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i) os << ',';
    os << segments_[i].rate << ':' << segments_[i].epochs;
  }
  return os.str();
}

}  // namespace deeptwist
