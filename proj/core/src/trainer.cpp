#include "deeptwist/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "deeptwist/errors.hpp"
#include "deeptwist/linalg.hpp"
#include "deeptwist/lowering.hpp"

namespace deeptwist {

const char* to_string(CompressionMethod method) {
  switch (method) {
    case CompressionMethod::tucker: return "tucker";
    case CompressionMethod::svd_full: return "svd_full";
    case CompressionMethod::svd_tiled: return "svd_tiled";
  }
  return "unknown";
}

CompressionMethod parse_method(const std::string& text) {
  if (text == "tucker") return CompressionMethod::tucker;
  if (text == "svd" || text == "svd_full") return CompressionMethod::svd_full;
  if (text == "svd_tiled" || text == "tiled") return CompressionMethod::svd_tiled;
  throw ArgumentError("unknown compression method '" + text + "' (tucker | svd | svd_tiled)");
}

void CompressionSpec::validate() const {
  if (method == CompressionMethod::tucker && !(rc > 0.0 && rc <= 1.0)) {
    throw ArgumentError("compression: R_c must lie in (0, 1]");
  }
  if (method != CompressionMethod::tucker && rank < 1) throw ArgumentError("compression: rank must be >= 1");
  if (method == CompressionMethod::svd_tiled && (tile_h < 1 || tile_w < 1)) {
    throw ArgumentError("compression: tile sizes must be >= 1");
  }
}

bool CompressionSpec::targets(const LayerSpec& layer) const {
  return layer.kind == LayerKind::conv2d && layer.in >= min_in_channels;
}

// ----------------------------------------------------------- distortion

Distortion distort_weights(const ModelState& model, const CompressionSpec& spec) {
  spec.validate();
  Distortion out{model, 0.0, 0, {}};
  double moved = 0.0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    if (!spec.targets(layer.spec)) continue;
    const Kernel4& k = layer.kernel;
    LayerFactors lf{l, {}};
    if (spec.method == CompressionMethod::tucker) {
      lf.factors = tucker_decompose(k, tucker_ranks(k.in_channels(), k.out_channels(), spec.rc), spec.tucker);
    } else {
      const LoweredKernel lowered = lower_kernel(k);
      const std::size_t th = spec.method == CompressionMethod::svd_full ? lowered.matrix.rows() : spec.tile_h;
      const std::size_t tw = spec.method == CompressionMethod::svd_full ? lowered.matrix.cols() : spec.tile_w;
      lf.factors = tiled_svd_decompose(lowered.matrix, th, tw, spec.rank);
    }
    Kernel4 rebuilt = reconstruct_kernel(lf, k);
    moved += frobenius_sq_diff(k.tensor().data(), rebuilt.tensor().data());
    out.targeted_weights += k.tensor().size();
    out.model.layers[l].kernel = std::move(rebuilt);
    out.factors.push_back(std::move(lf));
  }
  out.delta_w = out.targeted_weights ? moved / static_cast<double>(out.targeted_weights) : 0.0;
  return out;
}

Kernel4 reconstruct_kernel(const LayerFactors& lf, const Kernel4& shape_like) {
  if (const auto* tf = std::get_if<TuckerFactors>(&lf.factors)) return tucker_reconstruct(*tf);
  const auto& grid = std::get<TileGridSvd>(lf.factors);
  return raise_kernel({tiled_svd_reconstruct(grid), shape_like.d(), shape_like.in_channels(),
                       shape_like.out_channels()});
}

std::size_t decomposed_parameter_count(const TuckerFactors& f) {
  return f.parameter_count();
}

ModelState build_decomposed_model(const ModelState& model, const std::vector<LayerFactors>& factors) {
  ModelState out;
  out.input_shape = model.input_shape;
  out.seed = model.seed;
  out.step = model.step;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    auto it = std::find_if(factors.begin(), factors.end(),
                           [l](const LayerFactors& f) { return f.layer_index == l; });
    if (it == factors.end()) {
      out.layers.push_back(layer);
      continue;
    }
    const auto* tf = std::get_if<TuckerFactors>(&it->factors);
    if (!tf) throw ArgumentError("build_decomposed_model: layer '" + layer.spec.name + "' has no Tucker factors");
    const auto& s = layer.spec;
    if (s.kind != LayerKind::conv2d || tf->d() != s.d || tf->p_s.rows() != s.in || tf->p_t.rows() != s.out) {
      throw ArgumentError("build_decomposed_model: factors do not match layer '" + s.name + "'");
    }
    const std::size_t rs = tf->rank_s(), rt = tf->rank_t();

    Layer first;
    first.spec = LayerSpec::conv2d(s.name + ".ps", 1, s.in, rs, 1, 0, false);
    first.kernel = Kernel4(1, s.in, rs);
    for (std::size_t c = 0; c < s.in; ++c)
      for (std::size_t r = 0; r < rs; ++r) first.kernel(0, 0, c, r) = tf->p_s(c, r);

    Layer core;
    core.spec = LayerSpec::conv2d(s.name + ".core", s.d, rs, rt, s.stride, s.padding, false);
    core.kernel = Kernel4(tf->core);

    Layer last;
    last.spec = LayerSpec::conv2d(s.name + ".pt", 1, rt, s.out, 1, 0, s.bias);
    last.kernel = Kernel4(1, rt, s.out);
    for (std::size_t r = 0; r < rt; ++r)
      for (std::size_t t = 0; t < s.out; ++t) last.kernel(0, 0, r, t) = tf->p_t(t, r);
    last.bias = layer.bias;

    out.layers.push_back(std::move(first));
    out.layers.push_back(std::move(core));
    out.layers.push_back(std::move(last));
  }
  std::vector<LayerSpec> specs;
  for (const auto& layer : out.layers) specs.push_back(layer.spec);
  infer_shapes(out.input_shape, specs);
  return out;
}

// -------------------------------------------------------------- training

namespace {

// Deterministic epoch-wise shuffled batches. Batches run across epoch
// boundaries without resetting anything but the permutation.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch, std::uint64_t seed) : order_(n), batch_(batch), rng_(seed) {
    if (n == 0) throw ArgumentError("training data is empty");
    if (batch == 0) throw ArgumentError("batch size must be >= 1");
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
  }

  std::size_t steps_per_epoch() const { return (order_.size() + batch_ - 1) / batch_; }
  std::size_t epoch() const { return epoch_; }

  std::span<const std::size_t> next() {
    if (pos_ >= order_.size()) {
      ++epoch_;
      pos_ = 0;
      reshuffle();
    }
    const std::size_t len = std::min(batch_, order_.size() - pos_);
    std::span<const std::size_t> b(order_.data() + pos_, len);
    pos_ += len;
    return b;
  }

 private:
  void reshuffle() { std::shuffle(order_.begin(), order_.end(), rng_); }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
  std::mt19937_64 rng_;
};

struct ResolvedData {
  const Dataset* train;
  const Dataset* test;
  Dataset probe_storage;
  const Dataset* probe;
};

ResolvedData resolve(const TrainData& data, std::size_t probe_size) {
  if (!data.train || data.train->size() == 0) throw ArgumentError("training data is empty");
  ResolvedData r{data.train, data.test ? data.test : data.train, {}, data.probe};
  if (!r.probe) {
    std::vector<std::size_t> idx(std::min(std::max<std::size_t>(probe_size, 1), data.train->size()));
    std::iota(idx.begin(), idx.end(), 0);
    r.probe_storage = data.train->subset(idx);
  }
  return r;
}

const Dataset& probe_of(const ResolvedData& r) { return r.probe ? *r.probe : r.probe_storage; }

}  // namespace

void DeepTwistConfig::normalize() {
  if (sd == 0) throw ArgumentError("S_D must be >= 1");
  if (total_steps == 0) throw ArgumentError("total_steps must be >= 1: no distortion event possible");
  if (sd > total_steps) throw ArgumentError("S_D exceeds total_steps");
  total_steps = (total_steps + sd - 1) / sd * sd;
  if (batch_size == 0) throw ArgumentError("batch size must be >= 1");
}

ModelState train_plain(ModelState model, const TrainData& data, const DeepTwistConfig& cfg, std::size_t steps) {
  const ResolvedData rd = resolve(data, cfg.probe_size);
  BatchStream stream(rd.train->size(), cfg.batch_size, cfg.shuffle_seed);
  SgdOptimizer opt(cfg.momentum, cfg.weight_decay);
  for (std::size_t s = 0; s < steps; ++s) {
    auto batch = stream.next();
    backward_and_step(model, *rd.train, batch, cfg.schedule.rate_at_epoch(stream.epoch()), opt);
  }
  return model;
}

TrainResult deeptwist_train(ModelState model, const TrainData& data, DeepTwistConfig cfg, const RecordSink& sink) {
  cfg.normalize();
  cfg.compression.validate();
  const ResolvedData rd = resolve(data, cfg.probe_size);
  const Dataset& probe = probe_of(rd);
  BatchStream stream(rd.train->size(), cfg.batch_size, cfg.shuffle_seed);
  SgdOptimizer opt(cfg.momentum, cfg.weight_decay);

  TrainResult result;
  for (std::size_t s = 1; s <= cfg.total_steps; ++s) {
    auto batch = stream.next();
    const double lr = cfg.schedule.rate_at_epoch(stream.epoch());
    backward_and_step(model, *rd.train, batch, lr, opt);
    if (s % cfg.sd != 0) continue;

    DistortionRecord rec;
    rec.step = s;
    rec.epoch = stream.epoch();
    rec.lr = lr;
    rec.loss_pre = evaluate(model, probe).loss;
    Distortion dist = distort_weights(model, cfg.compression);
    model = std::move(dist.model);
    rec.loss_post = evaluate(model, probe).loss;
    rec.rel_loss_jump = rec.loss_pre > 0.0 ? (rec.loss_post - rec.loss_pre) / rec.loss_pre : 0.0;
    rec.delta_w = dist.delta_w;
    rec.test_acc = evaluate(model, *rd.test).accuracy;
    result.factors = std::move(dist.factors);
    result.log.push_back(rec);
    if (sink) sink(rec);
  }

  if (cfg.compression.method == CompressionMethod::tucker) {
    result.decomposed = build_decomposed_model(model, result.factors);
  }
  result.model = std::move(model);
  return result;
}

TrainResult baseline_finetune(const ModelState& model, const TrainData& data, DeepTwistConfig cfg,
                              const RecordSink& sink) {
  if (cfg.compression.method != CompressionMethod::tucker) {
    throw ArgumentError(std::string("baseline fine-tuning needs a trainable decomposed structure; ") +
                        to_string(cfg.compression.method) +
                        " factors of a lowered kernel do not form convolution layers");
  }
  cfg.compression.validate();
  if (cfg.sd == 0) throw ArgumentError("S_D must be >= 1");
  const ResolvedData rd = resolve(data, cfg.probe_size);
  const Dataset& probe = probe_of(rd);

  Distortion dist = distort_weights(model, cfg.compression);
  ModelState work = build_decomposed_model(model, dist.factors);

  TrainResult result;
  result.factors = std::move(dist.factors);

  DistortionRecord first;
  first.step = 0;
  first.lr = cfg.schedule.rate_at_epoch(0);
  first.loss_pre = evaluate(model, probe).loss;
  first.loss_post = evaluate(work, probe).loss;
  first.rel_loss_jump = first.loss_pre > 0.0 ? (first.loss_post - first.loss_pre) / first.loss_pre : 0.0;
  first.delta_w = dist.delta_w;
  first.test_acc = evaluate(work, *rd.test).accuracy;
  result.log.push_back(first);
  if (sink) sink(first);

  BatchStream stream(rd.train->size(), cfg.batch_size == 0 ? 1 : cfg.batch_size, cfg.shuffle_seed);
  SgdOptimizer opt(cfg.momentum, cfg.weight_decay);
  for (std::size_t s = 1; s <= cfg.total_steps; ++s) {
    auto batch = stream.next();
    const double lr = cfg.schedule.rate_at_epoch(stream.epoch());
    backward_and_step(work, *rd.train, batch, lr, opt);
    if (s % cfg.sd != 0 && s != cfg.total_steps) continue;
    DistortionRecord rec;
    rec.step = s;
    rec.epoch = stream.epoch();
    rec.lr = lr;
    rec.loss_pre = rec.loss_post = evaluate(work, probe).loss;
    rec.test_acc = evaluate(work, *rd.test).accuracy;
    result.log.push_back(rec);
    if (sink) sink(rec);
  }
  result.decomposed = work;
  result.model = std::move(work);
  return result;
}

}  // namespace deeptwist
