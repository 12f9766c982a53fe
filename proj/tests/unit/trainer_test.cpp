#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deeptwist/errors.hpp"
#include "deeptwist/io.hpp"
#include "deeptwist/lowering.hpp"
#include "deeptwist/trainer.hpp"
#include "oracles.hpp"

namespace deeptwist {
namespace {

// conv1 (1→4) is below the threshold and stays dense; conv2 (4→6) is targeted.
ModelState small_model(std::uint64_t seed) { return init_model({1, 8, 8}, toy_cnn(1, 8, 3, 4, 6), seed); }

CompressionSpec tucker_spec(double rc) {
  CompressionSpec s;
  s.rc = rc;
  s.min_in_channels = 2;
  return s;
}

CompressionSpec tiled_spec(std::size_t rank, std::size_t th, std::size_t tw) {
  CompressionSpec s;
  s.method = CompressionMethod::svd_tiled;
  s.rank = rank;
  s.tile_h = th;
  s.tile_w = tw;
  s.min_in_channels = 2;
  return s;
}

double kernel_rel_diff(const ModelState& a, const ModelState& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].spec.kind != LayerKind::conv2d) continue;
    num += frobenius_sq_diff(a.layers[l].kernel.tensor().data(), b.layers[l].kernel.tensor().data());
    den += frobenius_sq(b.layers[l].kernel.tensor());
  }
  return std::sqrt(num / den);
}

DeepTwistConfig small_config(std::size_t sd, std::size_t steps) {
  DeepTwistConfig cfg;
  cfg.sd = sd;
  cfg.total_steps = steps;
  cfg.batch_size = 8;
  cfg.compression = tucker_spec(0.5);
  cfg.schedule = LrSchedule({{1, 0.05}});
  cfg.probe_size = 30;
  return cfg;
}

TEST(CompressionSpecTest, ValidationAndTargeting) {
  CompressionSpec s = tucker_spec(0.0);
  EXPECT_THROW(s.validate(), ArgumentError);
  s.rc = 1.2;
  EXPECT_THROW(s.validate(), ArgumentError);
  EXPECT_THROW(tiled_spec(0, 4, 4).validate(), ArgumentError);
  EXPECT_THROW(tiled_spec(1, 0, 4).validate(), ArgumentError);
  EXPECT_TRUE(tucker_spec(0.5).targets(LayerSpec::conv2d("c", 3, 4, 4)));
  EXPECT_FALSE(tucker_spec(0.5).targets(LayerSpec::conv2d("c", 3, 1, 4)));
  EXPECT_FALSE(tucker_spec(0.5).targets(LayerSpec::dense("d", 4, 4)));
  EXPECT_EQ(parse_method("tucker"), CompressionMethod::tucker);
  EXPECT_EQ(parse_method("svd"), CompressionMethod::svd_full);
  EXPECT_EQ(parse_method("svd_tiled"), CompressionMethod::svd_tiled);
  EXPECT_THROW(parse_method("cp"), ArgumentError);
}

TEST(DistortTest, OnlyTargetedKernelsChange) {
  const ModelState m = small_model(1);
  const Distortion d = distort_weights(m, tucker_spec(0.5));
  EXPECT_EQ(d.model.layers[0], m.layers[0]);
  EXPECT_NE(d.model.layers[2].kernel, m.layers[2].kernel);
  EXPECT_EQ(d.model.layers[2].bias, m.layers[2].bias);
  EXPECT_EQ(d.model.layers[5], m.layers[5]);
  EXPECT_EQ(d.targeted_weights, 9u * 4 * 6);
  ASSERT_EQ(d.factors.size(), 1u);
  EXPECT_EQ(d.factors[0].layer_index, 2u);
  for (std::size_t l = 0; l < m.layers.size(); ++l) EXPECT_EQ(d.model.layers[l].spec, m.layers[l].spec);
}

TEST(DistortTest, DeltaWMatchesDirectRecomputation) {
  const ModelState m = small_model(2);
  const Distortion d = distort_weights(m, tucker_spec(0.5));
  const Kernel4& k = m.layers[2].kernel;
  const Kernel4 rec = tucker_reconstruct(tucker_decompose(k, tucker_ranks(4, 6, 0.5)));
  const double expected =
      frobenius_sq_diff(k.tensor().data(), rec.tensor().data()) / static_cast<double>(k.tensor().size());
  EXPECT_NEAR(d.delta_w, expected, 1e-10);
  EXPECT_GT(d.delta_w, 0.0);
}

TEST(DistortTest, TiledDeltaWMatchesDirectRecomputation) {
  const ModelState m = small_model(3);
  const Distortion d = distort_weights(m, tiled_spec(1, 3, 12));
  const Kernel4& k = m.layers[2].kernel;
  const LoweredKernel low = lower_kernel(k);
  const Matrix rec = tiled_svd_reconstruct(tiled_svd_decompose(low.matrix, 3, 12, 1));
  const double expected = frobenius_sq_diff(low.matrix.data(), rec.data()) / static_cast<double>(k.tensor().size());
  EXPECT_NEAR(d.delta_w, expected, 1e-10);
}

TEST(DistortTest, IdempotentForBothMethods) {
  for (const CompressionSpec& spec : {tucker_spec(0.5), tiled_spec(2, 3, 12)}) {
    const Distortion once = distort_weights(small_model(4), spec);
    const Distortion twice = distort_weights(once.model, spec);
    EXPECT_LE(kernel_rel_diff(twice.model, once.model), 1e-8);
    EXPECT_LE(twice.delta_w, 1e-12);
  }
}

TEST(DistortTest, FullRankIsNoOp) {
  const ModelState m = small_model(5);
  CompressionSpec full_svd;
  full_svd.method = CompressionMethod::svd_full;
  full_svd.rank = 6;
  full_svd.min_in_channels = 2;
  for (const CompressionSpec& spec : {tucker_spec(1.0), full_svd}) {
    const Distortion d = distort_weights(m, spec);
    EXPECT_LE(kernel_rel_diff(d.model, m), 1e-9);
    EXPECT_LE(d.delta_w, 1e-18);
  }
}

TEST(DistortTest, ExportedFactorsReproduceKernels) {
  const ModelState m = small_model(6);
  for (const CompressionSpec& spec : {tucker_spec(0.5), tiled_spec(1, 6, 12)}) {
    const Distortion d = distort_weights(m, spec);
    for (const auto& f : d.factors) {
      const Kernel4& k = d.model.layers[f.layer_index].kernel;
      const Kernel4 r = reconstruct_kernel(f, k);
      EXPECT_LE(oracle::max_abs_diff(r.tensor().data(), k.tensor().data()), 1e-8);
    }
  }
}

TEST(DecomposedModelTest, ForwardMatchesReconstructedKernelModel) {
  std::mt19937_64 rng(7);
  const ModelState m = small_model(7);
  const Distortion d = distort_weights(m, tucker_spec(0.5));
  const ModelState dec = build_decomposed_model(d.model, d.factors);
  EXPECT_EQ(dec.layers.size(), m.layers.size() + 2);
  EXPECT_EQ(dec.layers[2].spec.name, "conv2.ps");
  EXPECT_EQ(dec.layers[3].spec.name, "conv2.core");
  EXPECT_EQ(dec.layers[4].spec.name, "conv2.pt");
  EXPECT_TRUE(dec.layers[2].bias.empty());
  EXPECT_EQ(dec.layers[4].bias, m.layers[2].bias);
  for (int i = 0; i < 5; ++i) {
    const DenseTensor x = oracle::random_tensor({1, 8, 8}, rng);
    EXPECT_LE(oracle::max_abs_diff(predict(dec, x.data()), predict(d.model, x.data())), 1e-8);
  }
}

TEST(DecomposedModelTest, FullRankReproducesOriginalLayer) {
  std::mt19937_64 rng(8);
  const ModelState m = small_model(8);
  const Distortion d = distort_weights(m, tucker_spec(1.0));
  const ModelState dec = build_decomposed_model(m, d.factors);
  const DenseTensor x = oracle::random_tensor({1, 8, 8}, rng);
  EXPECT_LE(oracle::max_abs_diff(predict(dec, x.data()), predict(m, x.data())), 1e-9);
}

TEST(DecomposedModelTest, ParameterCountIsExact) {
  const ModelState m = small_model(9);
  const Distortion d = distort_weights(m, tucker_spec(0.5));
  const auto& f = std::get<TuckerFactors>(d.factors[0].factors);
  EXPECT_EQ(decomposed_parameter_count(f), 4u * 2 + 9u * 2 * 3 + 6u * 3);
  const ModelState dec = build_decomposed_model(d.model, d.factors);
  std::size_t weights = 0;
  for (std::size_t l : {2u, 3u, 4u}) weights += dec.layers[l].kernel.tensor().size();
  EXPECT_EQ(weights, decomposed_parameter_count(f));
}

TEST(DecomposedModelTest, MismatchedFactorsThrow) {
  const ModelState m = small_model(10);
  Distortion d = distort_weights(m, tucker_spec(0.5));
  d.factors[0].layer_index = 1;
  EXPECT_THROW(build_decomposed_model(m, d.factors), ArgumentError);
  EXPECT_THROW(build_decomposed_model(m, distort_weights(m, tiled_spec(1, 6, 12)).factors), ArgumentError);
}

TEST(ConfigTest, NormalizeRoundsUpAndRejectsZero) {
  DeepTwistConfig cfg;
  cfg.sd = 200;
  cfg.total_steps = 900;
  cfg.normalize();
  EXPECT_EQ(cfg.total_steps, 1000u);
  EXPECT_EQ(cfg.distortion_count(), 5u);
  cfg.total_steps = 0;
  EXPECT_THROW(cfg.normalize(), ArgumentError);
  cfg.total_steps = 100;
  cfg.sd = 0;
  EXPECT_THROW(cfg.normalize(), ArgumentError);
  cfg.sd = 101;
  EXPECT_THROW(cfg.normalize(), ArgumentError);
}

TEST(DeepTwistTest, ScheduleProducesOneRecordPerPeriod) {
  const Dataset train = synth_blobs(3, 10, 8, 1);
  std::vector<DistortionRecord> streamed;
  const TrainResult r = deeptwist_train(small_model(11), {&train, nullptr, nullptr}, small_config(5, 23),
                                        [&](const DistortionRecord& rec) { streamed.push_back(rec); });
  ASSERT_EQ(r.log.size(), 5u);
  EXPECT_EQ(streamed.size(), 5u);
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    EXPECT_EQ(r.log[i].step, 5 * (i + 1));
    EXPECT_GE(r.log[i].delta_w, 0.0);
  }
  EXPECT_EQ(r.model.step, 25u);
  ASSERT_TRUE(r.decomposed.has_value());
  for (const auto& f : r.factors) {
    const Kernel4& k = r.model.layers[f.layer_index].kernel;
    EXPECT_LE(oracle::max_abs_diff(reconstruct_kernel(f, k).tensor().data(), k.tensor().data()), 1e-8);
  }
}

TEST(DeepTwistTest, SingleDistortionMatchesPlainSgdBeforeIt) {
  const Dataset train = synth_blobs(3, 10, 8, 2);
  const TrainData data{&train, nullptr, nullptr};
  const DeepTwistConfig cfg = small_config(12, 12);
  const ModelState plain = train_plain(small_model(12), data, cfg, 12);
  const TrainResult r = deeptwist_train(small_model(12), data, cfg);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.model, distort_weights(plain, cfg.compression).model);
}

TEST(DeepTwistTest, FullRankMatchesPlainSgd) {
  const Dataset train = synth_blobs(3, 10, 8, 3);
  const TrainData data{&train, nullptr, nullptr};
  DeepTwistConfig cfg = small_config(4, 20);
  cfg.compression = tucker_spec(1.0);
  const ModelState plain = train_plain(small_model(13), data, cfg, 20);
  const TrainResult r = deeptwist_train(small_model(13), data, cfg);
  EXPECT_NEAR(r.log.back().test_acc, evaluate(plain, train).accuracy, 1e-9);
}

TEST(DeepTwistTest, EmptyDataThrows) {
  const Dataset empty{{1, 8, 8}, 3, {}, {}};
  EXPECT_THROW(deeptwist_train(small_model(14), {&empty, nullptr, nullptr}, small_config(2, 4)), ArgumentError);
}

TEST(BaselineTest, RejectsSvdMethods) {
  const Dataset train = synth_blobs(3, 4, 8, 4);
  DeepTwistConfig cfg = small_config(2, 4);
  cfg.compression = tiled_spec(1, 6, 12);
  EXPECT_THROW(baseline_finetune(small_model(15), {&train, nullptr, nullptr}, cfg), ArgumentError);
  cfg.compression.method = CompressionMethod::svd_full;
  EXPECT_THROW(baseline_finetune(small_model(15), {&train, nullptr, nullptr}, cfg), ArgumentError);
}

TEST(BaselineTest, ZeroStepsEqualsOneShotDecomposition) {
  const Dataset train = synth_blobs(3, 10, 8, 5);
  DeepTwistConfig cfg = small_config(5, 0);
  const ModelState m = small_model(16);
  const TrainResult r = baseline_finetune(m, {&train, nullptr, nullptr}, cfg);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.log[0].step, 0u);
  const Distortion d = distort_weights(m, cfg.compression);
  EXPECT_DOUBLE_EQ(r.log[0].test_acc, evaluate(d.model, train).accuracy);
}

TEST(BaselineTest, TrainsDecomposedStructure) {
  const Dataset train = synth_blobs(3, 10, 8, 6);
  const TrainResult r = baseline_finetune(small_model(17), {&train, nullptr, nullptr}, small_config(5, 12));
  ASSERT_EQ(r.log.size(), 4u);  // step 0, 5, 10 and the final step 12
  EXPECT_EQ(r.log.back().step, 12u);
  EXPECT_EQ(r.model.layers.size(), 9u);
  EXPECT_EQ(r.log[1].delta_w, 0.0);
}

}  // namespace
}  // namespace deeptwist
