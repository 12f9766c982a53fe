#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "deeptwist/errors.hpp"
#include "deeptwist/io.hpp"
#include "deeptwist/lowering.hpp"
#include "deeptwist/nn.hpp"
#include "oracles.hpp"

namespace deeptwist {
namespace {

Dataset random_dataset(const Shape& image_shape, std::size_t classes, std::size_t n, std::mt19937_64& rng) {
  Dataset d{image_shape, classes, {}, {}};
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, static_cast<int>(classes) - 1);
  d.pixels.resize(n * shape_size(image_shape));
  for (auto& x : d.pixels) x = g(rng);
  for (std::size_t i = 0; i < n; ++i) d.labels.push_back(label(rng));
  return d;
}

void randomize_biases(ModelState& m, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& l : m.layers)
    for (auto& b : l.bias) b = g(rng);
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Dense classifier straight on a [C,1,1] input.
ModelState linear_model(std::size_t classes) {
  return init_model({classes, 1, 1},
                    {LayerSpec::dense("fc", classes, classes), LayerSpec::softmax_xent("loss")}, 1);
}

TEST(ForwardTest, UniformLogitsGiveLogC) {
  for (std::size_t c : {2u, 3u, 10u}) {
    ModelState m = linear_model(c);
    for (auto& w : m.layers[0].weights.data()) w = 0.0;
    std::mt19937_64 rng(c);
    const Dataset d = random_dataset({c, 1, 1}, c, 5, rng);
    EXPECT_NEAR(forward(m, d, iota(5)).loss, std::log(static_cast<double>(c)), 1e-9);
  }
}

TEST(ForwardTest, IdentityDenseOnOneHotPicksIndex) {
  ModelState m = linear_model(4);
  m.layers[0].weights = Matrix::identity(4);
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> x(4, 0.0);
    x[k] = 1.0;
    const auto logits = predict(m, x);
    EXPECT_EQ(std::distance(logits.begin(), std::max_element(logits.begin(), logits.end())), static_cast<long>(k));
  }
}

TEST(ForwardTest, ConvLayerMatchesLoweredGemm) {
  // An identity dense layer exposes the conv output as the logits.
  std::mt19937_64 rng(3);
  for (std::size_t stride : {1u, 2u})
    for (std::size_t pad : {0u, 1u}) {
      const auto conv = LayerSpec::conv2d("c", 3, 3, 4, stride, pad, false);
      const std::size_t oh = ConvGeometry{3, stride, pad}.output_extent(6);
      const std::size_t n = 4 * oh * oh;
      ModelState m = init_model({3, 6, 6}, {conv, LayerSpec::dense("id", n, n, false), LayerSpec::softmax_xent("l")}, 1);
      m.layers[1].weights = Matrix::identity(n);
      const DenseTensor x = oracle::random_tensor({3, 6, 6}, rng);
      const auto logits = predict(m, x.data());
      const DenseTensor ref = conv2d_lowered(m.layers[0].kernel, x, stride, pad);
      EXPECT_LE(oracle::max_abs_diff(logits, ref.data()), 1e-8);
    }
}

TEST(ForwardTest, ShapeMismatchAndBadLabelsThrow) {
  ModelState m = linear_model(3);
  std::mt19937_64 rng(4);
  Dataset d = random_dataset({2, 1, 1}, 3, 2, rng);
  EXPECT_THROW(forward(m, d, iota(2)), ArgumentError);
  d = random_dataset({3, 1, 1}, 3, 2, rng);
  d.labels[1] = 7;
  EXPECT_THROW(forward(m, d, iota(2)), ArgumentError);
}

TEST(ForwardTest, NonFiniteLossThrows) {
  ModelState m = linear_model(2);
  m.layers[0].weights(0, 0) = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(5);
  const Dataset d = random_dataset({2, 1, 1}, 2, 3, rng);
  EXPECT_THROW(forward(m, d, iota(3)), NumericalError);
}

TEST(InferShapesTest, RejectsBrokenChains) {
  EXPECT_THROW(infer_shapes({1, 4, 4}, {LayerSpec::relu("r")}), ArgumentError);
  EXPECT_THROW(infer_shapes({1, 4, 4}, {LayerSpec::conv2d("c", 3, 2, 4), LayerSpec::softmax_xent("l")}),
               ArgumentError);
  EXPECT_THROW(infer_shapes({1, 4, 4}, {LayerSpec::relu("a"), LayerSpec::relu("a"), LayerSpec::dense("d", 16, 2),
                                        LayerSpec::softmax_xent("l")}),
               ArgumentError);
  const auto shapes = infer_shapes({1, 8, 8}, toy_cnn(1, 8, 3));
  EXPECT_EQ(shapes.back(), (Shape{3}));
}

TEST(GradientTest, QuadraticSurrogateStep) {
  // Loss w² at w = 1 has gradient 2; one plain step with lr 0.1 lands on 0.8.
  ModelState m = linear_model(2);
  m.layers[0].weights(0, 0) = 1.0;
  Gradients g;
  g.layers.resize(2);
  g.layers[0].weights.assign(4, 0.0);
  g.layers[0].weights[0] = 2.0 * m.layers[0].weights(0, 0);
  g.layers[0].bias.assign(2, 0.0);
  SgdOptimizer opt;
  opt.apply(m, g, 0.1);
  EXPECT_DOUBLE_EQ(m.layers[0].weights(0, 0), 0.8);
}

TEST(GradientTest, ConvAndDenseMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  ModelState m = init_model({2, 4, 4},
                            {LayerSpec::conv2d("c", 2, 2, 3, 1, 0), LayerSpec::dense("fc", 27, 3),
                             LayerSpec::softmax_xent("loss")},
                            11);
  randomize_biases(m, rng);
  const Dataset d = random_dataset({2, 4, 4}, 3, 4, rng);
  EXPECT_LE(oracle::gradient_check(m, d, iota(4), 6, rng), 1e-4);
}

TEST(GradientTest, AllLayerKindsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  ModelState m = init_model({2, 6, 6},
                            {LayerSpec::conv2d("c1", 3, 2, 4, 1, 1), LayerSpec::relu("r1"),
                             LayerSpec::conv2d("c2", 3, 4, 3, 2, 1), LayerSpec::relu("r2"),
                             LayerSpec::maxpool("p", 1), LayerSpec::conv2d("c3", 1, 3, 5, 1, 0, false),
                             LayerSpec::global_avg_pool("gap"), LayerSpec::dense("fc", 5, 4),
                             LayerSpec::softmax_xent("loss")},
                            12);
  randomize_biases(m, rng);
  const Dataset d = random_dataset({2, 6, 6}, 4, 3, rng);
  EXPECT_LE(oracle::gradient_check(m, d, iota(3), 20, rng), 1e-4);
}

TEST(GradientTest, ToyCnnMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  ModelState m = init_model({1, 8, 8}, toy_cnn(1, 8, 3, 4, 4), 13);
  randomize_biases(m, rng);
  const Dataset d = random_dataset({1, 8, 8}, 3, 4, rng);
  EXPECT_LE(oracle::gradient_check(m, d, iota(4), 12, rng), 1e-4);
}

TEST(BackwardTest, ZeroLearningRateLeavesWeightsBitwise) {
  std::mt19937_64 rng(9);
  ModelState m = init_model({1, 8, 8}, toy_cnn(1, 8, 3, 4, 4), 2);
  const ModelState before = m;
  const Dataset d = random_dataset({1, 8, 8}, 3, 4, rng);
  SgdOptimizer opt;
  backward_and_step(m, d, iota(4), 0.0, opt);
  EXPECT_EQ(m.layers, before.layers);
  EXPECT_EQ(m.step, 1u);
}

TEST(BackwardTest, PlainSgdAppliesExactGradient) {
  std::mt19937_64 rng(10);
  ModelState m = linear_model(3);
  const Dataset d = random_dataset({3, 1, 1}, 3, 4, rng);
  const Gradients g = loss_and_gradients(m, d, iota(4));
  ModelState stepped = m;
  SgdOptimizer opt;
  const double loss = backward_and_step(stepped, d, iota(4), 0.1, opt);
  EXPECT_EQ(loss, g.loss);
  const auto& w0 = m.layers[0].weights.data();
  const auto& w1 = stepped.layers[0].weights.data();
  for (std::size_t i = 0; i < w0.size(); ++i) EXPECT_EQ(w1[i], w0[i] - 0.1 * g.layers[0].weights[i]);
}

TEST(BackwardTest, MomentumAccumulatesVelocity) {
  ModelState m = linear_model(2);
  SgdOptimizer opt(0.9);
  Gradients g;
  g.layers.resize(2);
  g.layers[0].weights.assign(4, 1.0);
  g.layers[0].bias.assign(2, 0.0);
  const double w = m.layers[0].weights(0, 0);
  opt.apply(m, g, 0.1);
  opt.apply(m, g, 0.1);
  // v1 = 1, v2 = 0.9 + 1.
  EXPECT_NEAR(m.layers[0].weights(0, 0), w - 0.1 - 0.19, 1e-15);
}

TEST(BackwardTest, WeightDecayShrinksWeightsButNotBiases) {
  ModelState m = linear_model(2);
  m.layers[0].bias.assign(2, 0.5);
  SgdOptimizer opt(0.0, 0.01);
  Gradients g;
  g.layers.resize(2);
  g.layers[0].weights.assign(4, 0.0);
  g.layers[0].bias.assign(2, 0.0);
  const double w = m.layers[0].weights(0, 1);
  opt.apply(m, g, 0.1);
  EXPECT_DOUBLE_EQ(m.layers[0].weights(0, 1), w * (1.0 - 0.1 * 0.01));
  EXPECT_EQ(m.layers[0].bias[0], 0.5);
}

TEST(BackwardTest, DeterministicAcrossRuns) {
  const Dataset d = synth_blobs(3, 20, 8, 5);
  auto run = [&] {
    ModelState m = init_model({1, 8, 8}, toy_cnn(1, 8, 3, 4, 4), 21);
    SgdOptimizer opt(0.9);
    std::mt19937_64 rng(99);
    auto idx = iota(d.size());
    for (int step = 0; step < 10; ++step) {
      std::shuffle(idx.begin(), idx.end(), rng);
      backward_and_step(m, d, std::span(idx).first(8), 0.05, opt);
    }
    return m;
  };
  EXPECT_EQ(run(), run());
}

TEST(BackwardTest, LossDecreasesOnSeparableData) {
  const Dataset d = synth_blobs(3, 30, 8, 6, {1, 0.5, 1.0});
  ModelState m = init_model({1, 8, 8}, toy_cnn(1, 8, 3, 4, 4), 22);
  const double initial = evaluate(m, d).loss;
  SgdOptimizer opt;
  auto idx = iota(d.size());
  for (int step = 0; step < 60; ++step) backward_and_step(m, d, std::span(idx).subspan((step * 10) % 90, 10), 0.05, opt);
  EXPECT_LT(evaluate(m, d).loss, initial);
}

TEST(EvaluateTest, EmptyDatasetThrows) {
  ModelState m = linear_model(2);
  EXPECT_THROW(evaluate(m, Dataset{{2, 1, 1}, 2, {}, {}}), ArgumentError);
}

TEST(EvaluateTest, ConstantLogitsGiveArgmaxClassPrior) {
  ModelState m = linear_model(3);
  for (auto& w : m.layers[0].weights.data()) w = 0.0;
  m.layers[0].bias = {0.0, 2.0, 1.0};
  std::mt19937_64 rng(12);
  Dataset d = random_dataset({3, 1, 1}, 3, 10, rng);
  d.labels = {1, 0, 1, 2, 1, 0, 0, 2, 1, 0};
  EXPECT_DOUBLE_EQ(evaluate(m, d).accuracy, 0.4);
}

TEST(EvaluateTest, AnalyticSeparatorOnFarBlobsIsPerfect) {
  // Nearest-centroid is linear: logit_c = μ_c·x − ½‖μ_c‖².
  const std::size_t classes = 2, size = 4, n = size * size;
  const Dataset d = synth_blobs(classes, 50, size, 7, {1, 0.2, 1.0});
  std::vector<std::vector<double>> mu(classes, std::vector<double>(n, 0.0));
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto img = d.image(i);
    for (std::size_t k = 0; k < n; ++k) mu[d.labels[i]][k] += img[k];
    ++count[d.labels[i]];
  }
  ModelState m = init_model({1, size, size}, {LayerSpec::dense("fc", n, classes), LayerSpec::softmax_xent("l")}, 1);
  for (std::size_t c = 0; c < classes; ++c) {
    double sq = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      mu[c][k] /= static_cast<double>(count[c]);
      m.layers[0].weights(c, k) = mu[c][k];
      sq += mu[c][k] * mu[c][k];
    }
    m.layers[0].bias[c] = -0.5 * sq;
  }
  EXPECT_EQ(evaluate(m, d).accuracy, 1.0);
}

TEST(EvaluateTest, DoesNotMutateModel) {
  const Dataset d = synth_blobs(3, 4, 8, 8);
  const ModelState m = init_model({1, 8, 8}, toy_cnn(1, 8, 3, 4, 4), 3);
  const ModelState copy = m;
  evaluate(m, d);
  EXPECT_EQ(m, copy);
}

TEST(LrScheduleTest, ParseAndLookup) {
  const LrSchedule s = LrSchedule::parse("0.1:100,0.01:50,0.001:50");
  EXPECT_EQ(s.total_epochs(), 200u);
  EXPECT_EQ(s.rate_at_epoch(0), 0.1);
  EXPECT_EQ(s.rate_at_epoch(99), 0.1);
  EXPECT_EQ(s.rate_at_epoch(100), 0.01);
  EXPECT_EQ(s.rate_at_epoch(199), 0.001);
  EXPECT_EQ(s.rate_at_epoch(500), 0.001);
  EXPECT_EQ(LrSchedule::parse(s.to_string()).segments().size(), 3u);
}

TEST(LrScheduleTest, RejectsInvalidSegments) {
  EXPECT_THROW(LrSchedule::parse("0.1:0"), ArgumentError);
  EXPECT_THROW(LrSchedule::parse("0:5"), ArgumentError);
  EXPECT_THROW(LrSchedule::parse("fast"), ArgumentError);
  EXPECT_THROW(LrSchedule(std::vector<LrSchedule::Segment>{}), ArgumentError);
}

}  // namespace
}  // namespace deeptwist
