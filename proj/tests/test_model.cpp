#include <gtest/gtest.h>

#include <cstring>
#include <set>

#include "gradient_suite.hpp"
#include "msclstm/model.hpp"

using namespace msclstm;
using T32 = Tensor<float>;

namespace {

T32 input(std::size_t F, std::uint64_t seed) {
  Rng rng(seed);
  T32 x({F, 1});
  for (auto& v : x.data()) v = static_cast<float>(rng.normal());
  return x;
}

// Hand-derived shape arithmetic for the architecture.
constexpr std::size_t kParamsConvA = 3 * 1 * 32 + 32;
constexpr std::size_t kParamsConvB = 5 * 1 * 64 + 64;
constexpr std::size_t kParamsLstm1 = (96 + 64) * 256 + 256;
constexpr std::size_t kParamsLstm2 = (64 + 32) * 128 + 128;
constexpr std::size_t kParamsDense1 = 32 * 100 + 100;
constexpr std::size_t kParamsDenseOut = 100 * 1 + 1;
constexpr std::size_t kParamsTotal = kParamsConvA + kParamsConvB + kParamsLstm1 + kParamsLstm2 + kParamsDense1 + kParamsDenseOut;
static_assert(kParamsTotal == 57545);

}  // namespace

TEST(Model, ParameterCountMatchesShapeArithmetic) {
  const auto m = build_model<float>(8, 1);
  EXPECT_EQ(m.parameter_count(), kParamsTotal);
  EXPECT_EQ(m.layer("conv_a").parameter_count(), kParamsConvA);
  EXPECT_EQ(m.layer("conv_b").parameter_count(), kParamsConvB);
  EXPECT_EQ(m.layer("lstm_1").parameter_count(), kParamsLstm1);
  EXPECT_EQ(m.layer("lstm_2").parameter_count(), kParamsLstm2);
  EXPECT_EQ(m.layer("dense_1").parameter_count(), kParamsDense1);
  EXPECT_EQ(m.layer("dense_out").parameter_count(), kParamsDenseOut);
  EXPECT_EQ(m.tensor("lstm_1.W").shape(), (Shape{96, 256}));
  EXPECT_EQ(m.tensor("conv_b.kernel").shape(), (Shape{5, 1, 64}));
}

TEST(Model, TensorNamesUnique) {
  const auto m = build_model<float>(8, 1);
  std::set<std::string> names;
  std::size_t n = 0;
  m.for_each_tensor([&](const std::string& name, const T32&, bool) {
    names.insert(name);
    ++n;
  });
  EXPECT_EQ(names.size(), n);
  EXPECT_EQ(n, 14u);
  EXPECT_TRUE(names.count("conv_a.kernel"));
  EXPECT_TRUE(names.count("lstm_1.W"));
}

TEST(Model, BranchShapes) {
  const auto m = build_model<float>(8, 3);
  ForwardCache<float> cache;
  forward(m, input(8, 1), &cache);
  EXPECT_EQ(cache.lstm_1.x.shape(), (Shape{4, 96}));
  EXPECT_EQ(pooled_length(8), 4u);
  EXPECT_EQ(pooled_length(9), 4u);

  const auto m9 = build_model<float>(9, 3);
  ForwardCache<float> c9;
  forward(m9, input(9, 2), &c9);
  EXPECT_EQ(c9.lstm_1.x.shape(), (Shape{4, 96}));
}

TEST(Model, BuildIsDeterministic) {
  EXPECT_TRUE(bitwise_equal(build_model<float>(8, 5), build_model<float>(8, 5)));
  EXPECT_FALSE(bitwise_equal(build_model<float>(8, 5), build_model<float>(8, 6)));
}

TEST(Model, TooFewFeaturesRejected) {
  EXPECT_THROW(build_model<float>(1, 0), ConfigError);
  EXPECT_NO_THROW(build_model<float>(2, 0));
}

TEST(Model, ZeroWeightsGiveHalf) {
  auto m = build_model<float>(8, 1);
  m.for_each_tensor([](const std::string&, T32& t, bool) { t.fill(0.0f); });
  EXPECT_EQ(forward(m, input(8, 4)), 0.5f);
}

TEST(Model, OutputStrictlyInsideUnitInterval) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = build_model<float>(6 + s % 5, s);
    T32 x = input(6 + s % 5, s);
    for (auto& v : x.data()) v *= 50.0f;
    const float p = forward(m, x);
    EXPECT_GT(p, 0.0f);
    EXPECT_LT(p, 1.0f);
  }
}

TEST(Model, ForwardIsPure) {
  const auto m = build_model<float>(8, 2);
  const T32 x = input(8, 3);
  const float a = forward(m, x);
  ForwardCache<float> cache;
  const float b = forward(m, x, &cache);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(Model, InputShapeChecked) {
  const auto m = build_model<float>(8, 2);
  EXPECT_THROW(forward(m, T32({7, 1})), DimensionError);
  EXPECT_THROW(forward(m, T32({8})), DimensionError);
}

TEST(Model, ZeroUpstreamGivesZeroGradients) {
  const auto m = build_model<float>(8, 2);
  ForwardCache<float> cache;
  forward(m, input(8, 1), &cache);
  const auto g = backward(m, cache, 0.0f);
  for (const auto& t : g.tensors)
    for (float v : t.value.data()) EXPECT_EQ(v, 0.0f) << t.name;
}

TEST(Model, StaleCacheRejected) {
  const auto m = build_model<float>(8, 2);
  ForwardCache<float> cache;
  EXPECT_THROW(backward(m, cache, 1.0f), UsageError);
  forward(m, input(8, 1), &cache);
  backward(m, cache, 1.0f);
  EXPECT_THROW(backward(m, cache, 1.0f), UsageError);
}

TEST(Model, BackwardAccumulates) {
  const auto m = build_model<double>(6, 2);
  const Tensor<double> x = input(6, 1).cast<double>();
  GradientSet<double> once = zero_gradients(m), twice = zero_gradients(m);
  for (int i = 0; i < 2; ++i) {
    ForwardCache<double> c;
    forward(m, x, &c);
    backward(m, c, 1.0, twice);
  }
  ForwardCache<double> c;
  forward(m, x, &c);
  backward(m, c, 1.0, once);
  for (std::size_t k = 0; k < once.tensors.size(); ++k)
    for (std::size_t i = 0; i < once.at(k).size(); ++i)
      EXPECT_NEAR(twice.at(k)[i], 2 * once.at(k)[i], 1e-12);
}

TEST(Model, EndToEndGradientAllParameters) {
  // Every coordinate of every tensor, five seeds.
  const auto r = oracle::model_sweep(7000, 5, 6);
  EXPECT_EQ(r.configs, 5);
  EXPECT_LT(r.max_error, oracle::kGradientTolerance) << r.worst;
  EXPECT_LE(r.skipped * 100, r.checked) << r.skipped << " kink-crossing coordinates";
}

TEST(Model, PredictThresholdRule) {
  EXPECT_EQ(threshold_label(0.5, 0.5), 1);
  EXPECT_EQ(threshold_label(0.4999999, 0.5), 0);
  const auto m = build_model<float>(6, 9);
  T32 X({5, 6});
  Rng rng(1);
  for (auto& v : X.data()) v = static_cast<float>(rng.normal());
  for (const auto& p : predict(m, X, 1.0)) EXPECT_EQ(p.label, 0);
  for (const auto& p : predict(m, X, 0.0)) EXPECT_EQ(p.label, 1);
  EXPECT_THROW(predict(m, T32({5, 7})), DimensionError);
}

TEST(Model, PredictCommutesWithRowPermutation) {
  const auto m = build_model<float>(6, 9);
  T32 X({6, 6});
  Rng rng(2);
  for (auto& v : X.data()) v = static_cast<float>(rng.normal());
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  T32 P({6, 6});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) P.at(i, j) = X.at(perm[i], j);
  const auto a = predict(m, X), b = predict(m, P);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(b[i].probability, a[perm[i]].probability);
    EXPECT_EQ(b[i].label, a[perm[i]].label);
  }
}

TEST(Model, ValidateArchitecture) {
  auto m = build_model<float>(8, 1);
  EXPECT_NO_THROW(validate_architecture(m));
  m.layers[msclstm::kLstm1].weights[0].value = T32({95, 256});
  EXPECT_THROW(validate_architecture(m), DimensionError);
}
