#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "uqbench/saliency.hpp"

using namespace uqbench;

namespace {

std::unique_ptr<NetworkClassifier<double>> small_net(std::uint64_t seed, std::size_t classes = 3) {
    auto net = std::make_unique<nn::Network<double>>();
    net->root().add<nn::Conv2d<double>>("conv", 3, 4, 3, 1, 1, true);
    net->root().add<nn::Tanh<double>>("");
    net->root().add<nn::AdaptiveAvgPool2d<double>>("", 2, 2);
    net->root().add<nn::Linear<double>>("fc", 16, classes);
    net->seed_parameters(seed);
    PreprocessSpec spec;
    spec.resize_short_side = 8;
    spec.center_crop = 8;
    return std::make_unique<NetworkClassifier<double>>("net" + std::to_string(seed), std::move(net), spec, classes);
}

Tensor<double> random_input(std::mt19937_64& rng) {
    Tensor<double> x({3, 8, 8});
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : x.storage()) v = n(rng);
    return x;
}

// Central differences of one class score.
Tensor<double> fd_gradient(NetworkClassifier<double>& m, const Tensor<double>& x, ClassIndex cls) {
    Tensor<double> g(x.shape());
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor<double> a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (m.logits(a)[cls] - m.logits(b)[cls]) / (2 * h);
    }
    return g;
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

SaliencyMap grid(std::size_t h, std::size_t w, std::vector<double> v) {
    SaliencyMap m;
    m.height = h;
    m.width = w;
    m.values = std::move(v);
    return m;
}

} // namespace

TEST(Saliency, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(51);
    auto m = small_net(1);
    for (int t = 0; t < 3; ++t) {
        const auto x = random_input(rng);
        const ClassIndex cls = static_cast<ClassIndex>(t % 3);
        const auto g = input_gradient(*m, x, cls);
        const auto fd = fd_gradient(*m, x, cls);
        for (std::size_t i = 0; i < g.size(); ++i) ASSERT_NEAR(g[i], fd[i], 1e-6 * (1 + std::abs(fd[i])));
        const auto map = vanilla_gradient(*m, x, cls, "img");
        const auto want = normalize_saliency(pixel_magnitude(fd));
        for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(map.values[i], want[i], 1e-5);
        EXPECT_EQ(map.height, 8u);
        EXPECT_EQ(map.image_id, "img");
        EXPECT_EQ(map.method, SaliencyMethod::vanilla);
    }
    EXPECT_THROW(input_gradient(*m, random_input(rng), 3), Error);
}

TEST(Saliency, PixelMagnitudeIsChannelMax) {
    Tensor<double> g({2, 1, 2}, std::vector<double>{-3, 1, 2, -4});
    EXPECT_EQ(pixel_magnitude(g), (std::vector<double>{3, 4}));
    EXPECT_THROW(pixel_magnitude(Tensor<double>({4})), Error);
}

TEST(Saliency, NormalizationInvariants) {
    EXPECT_TRUE(normalize_saliency({}).empty());
    EXPECT_EQ(normalize_saliency({0, 0, 0}), (std::vector<double>{0, 0, 0}));
    EXPECT_EQ(normalize_saliency({0, 0, 5}), (std::vector<double>{0, 0, 1}));
    std::vector<double> ramp(200);
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
    const auto n = normalize_saliency(ramp);
    // Nearest-rank 99th percentile of 0..199 is 197.
    EXPECT_DOUBLE_EQ(n[197], 1.0);
    EXPECT_DOUBLE_EQ(n[199], 1.0);
    EXPECT_DOUBLE_EQ(n[100], 100.0 / 197.0);
    std::mt19937_64 rng(52);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(1 + rng() % 300);
        std::exponential_distribution<double> e(1.0);
        for (auto& x : v) x = (rng() % 3 == 0) ? 0.0 : e(rng);
        const auto out = normalize_saliency(v);
        double peak = 0;
        for (double x : out) {
            ASSERT_GE(x, 0.0);
            ASSERT_LE(x, 1.0);
            peak = std::max(peak, x);
        }
        const bool any = std::any_of(v.begin(), v.end(), [](double x) { return x > 0; });
        ASSERT_EQ(peak, any ? 1.0 : 0.0);
    }
}

TEST(SmoothGrad, SingleNoiselessSampleEqualsVanilla) {
    std::mt19937_64 rng(53);
    auto m = small_net(2);
    const auto x = random_input(rng);
    const auto v = vanilla_gradient(*m, x, 1);
    const auto s = smoothgrad(*m, x, 1, SaliencyParams{1, 0.0, 9});
    EXPECT_EQ(s.values, v.values);
    EXPECT_EQ(s.method, SaliencyMethod::smoothgrad);
    EXPECT_THROW(smoothgrad(*m, x, 1, SaliencyParams{0, 0.1, 0}), Error);
    EXPECT_THROW(smoothgrad(*m, x, 1, SaliencyParams{1, -0.1, 0}), Error);
}

TEST(SmoothGrad, SeedDeterminism) {
    std::mt19937_64 rng(54);
    auto m = small_net(3);
    const auto x = random_input(rng);
    const SaliencyParams p{6, 0.2, 17};
    EXPECT_EQ(smoothgrad(*m, x, 0, p).values, smoothgrad(*m, x, 0, p).values);
    EXPECT_NE(smoothgrad(*m, x, 0, p).values, smoothgrad(*m, x, 0, SaliencyParams{6, 0.2, 18}).values);
    EXPECT_NE(sample_seed(0, 0), sample_seed(0, 1));
    EXPECT_NE(sample_seed(0, 1), sample_seed(1, 0));
}

TEST(SmoothGrad, MoreSamplesReduceSpread) {
    std::mt19937_64 rng(55);
    auto m = small_net(4);
    const auto x = random_input(rng);
    // Reference expectation from many samples.
    const auto ref = smoothgrad_raw(*m, x, 2, SaliencyParams{2048, 0.25, 999});
    double few = 0, many = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        few += squared_distance(smoothgrad_raw(*m, x, 2, SaliencyParams{4, 0.25, seed}), ref);
        many += squared_distance(smoothgrad_raw(*m, x, 2, SaliencyParams{64, 0.25, seed}), ref);
    }
    EXPECT_LT(many, few);
}

TEST(EnsembleSaliency, SingleAndIdenticalMembers) {
    std::mt19937_64 rng(56);
    auto a = small_net(5);
    auto a2 = small_net(5);
    const auto x = random_input(rng);
    const SaliencyParams p{3, 0.1, 4};
    const auto solo = smoothgrad(*a, x, 0, p);
    BasicClassifier<double>* one[] = {a.get()};
    const auto e1 = ensemble_saliency<double>(one, x, 0, p);
    ASSERT_EQ(e1.values.size(), solo.values.size());
    for (std::size_t i = 0; i < solo.values.size(); ++i) EXPECT_NEAR(e1.values[i], solo.values[i], 1e-12);
    EXPECT_EQ(e1.method, SaliencyMethod::ensemble_smoothgrad);
    BasicClassifier<double>* twins[] = {a.get(), a2.get()};
    const auto e2 = ensemble_saliency<double>(twins, x, 0, p);
    for (std::size_t i = 0; i < solo.values.size(); ++i) EXPECT_NEAR(e2.values[i], solo.values[i], 1e-12);
    EXPECT_THROW(ensemble_saliency<double>(std::span<BasicClassifier<double>* const>{}, x, 0, p), Error);
}

TEST(EnsembleSaliency, TwoMembersMatchMeanOfMaps) {
    std::mt19937_64 rng(57);
    auto a = small_net(6);
    auto b = small_net(7);
    const auto x = random_input(rng);
    const SaliencyParams p{2, 0.1, 1};
    const auto ma = smoothgrad(*a, x, 1, p), mb = smoothgrad(*b, x, 1, p);
    std::vector<double> mean(ma.values.size());
    double peak = 0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        mean[i] = (ma.values[i] + mb.values[i]) / 2;
        peak = std::max(peak, mean[i]);
    }
    BasicClassifier<double>* pair[] = {a.get(), b.get()};
    const auto e = ensemble_saliency<double>(pair, x, 1, p);
    for (std::size_t i = 0; i < mean.size(); ++i) EXPECT_NEAR(e.values[i], mean[i] / peak, 1e-12);
    EXPECT_THROW(average_maps({grid(2, 2, {0, 0, 0, 1}), grid(1, 4, {0, 0, 0, 1})}), Error);
}

TEST(Overlay, AlphaEndpointsAndSize) {
    std::mt19937_64 rng(58);
    const Image im = uqtest::random_image(rng, 16, 16);
    const auto map = grid(8, 8, std::vector<double>(64, 1.0));
    EXPECT_EQ(overlay(map, im, 0.0), im);
    const Image full = overlay(map, im, 1.0);
    EXPECT_EQ(full.width, 16);
    EXPECT_EQ(full.height, 16);
    const auto hot = heat_color(1.0);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(full.at(5, 9, c), hot[static_cast<std::size_t>(c)]);
    EXPECT_EQ(heat_color(0.0), (std::array<std::uint8_t, 3>{0, 0, 128}));
    EXPECT_EQ(heat_color(1.0), (std::array<std::uint8_t, 3>{128, 0, 0}));
    EXPECT_EQ(overlay(map, uqtest::random_image(rng, 16, 16, 1), 0.5).channels, 3);
    EXPECT_THROW(overlay(map, im, 1.5), Error);
    EXPECT_THROW(overlay(map, uqtest::random_image(rng, 16, 40), 0.5), Error);
    EXPECT_THROW(overlay(SaliencyMap{}, im, 0.5), Error);
}

TEST(GridCsv, RoundTrip) {
    uqtest::TempDir dir("grid");
    std::mt19937_64 rng(59);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(12);
    for (auto& x : v) x = u(rng);
    const auto map = grid(3, 4, v);
    write_grid_csv(dir / "g.csv", map);
    const auto back = read_grid_csv(dir / "g.csv");
    EXPECT_EQ(back.height, 3u);
    EXPECT_EQ(back.width, 4u);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(back.values[i], v[i], 5e-7);
    write_grid_csv(dir / "h.csv", back);
    EXPECT_EQ(uqtest::read_text(dir / "g.csv"), uqtest::read_text(dir / "h.csv"));
    EXPECT_EQ(uqtest::read_text(dir / "g.csv").substr(0, 4), "3,4\n");
    uqtest::write_text(dir / "bad.csv", "2,2\n0.1,0.2\n0.3\n");
    EXPECT_THROW(read_grid_csv(dir / "bad.csv"), Error);
    EXPECT_THROW(read_grid_csv(dir / "absent.csv"), Error);
}
