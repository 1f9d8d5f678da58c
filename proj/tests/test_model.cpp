#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "pzsl/gradcheck_suite.hpp"
#include "pzsl/model.hpp"

using namespace pzsl;
using Inputs = std::vector<Tensor<double>>;

namespace {

Array<double> random_text(std::size_t k, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    auto a = random_uniform<double>({k, d}, rng);
    normalize_rows(a);
    return a;
}

ModelParams<double> small_model(std::size_t layers = 1, std::size_t heads = 1, bool zero_head = false) {
    ModelConfig mc;
    mc.layers = layers;
    mc.heads = heads;
    mc.zero_head = zero_head;
    return init_model<double>(random_text(6, 6, 1), 4, mc, 2);
}

Array<double> permute_rows(const Array<double>& a, const std::vector<std::size_t>& perm) {
    return gather_rows(a, std::span<const std::size_t>(perm));
}

void expect_near(const Array<double>& a, const Array<double>& b, double tol) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

} // namespace

TEST(InitModel, LabelsStartAtTextEmbeddings) {
    const auto text = random_text(5, 8, 3);
    const auto model = init_model<double>(text, 3, ModelConfig{}, 0);
    EXPECT_EQ(model.labels.value(), text);
    EXPECT_EQ(model.layers.size(), 3u);  // default depth
    EXPECT_EQ(model.hidden, 32u);
    EXPECT_EQ(model.head_weight.shape(), (Shape{8, 3}));
}

TEST(InitModel, SeedDeterminism) {
    const auto text = random_text(5, 8, 3);
    const auto a = init_model<double>(text, 3, ModelConfig{}, 9).named_parameters();
    const auto b = init_model<double>(text, 3, ModelConfig{}, 9).named_parameters();
    const auto c = init_model<double>(text, 3, ModelConfig{}, 10).named_parameters();
    ASSERT_EQ(a.size(), b.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].name, b[i].name);
        EXPECT_EQ(a[i].tensor.value(), b[i].tensor.value());
        any_diff = any_diff || a[i].tensor.value() != c[i].tensor.value();
    }
    EXPECT_TRUE(any_diff);
}

TEST(InitModel, WeightScaleAndZeroHead) {
    const auto model = init_model<double>(random_text(4, 16, 3), 2, ModelConfig{}, 1);
    for (double w : model.layers[0].sa_query.value().data()) EXPECT_LE(std::abs(w), 0.25);
    for (double w : model.head_weight.value().data()) EXPECT_EQ(w, 0.0);
    for (double g : model.layers[0].sa_norm_gain.value().data()) EXPECT_EQ(g, 1.0);
}

TEST(InitModel, RejectsDegenerateShapes) {
    EXPECT_THROW(init_model<double>(random_text(1, 4, 0), 1, ModelConfig{}, 0), ParameterError);
    EXPECT_THROW(init_model<double>(random_text(3, 1, 0), 2, ModelConfig{}, 0), ParameterError);
    EXPECT_THROW(init_model<double>(random_text(3, 4, 0), 4, ModelConfig{}, 0), ParameterError);
    ModelConfig mc;
    mc.heads = 3;
    EXPECT_THROW(init_model<double>(random_text(3, 4, 0), 2, mc, 0), ParameterError);
}

TEST(InitModel, CloneIsIndependent) {
    auto model = small_model();
    auto copy = model.clone();
    copy.head_bias.mutable_value()[0] = 42.0;
    EXPECT_EQ(model.head_bias.value()[0], 0.0);
}

TEST(SelfAttention, SingleRowIsResidualPlusProjectedValue) {
    const auto model = small_model();
    const auto& l = model.layers[0];
    const Array<double> p{{0.1, -0.4, 0.3, 0.9, -0.2, 0.5}};
    const auto out = self_attention(Tensor<double>::constant(p), l).value();
    const auto value = matmul(matmul(p, l.sa_value.value()), l.sa_out.value());
    Array<double> pre = p;
    pre += value;
    const auto ref = layer_norm(Tensor<double>::constant(pre), l.sa_norm_gain, l.sa_norm_bias).value();
    expect_near(out, ref, 1e-14);
}

TEST(SelfAttention, ShapeAndDuplicateRows) {
    const auto model = small_model();
    Rng rng(5);
    auto p = random_uniform<double>({4, 6}, rng);
    std::copy(p.row(0).begin(), p.row(0).end(), p.row(2).begin());
    const auto out = self_attention(Tensor<double>::constant(p), model.layers[0]).value();
    EXPECT_EQ(out.shape(), p.shape());
    for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(out(0, j), out(2, j));
}

TEST(SelfAttention, PermutationEquivariant) {
    const auto model = small_model(1, 2);
    Rng rng(6);
    const auto p = random_uniform<double>({5, 6}, rng);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    const auto a = self_attention(Tensor<double>::constant(permute_rows(p, perm)), model.layers[0], 2).value();
    const auto b = permute_rows(self_attention(Tensor<double>::constant(p), model.layers[0], 2).value(), perm);
    expect_near(a, b, 1e-13);
}

TEST(KMeansAttention, HandComputedIdentityCase) {
    auto model = init_model<double>(Array<double>{{1, 0}, {0, 1}}, 2, ModelConfig{1}, 0);
    auto& l = model.layers[0];
    l.ca_query = Tensor<double>::parameter(Array<double>::identity(2));
    l.ca_key = Tensor<double>::parameter(Array<double>::identity(2));
    l.ca_value = Tensor<double>::parameter(Array<double>::identity(2));
    GumbelSettings<double> g;  // no rng, no fixed noise: noise disabled
    g.hard = true;
    const auto out = kmeans_attention(model.labels, Tensor<double>::constant({{1, 0}, {0, 1}}), l, g);
    EXPECT_EQ(out.assignment.value(), Array<double>::identity(2));
    const auto residual = add(model.labels, out.update).value();
    EXPECT_EQ(residual, (Array<double>{{2, 0}, {0, 2}}));
}

TEST(KMeansAttention, EmptyClustersGetZeroUpdate) {
    auto model = small_model();
    auto& l = model.layers[0];
    // Label 2 dominates every instance's scores.
    auto labels = model.labels.value();
    Rng rng(7);
    auto p = random_uniform<double>({5, 6}, rng, 0.01);
    for (std::size_t i = 0; i < 5; ++i) p(i, 0) = 1.0;
    l.ca_key = Tensor<double>::parameter(Array<double>::identity(6));
    l.ca_query = Tensor<double>::parameter(Array<double>::identity(6));
    labels.fill(0.0);
    labels(2, 0) = 50.0;
    GumbelSettings<double> g;
    const auto out = kmeans_attention(Tensor<double>::constant(labels), Tensor<double>::constant(p), l, g);
    const auto& a = out.assignment.value();
    const auto v = matmul(p, l.ca_value.value());
    for (std::size_t k = 0; k < 6; ++k) {
        for (std::size_t j = 0; j < 6; ++j) {
            double expected = 0.0;
            if (k == 2) {
                for (std::size_t i = 0; i < 5; ++i) expected += v(i, j);
            }
            EXPECT_NEAR(out.update.value()(k, j), expected, 1e-12);
        }
        for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a(k, i), k == 2 ? 1.0 : 0.0);
    }
}

TEST(KMeansAttention, OutputIsKByDForAnyBatch) {
    const auto model = small_model();
    Rng rng(8);
    for (std::size_t b : {1u, 2u, 7u, 33u}) {
        GumbelSettings<double> g;
        g.rng = &rng;
        const auto out = kmeans_attention(model.labels, Tensor<double>::constant(random_uniform<double>({b, 6}, rng)),
                                          model.layers[0], g);
        EXPECT_EQ(out.update.shape(), (Shape{6, 6}));
        EXPECT_EQ(out.assignment.shape(), (Shape{6, b}));
    }
}

TEST(KMeansAttention, AxisControlsWhichSideIsOneHot) {
    const auto model = small_model();
    Rng rng(9);
    const auto p = Tensor<double>::constant(random_uniform<double>({5, 6}, rng));
    GumbelSettings<double> g;
    g.rng = &rng;
    const auto by_label = kmeans_attention(model.labels, p, model.layers[0], g).assignment.value();
    for (std::size_t i = 0; i < 5; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < 6; ++k) s += by_label(k, i);
        EXPECT_EQ(s, 1.0);
    }
    g.axis = AssignAxis::instance;
    const auto by_inst = kmeans_attention(model.labels, p, model.layers[0], g).assignment.value();
    for (std::size_t k = 0; k < 6; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < 5; ++i) s += by_inst(k, i);
        EXPECT_EQ(s, 1.0);
    }
}

TEST(KMeansAttention, DimensionMismatchThrows) {
    const auto model = small_model();
    GumbelSettings<double> g;
    EXPECT_THROW(kmeans_attention(model.labels, Tensor<double>::constant(Array<double>::matrix(3, 4)),
                                  model.layers[0], g),
                 DimensionError);
}

TEST(Forward, PredictionsAreRowStochastic) {
    const auto model = small_model(3);
    Rng rng(10);
    ForwardOptions<double> opts;
    opts.gumbel.rng = &rng;
    const auto out = forward(Tensor<double>::constant(random_uniform<double>({9, 6}, rng)), model, opts);
    EXPECT_EQ(out.predictions.shape(), (Shape{9, 4}));
    EXPECT_EQ(out.labels.shape(), (Shape{6, 6}));
    EXPECT_EQ(out.assignments.size(), 3u);
    for (std::size_t i = 0; i < 9; ++i) {
        double s = 0.0;
        for (double v : out.predictions.value().row(i)) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Forward, ZeroHeadGivesUniformPredictions) {
    const auto model = small_model(2, 1, true);
    Rng rng(11);
    ForwardOptions<double> opts;
    opts.gumbel.rng = &rng;
    const auto out = forward(Tensor<double>::constant(random_uniform<double>({4, 6}, rng)), model, opts);
    for (double v : out.predictions.value().data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Forward, NoMiningClassifiesRawEmbeddings) {
    const auto model = small_model(2);
    Rng rng(12);
    const auto x = random_uniform<double>({3, 6}, rng);
    ForwardOptions<double> opts;
    opts.mining = false;
    const auto out = forward(Tensor<double>::constant(x), model, opts);
    EXPECT_EQ(out.instances.value(), x);
    EXPECT_EQ(out.labels.value(), model.labels.value());
    EXPECT_TRUE(out.assignments.empty());
    const auto ref = softmax_rows(add_bias(Tensor<double>::constant(matmul(x, model.head_weight.value())),
                                           model.head_bias)).value();
    expect_near(out.predictions.value(), ref, 1e-15);
}

TEST(Forward, PermutationEquivariantWithFixedNoise) {
    const auto model = small_model(2);
    Rng rng(13);
    const auto x = random_uniform<double>({6, 6}, rng);
    std::vector<Array<double>> noise{gumbel_noise<double>(6, 6, rng), gumbel_noise<double>(6, 6, rng)};
    const std::vector<std::size_t> perm{5, 2, 0, 4, 1, 3};
    std::vector<Array<double>> noise_perm{permute_rows(noise[0], perm), permute_rows(noise[1], perm)};
    for (bool hard : {false, true}) {
        ForwardOptions<double> a_opts, b_opts;
        a_opts.gumbel.hard = b_opts.gumbel.hard = hard;
        a_opts.layer_noise = &noise;
        b_opts.layer_noise = &noise_perm;
        const auto a = forward(Tensor<double>::constant(x), model, a_opts);
        const auto b = forward(Tensor<double>::constant(permute_rows(x, perm)), model, b_opts);
        expect_near(b.instances.value(), permute_rows(a.instances.value(), perm), 1e-12);
        expect_near(b.predictions.value(), permute_rows(a.predictions.value(), perm), 1e-12);
        expect_near(b.labels.value(), a.labels.value(), 1e-12);
    }
}

TEST(Forward, WrongDimensionThrows) {
    const auto model = small_model();
    EXPECT_THROW(forward(Tensor<double>::constant(Array<double>::matrix(2, 5)), model, ForwardOptions<double>{}),
                 DimensionError);
}

TEST(GradcheckSuite, EveryEntryWithinTolerance) {
    for (std::uint64_t seed : {1u, 2u}) {
        const auto entries = run_gradcheck_suite(seed);
        ASSERT_EQ(entries.size(), 8u);
        for (const auto& e : entries) EXPECT_LE(e.max_rel_error, 5e-3) << e.name << " seed " << seed;
    }
}

TEST(GradcheckSuite, MultiHeadSelfAttention) {
    const auto model = small_model(1, 2);
    const auto& l = model.layers[0];
    const double err = gradcheck<double>(
        [&](Inputs& x) {
            MiningLayer<double> layer = l;
            layer.sa_query = x[1];
            layer.sa_out = x[2];
            return self_attention(x[0], layer, 2);
        },
        std::vector<Array<double>>{random_text(5, 6, 4), l.sa_query.value(), l.sa_out.value()}, 4);
    EXPECT_LE(err, 5e-3);
}
