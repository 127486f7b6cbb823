#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "errdetect/neural.hpp"

using namespace errdetect;

namespace {
ModelShape small_shape() {
    ModelShape s;
    s.wide_dim = 3;
    s.pathways = 2;
    s.embedding_dim = 4;
    s.hidden = 5;
    return s;
}

MatrixXd random_inputs(const ModelShape& s, Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd x(static_cast<Eigen::Index>(s.input_dim()), n);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    return x;
}
}  // namespace

TEST(ErrorClassifier, ZeroWeightsGiveEvenOdds) {
    ErrorClassifier m(small_shape());
    const auto p = ErrorClassifier::softmax(m.logits(random_inputs(small_shape(), 3, 1)));
    for (Eigen::Index b = 0; b < 3; ++b) {
        EXPECT_DOUBLE_EQ(p(0, b), 0.5);
        EXPECT_DOUBLE_EQ(p(1, b), 0.5);
    }
}

TEST(ErrorClassifier, SoftmaxNormalizes) {
    ErrorClassifier m(small_shape());
    std::mt19937_64 rng(3);
    m.initialize(rng);
    const auto p = ErrorClassifier::softmax(m.logits(random_inputs(small_shape(), 20, 2) * 5.0));
    for (Eigen::Index b = 0; b < p.cols(); ++b) {
        EXPECT_NEAR(p.col(b).sum(), 1.0, 1e-12);
        EXPECT_GT(p.col(b).minCoeff(), 0.0);
    }
    MatrixXd extreme(2, 1);
    extreme << 1000.0, -1000.0;
    EXPECT_NEAR(ErrorClassifier::softmax(extreme).sum(), 1.0, 1e-12);
}

TEST(ErrorClassifier, DimensionMismatchIsAnError) {
    ErrorClassifier m(small_shape());
    EXPECT_THROW(m.logits(MatrixXd::Zero(5, 1)), ConfigError);
}

TEST(ErrorClassifier, ForwardIsStateless) {
    ErrorClassifier m(small_shape());
    std::mt19937_64 rng(4);
    m.initialize(rng);
    const auto x = random_inputs(small_shape(), 6, 9);
    const MatrixXd whole = m.logits(x);
    for (Eigen::Index b = 5; b >= 0; --b) EXPECT_TRUE(m.logits(x.col(b)).isApprox(whole.col(b), 1e-14));
}

// Central differences over every parameter: covers the highway transform and gate, the reduction,
// the dense ReLU layer and softmax cross-entropy.
TEST(ErrorClassifier, GradientMatchesFiniteDifferences) {
    ErrorClassifier m(small_shape());
    std::mt19937_64 rng(5);
    m.initialize(rng, -0.3);
    // Move biases off zero so every ReLU unit and gate is exercised.
    std::normal_distribution<double> g(0.0, 0.3);
    for (Eigen::Index i = 0; i < m.parameters().size(); ++i) m.parameters()[i] += g(rng);
    const auto x = random_inputs(small_shape(), 5, 6);
    const std::vector<int> labels{0, 1, 1, 0, 1};

    VectorXd grad;
    m.loss_and_gradient(x, labels, grad);
    ASSERT_EQ(static_cast<std::size_t>(grad.size()), m.num_parameters());
    const double h = 1e-6;
    std::size_t checked = 0;
    for (Eigen::Index i = 0; i < m.parameters().size(); ++i) {
        const double keep = m.parameters()[i];
        m.parameters()[i] = keep + h;
        const double up = m.loss(x, labels);
        m.parameters()[i] = keep - h;
        const double down = m.loss(x, labels);
        m.parameters()[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double tol = std::max(1e-4 * std::max(std::abs(numeric), std::abs(grad[i])), 1e-6);
        EXPECT_NEAR(grad[i], numeric, tol) << "parameter " << i;
        ++checked;
    }
    EXPECT_EQ(checked, m.num_parameters());
}

TEST(ErrorClassifier, ClosedGateReproducesInput) {
    // With gate bias far negative and zero gate weights, each highway layer returns its input, so the
    // pathway output is the reduction applied to the raw embedding.
    ModelShape s = small_shape();
    ErrorClassifier m(s);
    std::mt19937_64 rng(8);
    m.initialize(rng, -800.0);
    for (const auto& p : m.pathway_offsets())
        for (const auto& l : p.layers)
            m.parameters().segment(static_cast<Eigen::Index>(l.w_t), static_cast<Eigen::Index>(s.embedding_dim * s.embedding_dim)).setZero();

    const auto x = random_inputs(s, 4, 10);
    // Replace the highway stack by an explicit reduction of the input and compare logits.
    MatrixXd z0(static_cast<Eigen::Index>(s.classifier_input_dim()), x.cols());
    z0.topRows(static_cast<Eigen::Index>(s.wide_dim)) = x.topRows(static_cast<Eigen::Index>(s.wide_dim));
    const auto& theta = m.parameters();
    for (std::size_t p = 0; p < s.pathways; ++p) {
        const auto& po = m.pathway_offsets()[p];
        const Eigen::Map<const VectorXd> wr(theta.data() + po.w_r, static_cast<Eigen::Index>(s.embedding_dim));
        const auto block = x.middleRows(static_cast<Eigen::Index>(s.wide_dim + p * s.embedding_dim),
                                        static_cast<Eigen::Index>(s.embedding_dim));
        z0.row(static_cast<Eigen::Index>(s.wide_dim + p)) = (wr.transpose() * block).array() + theta[static_cast<Eigen::Index>(po.b_r)];
    }
    const auto n_in = static_cast<Eigen::Index>(s.classifier_input_dim());
    const auto hidden = static_cast<Eigen::Index>(s.hidden);
    const std::size_t w1 = m.num_parameters() - (s.hidden * s.classifier_input_dim() + s.hidden + 2 * s.hidden + 2);
    const Eigen::Map<const MatrixXd> W1(theta.data() + w1, hidden, n_in);
    const Eigen::Map<const VectorXd> b1(theta.data() + w1 + hidden * n_in, hidden);
    const Eigen::Map<const MatrixXd> W2(theta.data() + w1 + hidden * n_in + hidden, 2, hidden);
    const Eigen::Map<const VectorXd> b2(theta.data() + w1 + hidden * n_in + 3 * hidden, 2);
    const MatrixXd h = ((W1 * z0).colwise() + b1).cwiseMax(0.0);
    const MatrixXd expected = (W2 * h).colwise() + b2;
    EXPECT_TRUE(m.logits(x).isApprox(expected, 1e-12));
}

namespace {
ExampleMatrix separable_set(std::size_t n, std::uint64_t seed) {
    const ModelShape s = small_shape();
    MatrixXd x = random_inputs(s, static_cast<Eigen::Index>(n), seed);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = i % 2 ? kErrorClass : kCorrectClass;
        x(0, static_cast<Eigen::Index>(i)) = labels[i] == kErrorClass ? 2.0 + x(0, static_cast<Eigen::Index>(i)) * 0.1
                                                                      : -2.0 + x(0, static_cast<Eigen::Index>(i)) * 0.1;
    }
    return {x, labels};
}
}  // namespace

TEST(Train, LossDropsOnSeparableData) {
    ErrorClassifier m(small_shape());
    std::mt19937_64 rng(1);
    m.initialize(rng);
    TrainConfig cfg;
    cfg.seed = 2;
    const auto report = train(m, separable_set(20, 3), cfg);
    ASSERT_EQ(report.epoch_loss.size(), 500u);
    EXPECT_LE(report.epoch_loss.back(), 0.1 * report.epoch_loss.front());
    // Train-set predictions agree with the labels.
    const auto data = separable_set(20, 3);
    const VectorXd z = error_scores(m, data.inputs);
    for (std::size_t i = 0; i < data.size(); ++i)
        EXPECT_EQ(z[static_cast<Eigen::Index>(i)] > 0.0, data.labels[i] == kErrorClass);
}

TEST(Train, DeterministicGivenSeed) {
    auto run = [] {
        ErrorClassifier m(small_shape());
        std::mt19937_64 rng(1);
        m.initialize(rng);
        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.seed = 4;
        train(m, separable_set(20, 3), cfg);
        return m.parameters();
    };
    const VectorXd a = run(), b = run();
    EXPECT_EQ(a.size(), b.size());
    EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(Train, DuplicatedExamplesKeepTheMeanLoss) {
    ErrorClassifier m(small_shape());
    std::mt19937_64 rng(1);
    m.initialize(rng);
    const auto data = separable_set(10, 3);
    MatrixXd doubled(data.inputs.rows(), 20);
    doubled << data.inputs, data.inputs;
    std::vector<int> labels = data.labels;
    labels.insert(labels.end(), data.labels.begin(), data.labels.end());
    EXPECT_NEAR(m.loss(doubled, labels), m.loss(data.inputs, data.labels), 1e-12);
}

TEST(Train, SingleClassIsAnError) {
    ErrorClassifier m(small_shape());
    auto data = separable_set(10, 3);
    std::fill(data.labels.begin(), data.labels.end(), kCorrectClass);
    EXPECT_THROW(train(m, data, TrainConfig{}), SingleClassError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    AdamOptimizer adam(2, 0.1, 0.9, 0.999, 1e-8);
    VectorXd theta = VectorXd::Zero(2), g(2);
    g << 3.0, -0.5;
    adam.step(theta, g);
    EXPECT_NEAR(theta[0], -0.1, 1e-6);
    EXPECT_NEAR(theta[1], 0.1, 1e-6);
}

namespace {
// Scores drawn so that sigmoid(z) is the true error probability.
std::pair<std::vector<double>, std::vector<int>> calibrated_scores(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 2.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> z(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = g(rng);
        y[i] = u(rng) < sigmoid(z[i]) ? kErrorClass : kCorrectClass;
    }
    return {z, y};
}
}  // namespace

TEST(Calibrate, RecoversIdentityOnCalibratedScores) {
    const auto [z, y] = calibrated_scores(4000, 12);
    const auto c = calibrate(z, y, {});
    EXPECT_NEAR(c.a, 1.0, 0.1);
    EXPECT_NEAR(c.b, 0.0, 0.1);
}

TEST(Calibrate, IdentityParametersArePlainSigmoid) {
    Calibrator c;
    for (double z : {-3.0, 0.0, 0.7}) EXPECT_DOUBLE_EQ(c.probability(z), sigmoid(z));
}

TEST(Calibrate, FlippedLabelsFlipTheSlope) {
    auto [z, y] = calibrated_scores(2000, 13);
    const auto c = calibrate(z, y, {});
    for (auto& l : y) l = 1 - l;
    const auto flipped = calibrate(z, y, {});
    EXPECT_GT(c.a, 0.0);
    EXPECT_LT(flipped.a, 0.0);
}

TEST(Calibrate, SingleClassFallsBack) {
    const std::vector<double> z{0.3, -1.0, 2.0};
    const std::vector<int> y{kErrorClass, kErrorClass, kErrorClass};
    const auto c = calibrate(z, y, {});
    EXPECT_DOUBLE_EQ(c.a, 1.0);
    EXPECT_DOUBLE_EQ(c.b, 0.0);
}

TEST(Calibrate, MonotoneWhenSlopePositive) {
    const auto [z, y] = calibrated_scores(500, 14);
    const auto c = calibrate(z, y, {});
    ASSERT_GT(c.a, 0.0);
    EXPECT_LT(c.probability(-1.0), c.probability(1.0));
}

TEST(Serialize, ClassifierRoundTrip) {
    ErrorClassifier m(small_shape());
    std::mt19937_64 rng(3);
    m.initialize(rng);
    io::BinaryWriter w;
    m.save(w);
    io::BinaryReader r(w.bytes());
    const auto back = ErrorClassifier::load(r);
    EXPECT_EQ(back.shape(), m.shape());
    EXPECT_TRUE((back.parameters().array() == m.parameters().array()).all());
}
