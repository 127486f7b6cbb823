#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "errdetect/common.hpp"
#include "errdetect/serialize.hpp"

namespace errdetect {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr int kCorrectClass = 0;
inline constexpr int kErrorClass = 1;

struct ModelShape {
    std::size_t wide_dim = 0;
    std::size_t pathways = 4;
    std::size_t embedding_dim = 50;
    std::size_t hidden = 64;
    std::size_t highway_layers = 2;

    std::size_t input_dim() const noexcept { return wide_dim + pathways * embedding_dim; }
    std::size_t classifier_input_dim() const noexcept { return wide_dim + pathways; }
    bool operator==(const ModelShape&) const = default;
};

struct TrainConfig {
    int epochs = 500;
    std::size_t batch_size = 5;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t hidden = 64;
    double gate_bias_init = -1.0;
    std::uint64_t seed = 0;
    int calibration_epochs = 100;
    double calibration_learning_rate = 0.01;
};

// Numerically safe logistic function.
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Wide-and-deep error classifier. Each embedding pathway is a stack of highway layers
// y = g * tanh(W_H x + b_H) + (1 - g) * x with g = sigmoid(W_T x + b_T), reduced to one scalar by a
// dense layer. The scalars join the wide features and feed a ReLU hidden layer and a 2-way softmax.
// All parameters live in one flat vector; blocks are addressed by offset.
class ErrorClassifier {
public:
    struct HighwayOffsets {
        std::size_t w_h, b_h, w_t, b_t;
    };
    struct PathwayOffsets {
        std::vector<HighwayOffsets> layers;
        std::size_t w_r, b_r;
    };

    ErrorClassifier() = default;
    explicit ErrorClassifier(ModelShape shape) : shape_(shape) { build_offsets(); }

    const ModelShape& shape() const noexcept { return shape_; }
    std::size_t num_parameters() const noexcept { return static_cast<std::size_t>(theta_.size()); }
    VectorXd& parameters() noexcept { return theta_; }
    const VectorXd& parameters() const noexcept { return theta_; }
    const std::vector<PathwayOffsets>& pathway_offsets() const noexcept { return pathways_; }

    // Scaled uniform fan-in init; gate biases start at `gate_bias` so early layers pass their input through.
    template <typename Rng>
    void initialize(Rng& rng, double gate_bias = -1.0) {
        theta_.setZero();
        auto fill = [&](std::size_t off, std::size_t rows, std::size_t cols) {
            const double r = 1.0 / std::sqrt(static_cast<double>(cols));
            std::uniform_real_distribution<double> u(-r, r);
            for (std::size_t i = 0; i < rows * cols; ++i) theta_[static_cast<Eigen::Index>(off + i)] = u(rng);
        };
        const auto e = shape_.embedding_dim;
        for (const auto& p : pathways_) {
            for (const auto& l : p.layers) {
                fill(l.w_h, e, e);
                fill(l.w_t, e, e);
                theta_.segment(static_cast<Eigen::Index>(l.b_t), static_cast<Eigen::Index>(e)).setConstant(gate_bias);
            }
            fill(p.w_r, 1, e);
        }
        fill(w1_, shape_.hidden, shape_.classifier_input_dim());
        fill(w2_, 2, shape_.hidden);
    }

    // Logits (2 x B) for a batch of model inputs (input_dim x B).
    MatrixXd logits(const MatrixXd& x) const {
        Cache c;
        forward(x, c);
        return c.logits;
    }

    static MatrixXd softmax(const MatrixXd& logits) {
        MatrixXd p(logits.rows(), logits.cols());
        for (Eigen::Index b = 0; b < logits.cols(); ++b) {
            const double m = logits.col(b).maxCoeff();
            p.col(b) = (logits.col(b).array() - m).exp().matrix();
            p.col(b) /= p.col(b).sum();
        }
        return p;
    }

    // Mean cross-entropy over the batch; writes d(loss)/d(theta) into grad.
    double loss_and_gradient(const MatrixXd& x, std::span<const int> labels, VectorXd& grad) const {
        Cache c;
        forward(x, c);
        const auto batch = static_cast<double>(x.cols());
        MatrixXd probs = softmax(c.logits);
        double loss = 0.0;
        MatrixXd dlogits = probs;
        for (Eigen::Index b = 0; b < x.cols(); ++b) {
            const auto y = labels[static_cast<std::size_t>(b)];
            loss -= std::log(std::max(probs(y, b), 1e-300));
            dlogits(y, b) -= 1.0;
        }
        dlogits /= batch;
        backward(c, dlogits, grad);
        return loss / batch;
    }

    double loss(const MatrixXd& x, std::span<const int> labels) const {
        MatrixXd probs = softmax(logits(x));
        double l = 0.0;
        for (Eigen::Index b = 0; b < x.cols(); ++b) l -= std::log(std::max(probs(labels[static_cast<std::size_t>(b)], b), 1e-300));
        return l / static_cast<double>(x.cols());
    }

    void save(io::BinaryWriter& w) const {
        w.u64(shape_.wide_dim);
        w.u64(shape_.pathways);
        w.u64(shape_.embedding_dim);
        w.u64(shape_.hidden);
        w.u64(shape_.highway_layers);
        w.f64s(theta_.data(), static_cast<std::size_t>(theta_.size()));
    }

    static ErrorClassifier load(io::BinaryReader& r) {
        ModelShape s;
        s.wide_dim = r.u64();
        s.pathways = r.u64();
        s.embedding_dim = r.u64();
        s.hidden = r.u64();
        s.highway_layers = r.u64();
        ErrorClassifier m(s);
        auto v = r.f64s();
        if (v.size() != m.num_parameters()) throw ParseError("classifier parameter count mismatch");
        m.theta_ = Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        return m;
    }

private:
    struct LayerCache {
        MatrixXd x, h, g;
    };
    struct PathwayCache {
        std::vector<LayerCache> layers;
        MatrixXd y;
    };
    struct Cache {
        std::vector<PathwayCache> pathways;
        MatrixXd z0, a1, h1, logits;
    };

    using CMap = Eigen::Map<const MatrixXd>;
    using CVMap = Eigen::Map<const VectorXd>;
    using MMap = Eigen::Map<MatrixXd>;
    using VMap = Eigen::Map<VectorXd>;

    CMap mat(std::size_t off, std::size_t rows, std::size_t cols) const {
        return CMap(theta_.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    }
    CVMap vec(std::size_t off, std::size_t n) const { return CVMap(theta_.data() + off, static_cast<Eigen::Index>(n)); }
    static MMap gmat(VectorXd& g, std::size_t off, std::size_t rows, std::size_t cols) {
        return MMap(g.data() + off, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    }
    static VMap gvec(VectorXd& g, std::size_t off, std::size_t n) {
        return VMap(g.data() + off, static_cast<Eigen::Index>(n));
    }

    void build_offsets() {
        std::size_t off = 0;
        auto take = [&](std::size_t n) {
            const auto o = off;
            off += n;
            return o;
        };
        const auto e = shape_.embedding_dim;
        pathways_.clear();
        for (std::size_t p = 0; p < shape_.pathways; ++p) {
            PathwayOffsets po;
            for (std::size_t l = 0; l < shape_.highway_layers; ++l)
                po.layers.push_back({take(e * e), take(e), take(e * e), take(e)});
            po.w_r = take(e);
            po.b_r = take(1);
            pathways_.push_back(po);
        }
        w1_ = take(shape_.hidden * shape_.classifier_input_dim());
        b1_ = take(shape_.hidden);
        w2_ = take(2 * shape_.hidden);
        b2_ = take(2);
        theta_ = VectorXd::Zero(static_cast<Eigen::Index>(off));
    }

    void forward(const MatrixXd& x, Cache& c) const {
        if (static_cast<std::size_t>(x.rows()) != shape_.input_dim())
            throw ConfigError("model input has " + std::to_string(x.rows()) + " rows, expected " +
                              std::to_string(shape_.input_dim()));
        const auto e = static_cast<Eigen::Index>(shape_.embedding_dim);
        const auto w = static_cast<Eigen::Index>(shape_.wide_dim);
        const auto batch = x.cols();
        c.z0.resize(static_cast<Eigen::Index>(shape_.classifier_input_dim()), batch);
        c.z0.topRows(w) = x.topRows(w);
        c.pathways.resize(shape_.pathways);
        for (std::size_t p = 0; p < shape_.pathways; ++p) {
            const auto& po = pathways_[p];
            auto& pc = c.pathways[p];
            pc.layers.resize(po.layers.size());
            MatrixXd cur = x.middleRows(w + static_cast<Eigen::Index>(p) * e, e);
            for (std::size_t l = 0; l < po.layers.size(); ++l) {
                const auto& lo = po.layers[l];
                auto& lc = pc.layers[l];
                lc.x = cur;
                lc.h = ((mat(lo.w_h, shape_.embedding_dim, shape_.embedding_dim) * cur).colwise() +
                        vec(lo.b_h, shape_.embedding_dim))
                           .array()
                           .tanh()
                           .matrix();
                lc.g = ((mat(lo.w_t, shape_.embedding_dim, shape_.embedding_dim) * cur).colwise() +
                        vec(lo.b_t, shape_.embedding_dim))
                           .unaryExpr([](double v) { return sigmoid(v); });
                cur = (lc.g.array() * lc.h.array() + (1.0 - lc.g.array()) * cur.array()).matrix();
            }
            pc.y = cur;
            c.z0.row(w + static_cast<Eigen::Index>(p)) =
                (vec(po.w_r, shape_.embedding_dim).transpose() * cur).array() + theta_[static_cast<Eigen::Index>(po.b_r)];
        }
        c.a1 = (mat(w1_, shape_.hidden, shape_.classifier_input_dim()) * c.z0).colwise() + vec(b1_, shape_.hidden);
        c.h1 = c.a1.cwiseMax(0.0);
        c.logits = (mat(w2_, 2, shape_.hidden) * c.h1).colwise() + vec(b2_, 2);
    }

    void backward(const Cache& c, const MatrixXd& dlogits, VectorXd& grad) const {
        grad.resize(theta_.size());  // every block is assigned below
        const auto e = shape_.embedding_dim;
        const auto w = static_cast<Eigen::Index>(shape_.wide_dim);

        gmat(grad, w2_, 2, shape_.hidden) = dlogits * c.h1.transpose();
        gvec(grad, b2_, 2) = dlogits.rowwise().sum();
        MatrixXd da1 = mat(w2_, 2, shape_.hidden).transpose() * dlogits;
        da1 = (c.a1.array() > 0.0).select(da1, 0.0);
        gmat(grad, w1_, shape_.hidden, shape_.classifier_input_dim()) = da1 * c.z0.transpose();
        gvec(grad, b1_, shape_.hidden) = da1.rowwise().sum();
        const MatrixXd dz0 = mat(w1_, shape_.hidden, shape_.classifier_input_dim()).transpose() * da1;

        for (std::size_t p = 0; p < shape_.pathways; ++p) {
            const auto& po = pathways_[p];
            const auto& pc = c.pathways[p];
            const Eigen::RowVectorXd dr = dz0.row(w + static_cast<Eigen::Index>(p));
            gvec(grad, po.w_r, e) = pc.y * dr.transpose();
            grad[static_cast<Eigen::Index>(po.b_r)] = dr.sum();
            MatrixXd dy = vec(po.w_r, e) * dr;
            for (std::size_t l = po.layers.size(); l-- > 0;) {
                const auto& lo = po.layers[l];
                const auto& lc = pc.layers[l];
                const MatrixXd dh = (dy.array() * lc.g.array()).matrix();
                const MatrixXd dg = (dy.array() * (lc.h.array() - lc.x.array())).matrix();
                const MatrixXd da = (dh.array() * (1.0 - lc.h.array().square())).matrix();
                const MatrixXd ds = (dg.array() * lc.g.array() * (1.0 - lc.g.array())).matrix();
                gmat(grad, lo.w_h, e, e) = da * lc.x.transpose();
                gvec(grad, lo.b_h, e) = da.rowwise().sum();
                gmat(grad, lo.w_t, e, e) = ds * lc.x.transpose();
                gvec(grad, lo.b_t, e) = ds.rowwise().sum();
                if (l > 0) {
                    dy = (dy.array() * (1.0 - lc.g.array())).matrix() + mat(lo.w_h, e, e).transpose() * da +
                         mat(lo.w_t, e, e).transpose() * ds;
                }
            }
        }
    }

    ModelShape shape_;
    VectorXd theta_;
    std::vector<PathwayOffsets> pathways_;
    std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
};

// Log-odds of the error class, z = logit_error - logit_correct, so sigmoid(z) is the softmax error probability.
inline VectorXd error_scores(const ErrorClassifier& m, const MatrixXd& x) {
    const MatrixXd l = m.logits(x);
    return (l.row(kErrorClass) - l.row(kCorrectClass)).transpose();
}

class AdamOptimizer {
public:
    AdamOptimizer(std::size_t n, double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(VectorXd::Zero(static_cast<Eigen::Index>(n))),
          v_(VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

    void step(VectorXd& theta, const VectorXd& grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
        theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
    }

private:
    double lr_, beta1_, beta2_, eps_;
    VectorXd m_, v_;
    long t_ = 0;
};

// Labeled model inputs, one column per example.
struct ExampleMatrix {
    MatrixXd inputs;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }

    static ExampleMatrix from_rows(const std::vector<std::vector<double>>& rows, std::vector<int> labels) {
        ExampleMatrix m;
        if (rows.size() != labels.size()) throw ConfigError("inputs and labels differ in length");
        const auto dim = rows.empty() ? 0 : rows.front().size();
        m.inputs.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != dim) throw ConfigError("ragged model inputs");
            m.inputs.col(static_cast<Eigen::Index>(i)) =
                Eigen::Map<const VectorXd>(rows[i].data(), static_cast<Eigen::Index>(dim));
        }
        m.labels = std::move(labels);
        return m;
    }
};

struct TrainReport {
    std::vector<double> epoch_loss;  // mean per-example loss of each epoch
};

// Joint training of pathways and classifier with Adam. Deterministic given cfg.seed.
inline TrainReport train(ErrorClassifier& model, const ExampleMatrix& data, const TrainConfig& cfg) {
    const auto n = data.size();
    const auto n_err = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), kErrorClass));
    if (n == 0 || n_err == 0 || n_err == n)
        throw SingleClassError("training data contains a single class; provide error examples or enable augmentation");
    if (static_cast<std::size_t>(data.inputs.rows()) != model.shape().input_dim())
        throw ConfigError("training inputs do not match the model input dimension");

    std::mt19937_64 rng(cfg.seed);
    AdamOptimizer adam(model.num_parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    VectorXd grad(static_cast<Eigen::Index>(model.num_parameters()));
    MatrixXd batch_x;
    std::vector<int> batch_y;
    TrainReport report;
    const auto bs = std::max<std::size_t>(cfg.batch_size, 1);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const auto len = std::min(bs, n - start);
            batch_x.resize(data.inputs.rows(), static_cast<Eigen::Index>(len));
            batch_y.resize(len);
            for (std::size_t k = 0; k < len; ++k) {
                batch_x.col(static_cast<Eigen::Index>(k)) = data.inputs.col(static_cast<Eigen::Index>(order[start + k]));
                batch_y[k] = data.labels[order[start + k]];
            }
            total += model.loss_and_gradient(batch_x, batch_y, grad) * static_cast<double>(len);
            adam.step(model.parameters(), grad);
        }
        report.epoch_loss.push_back(total / static_cast<double>(n));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Platt scaling

struct Calibrator {
    double a = 1.0;
    double b = 0.0;

    double probability(double z) const { return sigmoid(a * z + b); }
};

struct CalibrationConfig {
    int epochs = 100;
    std::size_t batch_size = 5;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
};

// Fits (a, b) by minimizing the negative log-likelihood of sigmoid(a z + b) with Adam mini-batches. Targets
// use Platt's prior correction (N+ + 1)/(N+ + 2) and 1/(N- + 2). Without both classes returns a = 1, b = 0.
inline Calibrator calibrate(std::span<const double> scores, std::span<const int> labels, const CalibrationConfig& cfg) {
    Calibrator c;
    if (scores.size() != labels.size()) throw ConfigError("scores and labels differ in length");
    const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kErrorClass));
    const auto n = scores.size();
    if (n_pos == 0 || n_pos == n) return c;
    const double t_pos = (static_cast<double>(n_pos) + 1.0) / (static_cast<double>(n_pos) + 2.0);
    const double t_neg = 1.0 / (static_cast<double>(n - n_pos) + 2.0);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    VectorXd theta(2), grad(2);
    theta << c.a, c.b;
    AdamOptimizer adam(2, cfg.learning_rate, 0.9, 0.999, 1e-8);
    const auto bs = std::max<std::size_t>(cfg.batch_size, 1);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += bs) {
            const auto len = std::min(bs, n - start);
            grad.setZero();
            for (std::size_t k = 0; k < len; ++k) {
                const auto i = order[start + k];
                const double t = labels[i] == kErrorClass ? t_pos : t_neg;
                const double err = sigmoid(theta[0] * scores[i] + theta[1]) - t;
                grad[0] += err * scores[i];
                grad[1] += err;
            }
            grad /= static_cast<double>(len);
            adam.step(theta, grad);
        }
    }
    c.a = theta[0];
    c.b = theta[1];
    return c;
}

}  // namespace errdetect
