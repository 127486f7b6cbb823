#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "errdetect/constraints.hpp"
#include "errdetect/dataset.hpp"
#include "errdetect/features.hpp"
#include "errdetect/neural.hpp"
#include "errdetect/noisy_channel.hpp"
#include "errdetect/serialize.hpp"

namespace errdetect {

struct DetectorConfig {
    PipelineConfig features;
    TrainConfig train;
    AugConfig augmentation;
    WeakLabelConfig weak_labels;
    bool augment = true;
    // Duplicate labeled error examples until the classes balance (resampling baseline).
    bool resample = false;
    // Weak supervision supplements the labeled error pairs when fewer than this many exist.
    std::size_t min_pairs = 20;
    // Target share of error examples in the final training data; replaces the p - n stopping rule.
    std::optional<double> target_error_ratio;
    // When non-empty, alpha is chosen by holdout F1 over these values.
    std::vector<double> alpha_grid;
    double threshold = 0.5;
};

struct CellPrediction {
    CellRef cell;
    bool error = false;
    double probability = 0.0;
};

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

// What the training run produced besides the model.
struct TrainingSummary {
    std::vector<LabeledPair> pairs;
    std::size_t labeled_pairs = 0;
    std::size_t weak_pairs = 0;
    TransformationSet phi;
    EmpiricalPolicy policy;
    std::vector<AugmentedExample> augmented;
    double alpha = 0.0;
    std::size_t train_examples = 0;
    std::vector<double> epoch_loss;
    std::vector<StageTiming> timings;
};

namespace detail {

class Stopwatch {
public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline double f1_of(std::size_t tp, std::size_t fp, std::size_t fn) {
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace detail

// Source pairs for transformation learning: labeled errors first, then weak labels if too few.
inline std::vector<LabeledPair> collect_pairs(const Dataset& d, const TrainingSet& train, const DetectorConfig& cfg,
                                              std::size_t* weak_count = nullptr) {
    std::vector<LabeledPair> pairs;
    for (const auto& e : train.entries())
        if (label_of(e) == CellLabel::error) pairs.push_back({e.truth, e.observed});
    std::size_t weak = 0;
    if (pairs.size() < cfg.min_pairs) {
        for (auto& p : weak_label_pairs(d, cfg.weak_labels)) {
            pairs.push_back(std::move(p));
            ++weak;
        }
    }
    if (weak_count) *weak_count = weak;
    return pairs;
}

// A trained and calibrated error detector bound to one dataset's schema and constraints.
class Detector {
public:
    static constexpr std::string_view kMagic = "ERRDETCK";
    static constexpr std::uint64_t kFormatVersion = 1;

    Detector() = default;

    // Full training pipeline. `holdout` calibrates the classifier and scores alpha candidates.
    static Detector train(const Dataset& d, const std::vector<DenialConstraint>& sigma, const TrainingSet& train_set,
                          const TrainingSet& holdout, const DetectorConfig& cfg, TrainingSummary* summary = nullptr) {
        return train(d, sigma, nullptr, train_set, holdout, cfg, summary);
    }

    // Same, reusing a pipeline already fitted on `d` with the same constraints and feature config.
    static Detector train(const Dataset& d, const std::vector<DenialConstraint>& sigma, const FeaturePipeline* fitted,
                          const TrainingSet& train_set, const TrainingSet& holdout, const DetectorConfig& cfg,
                          TrainingSummary* summary = nullptr) {
        TrainingSummary local;
        TrainingSummary& s = summary ? *summary : local;
        detail::Stopwatch clock;
        train_set.validate_against(d);
        holdout.validate_against(d);
        if (fitted && (fitted->mask() != cfg.features.mask ||
                       fitted->layout().fingerprint !=
                           FeatureLayout::make(d.schema(), sigma, cfg.features.mask,
                                               static_cast<std::size_t>(cfg.features.embedding.dims))
                               .fingerprint))
            throw ConfigError("pre-fitted feature pipeline does not match the training configuration");

        // Transformations and policy.
        if (cfg.augment) {
            s.pairs = collect_pairs(d, train_set, cfg, &s.weak_pairs);
            s.labeled_pairs = s.pairs.size() - s.weak_pairs;
            s.phi = build_phi(s.pairs);
            if (!s.phi.unique.empty()) s.policy = empirical_policy(s.phi.per_pair);
        }
        s.timings.push_back({"policy", clock.lap()});

        Detector det;
        det.pipeline_ = fitted ? *fitted : FeaturePipeline::fit(d, sigma, cfg.features);
        det.threshold_ = cfg.threshold;
        s.timings.push_back({"features", clock.lap()});

        Featurizer f(det.pipeline_, d);
        std::vector<std::vector<double>> base_rows;
        std::vector<int> base_labels;
        for (const auto& e : train_set.entries()) {
            base_rows.push_back(f.model_input(f.featurize(e.cell)));
            base_labels.push_back(label_of(e) == CellLabel::error ? kErrorClass : kCorrectClass);
        }
        ExampleMatrix hold = holdout_matrix(f, holdout);

        auto fit_with = [&](double alpha, TrainingSummary& out) {
            AugConfig aug = cfg.augmentation;
            aug.alpha = alpha;
            aug.target = augmentation_target(train_set, cfg);
            out.augmented.clear();
            if (cfg.augment && !s.policy.empty()) out.augmented = augment(train_set, s.policy, aug);
            auto rows = base_rows;
            auto labels = base_labels;
            for (const auto& a : out.augmented) {
                rows.push_back(f.model_input(f.featurize(a.cell, a.dirty)));
                labels.push_back(kErrorClass);
            }
            if (cfg.resample) oversample_errors(rows, labels, cfg.train.seed ^ 0x7e5aULL);
            out.train_examples = rows.size();
            ExampleMatrix data = ExampleMatrix::from_rows(rows, std::move(labels));
            ErrorClassifier model(shape_for(det.pipeline_.layout(), cfg.train));
            std::mt19937_64 init_rng(cfg.train.seed ^ 0x5eedULL);
            model.initialize(init_rng, cfg.train.gate_bias_init);
            out.epoch_loss = errdetect::train(model, data, cfg.train).epoch_loss;
            return model;
        };

        if (cfg.alpha_grid.empty() || !cfg.augment) {
            s.alpha = cfg.augmentation.alpha;
            det.model_ = fit_with(s.alpha, s);
        } else {
            double best_f1 = -1.0;
            for (double alpha : cfg.alpha_grid) {
                TrainingSummary trial;
                auto model = fit_with(alpha, trial);
                const VectorXd z = hold.size() ? error_scores(model, hold.inputs) : VectorXd();
                std::size_t tp = 0, fp = 0, fn = 0;
                for (Eigen::Index i = 0; i < z.size(); ++i) {
                    const bool pred = sigmoid(z[i]) >= cfg.threshold;
                    const bool truth = hold.labels[static_cast<std::size_t>(i)] == kErrorClass;
                    tp += pred && truth;
                    fp += pred && !truth;
                    fn += !pred && truth;
                }
                const double f1 = detail::f1_of(tp, fp, fn);
                if (f1 > best_f1) {
                    best_f1 = f1;
                    det.model_ = std::move(model);
                    s.alpha = alpha;
                    s.augmented = std::move(trial.augmented);
                    s.train_examples = trial.train_examples;
                    s.epoch_loss = std::move(trial.epoch_loss);
                }
            }
        }
        s.timings.push_back({"train", clock.lap()});

        CalibrationConfig cc;
        cc.epochs = cfg.train.calibration_epochs;
        cc.batch_size = cfg.train.batch_size;
        cc.learning_rate = cfg.train.calibration_learning_rate;
        cc.seed = cfg.train.seed ^ 0xca1bULL;
        if (hold.size()) {
            const VectorXd z = error_scores(det.model_, hold.inputs);
            det.calibrator_ = calibrate(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())),
                                        hold.labels, cc);
        }
        s.timings.push_back({"calibrate", clock.lap()});
        return det;
    }

    const FeaturePipeline& pipeline() const noexcept { return pipeline_; }
    const ErrorClassifier& model() const noexcept { return model_; }
    const Calibrator& calibrator() const noexcept { return calibrator_; }
    double threshold() const noexcept { return threshold_; }
    void set_threshold(double t) { threshold_ = t; }

    std::vector<CellPrediction> predict(const Dataset& d, const std::vector<CellRef>& cells) const {
        check_compatible(d);
        Featurizer f(pipeline_, d);
        std::vector<CellPrediction> out;
        out.reserve(cells.size());
        constexpr std::size_t chunk = 512;
        MatrixXd x(static_cast<Eigen::Index>(model_.shape().input_dim()), 0);
        for (std::size_t start = 0; start < cells.size(); start += chunk) {
            const auto len = std::min(chunk, cells.size() - start);
            x.resize(x.rows(), static_cast<Eigen::Index>(len));
            for (std::size_t k = 0; k < len; ++k) {
                const auto in = f.model_input(f.featurize(cells[start + k]));
                x.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const VectorXd>(in.data(), x.rows());
            }
            const VectorXd z = error_scores(model_, x);
            for (std::size_t k = 0; k < len; ++k) {
                const double q = std::clamp(calibrator_.probability(z[static_cast<Eigen::Index>(k)]), 1e-15, 1.0 - 1e-15);
                out.push_back({cells[start + k], q >= threshold_, q});
            }
        }
        return out;
    }

    // Layout fingerprint the dataset would produce with this detector's constraints and feature mask.
    std::uint64_t fingerprint_for(const Dataset& d) const {
        std::vector<DenialConstraint> sigma;
        for (const auto& dc : pipeline_.constraints()) sigma.push_back(parse_dc(dc.text, d.schema(), dc.id));
        return FeatureLayout::make(d.schema(), sigma, pipeline_.mask(), pipeline_.layout().embedding_dim).fingerprint;
    }

    void check_compatible(const Dataset& d) const {
        std::uint64_t got = 0;
        try {
            got = fingerprint_for(d);
        } catch (const ParseError&) {
            got = 0;
        }
        if (got != pipeline_.layout().fingerprint)
            throw ConfigError("layout mismatch: checkpoint " + hex(pipeline_.layout().fingerprint) + " vs dataset " +
                              hex(got));
    }

    void save(const std::string& path) const {
        io::BinaryWriter w;
        w.str(std::string(kMagic));
        w.u64(kFormatVersion);
        w.u64(pipeline_.layout().fingerprint);
        pipeline_.save(w);
        model_.save(w);
        w.f64(calibrator_.a);
        w.f64(calibrator_.b);
        w.f64(threshold_);
        w.save(path);
    }

    static Detector load(const std::string& path) {
        auto r = io::BinaryReader::from_file(path);
        if (r.str() != kMagic) throw ParseError("'" + path + "' is not a detector checkpoint");
        if (const auto v = r.u64(); v != kFormatVersion)
            throw ParseError("unsupported checkpoint version " + std::to_string(v));
        const auto fingerprint = r.u64();
        Detector det;
        det.pipeline_ = FeaturePipeline::load(r);
        if (det.pipeline_.layout().fingerprint != fingerprint) throw ParseError("checkpoint fingerprint mismatch");
        det.model_ = ErrorClassifier::load(r);
        if (!(det.model_.shape() == shape_for(det.pipeline_.layout(), det.model_.shape().hidden)))
            throw ParseError("classifier shape does not match the pipeline layout");
        det.calibrator_.a = r.f64();
        det.calibrator_.b = r.f64();
        det.threshold_ = r.f64();
        return det;
    }

    static ModelShape shape_for(const FeatureLayout& l, std::size_t hidden) {
        ModelShape s;
        s.wide_dim = l.wide_dim();
        s.pathways = l.pathways.size();
        s.embedding_dim = l.embedding_dim;
        s.hidden = hidden;
        return s;
    }
    static ModelShape shape_for(const FeatureLayout& l, const TrainConfig& cfg) { return shape_for(l, cfg.hidden); }

private:
    static std::string hex(std::uint64_t v) {
        char buf[19];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
        return buf;
    }

    static ExampleMatrix holdout_matrix(const Featurizer& f, const TrainingSet& holdout) {
        std::vector<std::vector<double>> rows;
        std::vector<int> labels;
        for (const auto& e : holdout.entries()) {
            rows.push_back(f.model_input(f.featurize(e.cell)));
            labels.push_back(label_of(e) == CellLabel::error ? kErrorClass : kCorrectClass);
        }
        if (rows.empty()) return {};
        return ExampleMatrix::from_rows(rows, std::move(labels));
    }

    static void oversample_errors(std::vector<std::vector<double>>& rows, std::vector<int>& labels,
                                  std::uint64_t seed) {
        std::vector<std::size_t> errors;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == kErrorClass) errors.push_back(i);
        const auto n_correct = labels.size() - errors.size();
        if (errors.empty() || errors.size() >= n_correct) return;
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, errors.size() - 1);
        for (std::size_t k = errors.size(); k < n_correct; ++k) {
            rows.push_back(rows[errors[pick(rng)]]);
            labels.push_back(kErrorClass);
        }
    }

    static std::optional<std::size_t> augmentation_target(const TrainingSet& t, const DetectorConfig& cfg) {
        if (!cfg.target_error_ratio) return std::nullopt;
        const double r = *cfg.target_error_ratio;
        if (!(r > 0.0 && r < 1.0)) throw ConfigError("target error ratio must be in (0,1)");
        const double p = static_cast<double>(t.count(CellLabel::correct));
        const double n = static_cast<double>(t.count(CellLabel::error));
        const double wanted = std::round(r * p / (1.0 - r));
        return wanted > n ? static_cast<std::size_t>(wanted - n) : 0;
    }

    FeaturePipeline pipeline_;
    ErrorClassifier model_;
    Calibrator calibrator_;
    double threshold_ = 0.5;
};

// Cells of d not covered by `exclude`, in row-major order.
inline std::vector<CellRef> cells_excluding(const Dataset& d, const std::vector<const TrainingSet*>& exclude) {
    std::unordered_set<CellRef, CellRefHash> skip;
    for (const auto* t : exclude)
        for (const auto& e : t->entries()) skip.insert(e.cell);
    std::vector<CellRef> out;
    for (std::size_t t = 0; t < d.num_tuples(); ++t)
        for (std::size_t a = 0; a < d.num_attributes(); ++a)
            if (!skip.count({t, a})) out.push_back({t, a});
    return out;
}

}  // namespace errdetect
