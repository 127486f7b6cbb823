// errdetect: command-line front end.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "errdetect/config.hpp"
#include "errdetect/detector.hpp"
#include "errdetect/harness.hpp"

using namespace errdetect;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

void require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ConfigError("missing required input " + flag);
    if (!fs::exists(value)) throw ConfigError(flag + " '" + value + "' does not exist");
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
}

std::string report_dir(const RunConfig& c) {
    if (!c.paths.report_dir.empty()) return c.paths.report_dir;
    if (const char* env = std::getenv("ERRDETECT_REPORT_DIR"); env && *env) return env;
    return "reports";
}

std::vector<DenialConstraint> constraints_for(const RunConfig& c, const Dataset& d) {
    if (c.paths.constraints.empty()) return {};
    require(c.paths.constraints, "--constraints");
    return load_constraints(c.paths.constraints, d.schema());
}

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

int cmd_train(const RunConfig& c) {
    require(c.paths.data, "--data");
    require(c.paths.labels, "--labels");
    if (c.paths.model.empty()) throw ConfigError("missing required output --model");
    const auto d = load_csv(c.paths.data);
    const auto sigma = constraints_for(c, d);
    const auto labels = load_truth(c.paths.labels, d);
    const auto [train, holdout] = holdout_split(labels, c.holdout_fraction, c.seed);
    const auto cfg = c.detector();
    if (cfg.augment && cfg.augmentation.alpha == 0.0) warn("alpha is 0; no synthetic errors will be generated");

    TrainingSummary s;
    const auto det = Detector::train(d, sigma, train, holdout, cfg, &s);
    det.save(c.paths.model);

    std::cout << "labeled cells " << train.size() << " train, " << holdout.size() << " holdout ("
              << train.count(CellLabel::error) << " errors)\n";
    std::cout << "pairs " << s.pairs.size() << " (" << s.weak_pairs << " weak), transformations "
              << s.phi.unique.size() << ", augmented " << s.augmented.size() << " (alpha " << s.alpha << ")\n";
    std::cout << "training examples " << s.train_examples;
    if (!s.epoch_loss.empty()) std::cout << ", final loss " << fixed(s.epoch_loss.back());
    std::cout << "\n";
    for (const auto& t : s.timings) std::cout << "stage " << t.stage << " " << fixed(t.seconds, 3) << "s\n";
    std::cout << "wrote " << c.paths.model << "\n";
    return kOk;
}

int cmd_detect(const RunConfig& c) {
    require(c.paths.data, "--data");
    require(c.paths.model, "--model");
    const auto d = load_csv(c.paths.data);
    auto det = Detector::load(c.paths.model);
    if (c.threshold != 0.5) det.set_threshold(c.threshold);
    TrainingSet labels;
    if (!c.paths.labels.empty()) {
        require(c.paths.labels, "--labels");
        labels = load_truth(c.paths.labels, d);
    }
    const auto preds = det.predict(d, cells_excluding(d, {&labels}));
    std::string out = "tuple_index,attribute,label,probability\n";
    char prob[32];
    for (const auto& p : preds) {
        std::snprintf(prob, sizeof prob, "%.17g", p.probability);
        out += std::to_string(p.cell.tuple) + "," + csv::quote(d.schema().name(p.cell.attr)) + "," +
               (p.error ? "error" : "correct") + "," + prob + "\n";
    }
    write_text(c.paths.output, out);
    std::size_t flagged = 0;
    for (const auto& p : preds) flagged += p.error;
    std::cerr << "scored " << preds.size() << " cells, " << flagged << " flagged as errors\n";
    return kOk;
}

int cmd_augment(const RunConfig& c) {
    require(c.paths.data, "--data");
    require(c.paths.labels, "--labels");
    const auto d = load_csv(c.paths.data);
    const auto labels = load_truth(c.paths.labels, d);
    const auto cfg = c.detector();
    if (cfg.augmentation.alpha == 0.0) warn("alpha is 0; no synthetic errors will be generated");
    const auto pairs = collect_pairs(d, labels, cfg);
    const auto phi = build_phi(pairs);
    if (phi.unique.empty()) throw ConfigError("no transformations could be learned from the labels");
    auto aug = cfg.augmentation;
    if (c.target_error_ratio) {
        const double r = *c.target_error_ratio;
        const double p = static_cast<double>(labels.count(CellLabel::correct));
        const double n = static_cast<double>(labels.count(CellLabel::error));
        const double wanted = std::round(r * p / (1.0 - r));
        aug.target = wanted > n ? static_cast<std::size_t>(wanted - n) : 0;
    }
    const auto out = augment(labels, empirical_policy(phi.per_pair), aug);
    std::string text = "tuple_index,attribute,clean_value,dirty_value\n";
    for (const auto& a : out)
        text += std::to_string(a.cell.tuple) + "," + csv::quote(d.schema().name(a.cell.attr)) + "," +
                csv::quote(a.clean) + "," + csv::quote(a.dirty) + "\n";
    write_text(c.paths.output, text);
    std::cerr << "generated " << out.size() << " synthetic errors from " << phi.unique.size() << " transformations\n";
    return kOk;
}

int cmd_inject(const RunConfig& c) {
    require(c.paths.data, "--data");
    if (c.paths.output.empty()) throw ConfigError("missing required output --output");
    const auto clean = load_csv(c.paths.data);
    InjectionSpec spec;
    spec.error_rate = c.error_rate;
    spec.mix = c.mix();
    spec.seed = c.seed;
    const auto inj = inject_errors(clean, spec);
    write_csv(inj.dirty, c.paths.output);
    if (!c.paths.truth.empty()) write_truth(inj.dirty, inj.truth, c.paths.truth);
    std::cerr << "corrupted " << inj.corrupted.size() << " of " << clean.num_cells() << " cells\n";
    return kOk;
}

int cmd_evaluate(const RunConfig& c, const std::string& predictions) {
    require(c.paths.data, "--data");
    require(c.paths.truth, "--truth");
    require(predictions, "--predictions");
    const auto d = load_csv(c.paths.data);
    const auto truth = load_truth(c.paths.truth, d);
    auto records = csv::parse(csv::read_file(predictions));
    std::erase_if(records, [](const auto& r) { return r.size() == 1 && r[0].empty(); });
    const std::vector<std::string> header{"tuple_index", "attribute", "label", "probability"};
    if (records.empty() || records[0] != header)
        throw ParseError("predictions header must be tuple_index,attribute,label,probability", 1);
    std::vector<CellPrediction> preds;
    std::vector<CellRef> cells;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.size() != 4) throw ParseError("predictions row " + std::to_string(i + 1) + " needs 4 fields", i + 1);
        const auto attr = d.schema().index_of(r[1]);
        if (!attr) throw ParseError("unknown attribute '" + r[1] + "'", i + 1);
        if (r[2] != "error" && r[2] != "correct") throw ParseError("label must be error or correct", i + 1);
        CellRef cell{static_cast<std::size_t>(std::stoul(r[0])), *attr};
        preds.push_back({cell, r[2] == "error", std::stod(r[3])});
        cells.push_back(cell);
    }
    const auto rep = evaluate(preds, truth, cells);
    std::cout << "cells " << cells.size() << " tp " << rep.tp << " fp " << rep.fp << " fn " << rep.fn << " tn "
              << rep.tn << "\n";
    std::cout << "precision " << fixed(rep.precision, 4) << " recall " << fixed(rep.recall, 4) << " f1 "
              << fixed(rep.f1, 4) << "\n";
    return kOk;
}

int cmd_bench(const RunConfig& c, const std::string& suite) {
    const auto cfg = c.experiment();
    const auto result = run_experiment(suite, cfg, [](const ResultRow& r) {
        std::cerr << r.suite << " " << r.variant << " seed " << r.seed << " F1 " << fixed(r.report.f1, 4) << " ("
                  << fixed(r.seconds, 1) << "s)\n";
    });
    const auto dir = report_dir(c);
    fs::create_directories(dir);
    const auto csv_path = (fs::path(dir) / (suite + ".csv")).string();
    write_text(csv_path, report_csv(result));
    write_text((fs::path(dir) / (suite + "_summary.txt")).string(), report_summary(result));
    std::cout << report_summary(result) << "wrote " << csv_path << "\n";
    return kOk;
}

int cmd_summarize(const std::string& report) {
    require(report, "report");
    std::cout << report_summary(parse_report(csv::read_file(report)));
    return kOk;
}

int cmd_inspect_policy(const RunConfig& c, std::size_t top, const std::string& value) {
    require(c.paths.data, "--data");
    require(c.paths.labels, "--labels");
    const auto d = load_csv(c.paths.data);
    const auto labels = load_truth(c.paths.labels, d);
    std::size_t weak = 0;
    const auto pairs = collect_pairs(d, labels, c.detector(), &weak);
    const auto phi = build_phi(pairs);
    std::cout << "pairs " << pairs.size() << " (" << weak << " weak), transformations " << phi.unique.size() << "\n";
    if (phi.unique.empty()) return kOk;
    const auto policy = empirical_policy(phi.per_pair);
    ConditionalPolicy shown(policy.entries().begin(), policy.entries().end());
    if (!value.empty()) {
        shown = conditional_policy(policy, value);
        std::cout << "conditioned on '" << value << "': " << shown.size() << " applicable\n";
    }
    for (const auto& e : top_k(shown, top))
        std::cout << fixed(e.probability) << "  " << to_string(e.transformation.kind()) << "  "
                  << to_string(e.transformation) << "\n";
    return kOk;
}

int cmd_inspect_features(const RunConfig& c, std::size_t tuple, const std::string& attribute, const std::string& value) {
    require(c.paths.data, "--data");
    const auto d = load_csv(c.paths.data);
    const auto attr = d.schema().index_of(attribute);
    if (!attr) throw ConfigError("unknown attribute '" + attribute + "'");
    if (tuple >= d.num_tuples()) throw ConfigError("tuple " + std::to_string(tuple) + " is out of range");
    const auto cfg = c.detector();
    const auto pipeline = FeaturePipeline::fit(d, constraints_for(c, d), cfg.features);
    Featurizer f(pipeline, d);
    const CellRef cell{tuple, *attr};
    const auto fv = value.empty() ? f.featurize(cell) : f.featurize(cell, value);
    const auto& layout = pipeline.layout();
    std::cout << "cell (" << tuple << ", " << attribute << ") value '" << (value.empty() ? d.at(cell) : value) << "'\n";
    std::cout << "layout " << layout.wide_dim() << " wide + " << layout.deep_dim() << " deep, fingerprint " << std::hex
              << layout.fingerprint << std::dec << "\n";
    for (std::size_t i = 0; i < layout.wide_dim(); ++i)
        std::cout << "  " << layout.wide_names[i] << " = " << fixed(fv.wide[i]) << "\n";
    for (std::size_t p = 0; p < layout.pathways.size(); ++p) {
        double norm = 0.0;
        for (std::size_t k = 0; k < layout.embedding_dim; ++k) {
            const double x = fv.deep[p * layout.embedding_dim + k];
            norm += x * x;
        }
        std::cout << "  embedding." << to_string(layout.pathways[p]) << " |v| = " << fixed(std::sqrt(norm)) << "\n";
    }
    return kOk;
}

int cmd_generate(const RunConfig& c) {
    if (c.paths.output.empty()) throw ConfigError("missing required output --output");
    const auto b = make_hospital_benchmark(c.n_tuples, c.seed);
    write_csv(b.clean, c.paths.output);
    if (!c.paths.constraints.empty()) {
        std::string text;
        for (const auto& dc : b.constraints) text += dc + "\n";
        write_text(c.paths.constraints, text);
    }
    std::cerr << "wrote " << b.clean.num_tuples() << " tuples x " << b.clean.num_attributes() << " attributes\n";
    return kOk;
}

std::string find_config(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig c;
    try {
        if (const auto path = find_config(argc, argv); !path.empty()) c = load_config(path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }

    CLI::App app{"Error detection in relational data with learned noisy-channel augmentation"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "JSON config; flags override its values");

    auto paths = [&](CLI::App* s, std::initializer_list<std::string_view> which) {
        for (auto w : which) {
            if (w == "data") s->add_option("--data", c.paths.data, "Dataset CSV with header");
            if (w == "constraints") s->add_option("--constraints", c.paths.constraints, "Denial constraints, one per line");
            if (w == "labels") s->add_option("--labels", c.paths.labels, "Labeled cells (tuple_index,attribute,clean_value)");
            if (w == "truth") s->add_option("--truth", c.paths.truth, "Ground truth (tuple_index,attribute,clean_value)");
            if (w == "model") s->add_option("--model", c.paths.model, "Detector checkpoint");
            if (w == "output") s->add_option("-o,--output", c.paths.output, "Output file (stdout when omitted)");
        }
    };
    auto detector_opts = [&](CLI::App* s) {
        s->add_option("--epochs", c.epochs, "Training epochs");
        s->add_option("--batch-size", c.batch_size, "Mini-batch size");
        s->add_option("--learning-rate", c.learning_rate, "Adam learning rate");
        s->add_option("--hidden", c.hidden, "Hidden units of the classifier");
        s->add_option("--embedding-dim", c.embedding_dim, "Embedding dimension");
        s->add_option("--embedding-epochs", c.embedding_epochs, "Embedding training epochs");
        s->add_option("--disable", c.disabled_features, "Feature groups to disable");
        s->add_option("--alpha", c.alpha, "Augmentation acceptance probability");
        s->add_option("--alpha-grid", c.alpha_grid, "Alpha candidates scored on the holdout");
        s->add_option("--min-pairs", c.min_pairs, "Add weak labels below this many labeled error pairs");
        s->add_option("--target-error-ratio", c.target_error_ratio, "Share of error examples after augmentation");
        s->add_option("--holdout-fraction", c.holdout_fraction, "Share of labels kept for calibration");
        s->add_option("--seed", c.seed, "Random seed");
        s->add_flag("--no-augment{false}", c.augment, "Train on labeled examples only");
    };

    auto* train = app.add_subcommand("train", "Train a detector and write a checkpoint");
    paths(train, {"data", "constraints", "labels", "model"});
    detector_opts(train);

    auto* detect = app.add_subcommand("detect", "Score every non-training cell");
    paths(detect, {"data", "labels", "model", "output"});
    detect->add_option("--threshold", c.threshold, "Error probability threshold");

    auto* aug = app.add_subcommand("augment", "Write synthetic errors generated from labeled cells");
    paths(aug, {"data", "labels", "output"});
    detector_opts(aug);

    auto* inject = app.add_subcommand("inject-errors", "Corrupt a clean dataset");
    paths(inject, {"data", "output", "truth"});
    inject->add_option("--rate", c.error_rate, "Fraction of cells to corrupt");
    inject->add_option("--mix", c.error_mix, "Proportions of typo, char-swap, value-swap, attribute-shift")->expected(4);
    inject->add_option("--seed", c.seed, "Random seed");

    std::string predictions;
    auto* eval = app.add_subcommand("evaluate", "Precision, recall and F1 of a predictions file");
    paths(eval, {"data", "truth"});
    eval->add_option("--predictions", predictions, "Output of detect")->required();

    std::string suite;
    auto* bench = app.add_subcommand("bench", "Run an experiment suite on the synthetic benchmark");
    bench->add_option("suite", suite, "end2end, ablation, aug-vs-super, balance-sweep or weak-precision")->required();
    bench->add_option("--seeds", c.seeds, "Number of seeds (1..N)");
    bench->add_option("--tuples", c.n_tuples, "Benchmark size");
    bench->add_option("--error-rate", c.error_rate, "Fraction of corrupted cells");
    bench->add_option("--train-fraction", c.train_fraction, "Fraction of cells labeled for training");
    bench->add_option("--train-fractions", c.train_fractions, "aug-vs-super training fractions");
    bench->add_option("--ratios", c.balance_ratios, "balance-sweep error ratios");
    bench->add_option("--groups", c.ablation_groups, "ablation feature groups");
    bench->add_option("--report-dir", c.paths.report_dir, "Report directory (default $ERRDETECT_REPORT_DIR or ./reports)");
    detector_opts(bench);

    std::size_t top = 20;
    std::string value;
    auto* ipol = app.add_subcommand("inspect-policy", "Show learned transformations and their probabilities");
    paths(ipol, {"data", "labels"});
    ipol->add_option("--top", top, "Number of transformations to show");
    ipol->add_option("--value", value, "Condition the policy on this value");
    ipol->add_option("--min-pairs", c.min_pairs, "Add weak labels below this many labeled error pairs");

    std::size_t tuple = 0;
    std::string attribute;
    auto* ifeat = app.add_subcommand("inspect-features", "Show the feature vector of one cell");
    paths(ifeat, {"data", "constraints"});
    ifeat->add_option("--tuple", tuple, "Tuple index")->required();
    ifeat->add_option("--attribute", attribute, "Attribute name")->required();
    ifeat->add_option("--value", value, "Substitute this value");
    ifeat->add_option("--embedding-dim", c.embedding_dim, "Embedding dimension");
    ifeat->add_option("--disable", c.disabled_features, "Feature groups to disable");
    ifeat->add_option("--seed", c.seed, "Random seed");

    std::string report;
    auto* summarize = app.add_subcommand("summarize", "Summarize a bench report");
    summarize->add_option("report", report, "Report CSV written by bench")->required();

    auto* generate = app.add_subcommand("generate", "Write a synthetic clean hospital-style dataset");
    paths(generate, {"output", "constraints"});
    generate->add_option("--tuples", c.n_tuples, "Number of tuples");
    generate->add_option("--seed", c.seed, "Random seed");

    auto* dump = app.add_subcommand("config", "Print the effective configuration as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsageError;
    }

    try {
        if (*train) return cmd_train(c);
        if (*detect) return cmd_detect(c);
        if (*aug) return cmd_augment(c);
        if (*inject) return cmd_inject(c);
        if (*eval) return cmd_evaluate(c, predictions);
        if (*bench) return cmd_bench(c, suite);
        if (*ipol) return cmd_inspect_policy(c, top, value);
        if (*ifeat) return cmd_inspect_features(c, tuple, attribute, value);
        if (*summarize) return cmd_summarize(report);
        if (*generate) return cmd_generate(c);
        if (*dump) {
            std::cout << config_to_string(c) << "\n";
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kUsageError;
}
