// Acceptance suite: one PASS/FAIL line per criterion.
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

#include "errdetect/harness.hpp"

using namespace errdetect;

namespace {

// Tolerances.
constexpr double kEnd2EndMinF1 = 0.80;
constexpr double kEnd2EndMaxSeconds = 600.0;
constexpr double kAugOverSuperMin = 0.10;
constexpr double kAblationMinDrop = 0.02;
constexpr double kWeakMinPrecision = 0.70;
constexpr std::size_t kWeakMinEmitted = 20;
constexpr double kPolicyNormTol = 1e-9;
constexpr double kUniformitySigmas = 3.0;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradAbsFloor = 1e-6;
constexpr double kSoftmaxTol = 1e-12;
constexpr double kPlattTol = 0.1;
constexpr std::size_t kSeeds = 5;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

ExperimentConfig base_config() {
    ExperimentConfig cfg;
    cfg.seeds.clear();
    for (std::uint64_t s = 1; s <= kSeeds; ++s) cfg.seeds.push_back(s);
    return cfg;
}

ExperimentResult run(const std::string& suite, const ExperimentConfig& cfg) {
    return run_experiment(suite, cfg, [](const ResultRow& r) {
        std::fprintf(stderr, "  %s %s seed %llu F1 %.4f (%.1fs)\n", r.suite.c_str(), r.variant.c_str(),
                     static_cast<unsigned long long>(r.seed), r.report.f1, r.seconds);
    });
}

std::string random_string(std::mt19937_64& rng, std::size_t max_len, std::string_view alphabet) {
    std::uniform_int_distribution<std::size_t> len(0, max_len), ch(0, alphabet.size() - 1);
    std::string s;
    for (auto n = len(rng); n > 0; --n) s.push_back(alphabet[ch(rng)]);
    return s;
}

Outcome noisy_channel_suite() {
    std::vector<std::string> problems;
    std::mt19937_64 rng(2024);

    // (a) round-trip and no identities
    std::size_t pairs = 0;
    while (pairs < 1000) {
        const auto alphabet = pairs % 2 ? std::string_view("abcxyz019 -") : std::string_view("ab");
        auto clean = random_string(rng, 12, alphabet), dirty = random_string(rng, 12, alphabet);
        if (clean == dirty || clean.empty()) continue;
        ++pairs;
        const auto list = learn_transformations(clean, dirty);
        if (list.empty() || list.front() != Transformation{clean, dirty} || apply(list.front(), clean, rng) != dirty) {
            problems.push_back("round-trip failed for '" + clean + "' -> '" + dirty + "'");
            break;
        }
        for (const auto& t : list)
            if (t.is_identity()) problems.push_back("identity emitted for '" + clean + "' -> '" + dirty + "'");
    }

    // (b) normalization of the empirical and conditional policies
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<LabeledPair> lp;
        for (int k = 0; k < 1 + trial % 20; ++k) {
            auto c = random_string(rng, 8, "abcx0"), d = random_string(rng, 8, "abcx0");
            if (c != d) lp.push_back({c, d});
        }
        const auto phi = build_phi(lp);
        if (phi.unique.empty()) continue;
        const auto policy = empirical_policy(phi.per_pair);
        double total = 0.0;
        for (const auto& e : policy.entries()) total += e.probability;
        worst = std::max(worst, std::abs(total - 1.0));
        const auto cond = conditional_policy(policy, random_string(rng, 10, "abcx0"));
        if (!cond.empty()) {
            double ct = 0.0;
            for (const auto& e : cond) ct += e.probability;
            worst = std::max(worst, std::abs(ct - 1.0));
        }
    }
    if (worst > kPolicyNormTol) problems.push_back(fmt("policy mass off by %.3g", worst));

    // (c) single-rule channel reconstruction
    std::vector<LabeledPair> samples;
    const Transformation insert_x{"", "x"};
    for (int i = 0; i < 10000; ++i) {
        auto clean = random_string(rng, 10, "abcdefghij0123456789");
        if (clean.empty()) clean = "a";
        samples.push_back({clean, apply(insert_x, clean, rng)});
    }
    const auto policy = empirical_policy(build_phi(samples).per_pair);
    const auto modal = std::max_element(policy.entries().begin(), policy.entries().end(),
                                        [](const auto& a, const auto& b) { return a.probability < b.probability; });
    if (modal->transformation != insert_x)
        problems.push_back("modal rule is " + to_string(modal->transformation));

    // (d) position uniformity
    auto uniform = [&](const Transformation& t, const std::string& v, std::size_t positions,
                       const std::function<std::size_t(const std::string&)>& where) {
        std::vector<double> counts(positions, 0.0);
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) counts[where(apply(t, v, rng))] += 1.0;
        const double p = 1.0 / static_cast<double>(positions);
        const double sigma = std::sqrt(draws * p * (1.0 - p));
        for (std::size_t k = 0; k < positions; ++k)
            if (std::abs(counts[k] - draws * p) > kUniformitySigmas * sigma)
                problems.push_back(fmt("position %zu of '%s' drawn %.0f times", k, v.c_str(), counts[k]));
    };
    uniform(insert_x, "abcd", 5, [](const std::string& s) { return s.find('x'); });
    uniform({"a", "b"}, "aaaa", 4, [](const std::string& s) { return s.find('b'); });

    Outcome o;
    o.pass = problems.empty();
    o.detail = o.pass ? fmt("1000 pairs round-trip, policy mass within %.0e, modal rule %s, uniform positions",
                            kPolicyNormTol, to_string(modal->transformation).c_str())
                      : problems.front();
    return o;
}

Outcome numerical_suite() {
    std::vector<std::string> problems;
    ModelShape shape;
    shape.wide_dim = 4;
    shape.pathways = 4;
    shape.embedding_dim = 5;
    shape.hidden = 6;
    ErrorClassifier m(shape);
    std::mt19937_64 rng(7);
    m.initialize(rng, -1.0);
    std::normal_distribution<double> g(0.0, 0.3);
    for (Eigen::Index i = 0; i < m.parameters().size(); ++i) m.parameters()[i] += g(rng);
    MatrixXd x(static_cast<Eigen::Index>(shape.input_dim()), 6);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = unit(rng);
    const std::vector<int> labels{0, 1, 0, 1, 1, 0};

    VectorXd grad;
    m.loss_and_gradient(x, labels, grad);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m.parameters().size(); ++i) {
        const double keep = m.parameters()[i], h = 1e-6;
        m.parameters()[i] = keep + h;
        const double up = m.loss(x, labels);
        m.parameters()[i] = keep - h;
        const double down = m.loss(x, labels);
        m.parameters()[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(numeric), std::abs(grad[i]), kGradAbsFloor / kGradRelTol});
        worst = std::max(worst, std::abs(numeric - grad[i]) / scale);
    }
    if (worst > kGradRelTol) problems.push_back(fmt("gradient relative error %.3g", worst));

    MatrixXd big(2, 4);
    big << 0.0, 1000.0, -1000.0, 3.0, 0.0, -1000.0, 1000.0, -2.0;
    const MatrixXd p = ErrorClassifier::softmax(big);
    double soft = 0.0;
    for (Eigen::Index b = 0; b < p.cols(); ++b) soft = std::max(soft, std::abs(p.col(b).sum() - 1.0));
    if (soft > kSoftmaxTol || !p.allFinite()) problems.push_back(fmt("softmax column sums off by %.3g", soft));

    std::vector<double> z;
    std::vector<int> y;
    std::mt19937_64 crng(99);
    std::normal_distribution<double> zs(0.0, 2.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 4000; ++i) {
        z.push_back(zs(crng));
        y.push_back(u(crng) < sigmoid(z.back()) ? kErrorClass : kCorrectClass);
    }
    const auto c = calibrate(z, y, {});
    if (std::abs(c.a - 1.0) > kPlattTol || std::abs(c.b) > kPlattTol)
        problems.push_back(fmt("Platt fit a=%.3f b=%.3f", c.a, c.b));

    Outcome o;
    o.pass = problems.empty();
    o.detail = o.pass ? fmt("%zu parameters, max rel err %.2g; softmax ok; Platt a=%.3f b=%.3f", m.num_parameters(),
                            worst, c.a, c.b)
                      : problems.front();
    return o;
}

Outcome constraint_suite() {
    std::mt19937_64 rng(31);
    const std::vector<std::string> ops{"=", "!=", "<", ">", "<=", ">="};
    std::size_t mismatches = 0, total_violations = 0;
    std::set<std::string> used;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
        Schema schema({"a", "b", "c"});
        std::vector<Row> rows;
        std::uniform_int_distribution<int> val(0, 4);
        for (std::size_t t = 0; t < n; ++t) {
            Row r;
            for (int k = 0; k < 3; ++k) {
                const int v = val(rng);
                r.push_back(k == 2 ? std::string(1, static_cast<char>('p' + v)) : std::to_string(v));
            }
            rows.push_back(std::move(r));
        }
        Dataset d(schema, std::move(rows));
        std::vector<DenialConstraint> sigma;
        for (int k = 0; k < 3; ++k) {
            std::string text = "t1&t2: ";
            const int preds = std::uniform_int_distribution<int>(1, 3)(rng);
            for (int q = 0; q < preds; ++q) {
                const auto& op = ops[std::uniform_int_distribution<std::size_t>(0, ops.size() - 1)(rng)];
                used.insert(op);
                const char* attr = std::array{"a", "b", "c"}[std::uniform_int_distribution<int>(0, 2)(rng)];
                const bool constant = std::uniform_int_distribution<int>(0, 3)(rng) == 0;
                text += (q ? " & " : "") + std::string("t1.") + attr + " " + op + " " +
                        (constant ? std::string(attr[0] == 'c' ? "'q'" : "'2'") : std::string("t2.") + attr);
            }
            sigma.push_back(parse_dc(text, schema, "dc" + std::to_string(k + 1)));
        }
        const auto fast = count_violations(d, sigma);
        const auto slow = count_violations_naive(d, sigma);
        mismatches += fast != slow;
        for (const auto& row : slow)
            for (auto c : row) total_violations += c;
    }
    Outcome o;
    o.pass = mismatches == 0 && used.size() == ops.size();
    o.detail = fmt("100 datasets, %zu mismatches, %zu operators exercised, %zu violations counted", mismatches,
                   used.size(), total_violations);
    return o;
}

}  // namespace

int main() {
    std::fprintf(stderr, "running end2end\n");
    const auto cfg = base_config();
    const auto e2e = run("end2end", cfg);
    {
        const auto a = e2e.summary("AUG");
        double slowest = 0.0;
        for (const auto& r : e2e.rows)
            if (r.variant == "AUG") slowest = std::max(slowest, r.seconds);
        report(1, "end-to-end F1", {a.median_f1 >= kEnd2EndMinF1 && slowest <= kEnd2EndMaxSeconds,
                                    fmt("median F1 %.3f (>= %.2f), CV baseline %.3f, slowest run %.0fs (<= %.0fs)",
                                        a.median_f1, kEnd2EndMinF1, e2e.summary("CV").median_f1, slowest,
                                        kEnd2EndMaxSeconds)});
    }

    std::fprintf(stderr, "running aug-vs-super\n");
    {
        const auto r = run("aug-vs-super", cfg);
        const double aug = r.summary("AUG@0.010").median_f1, sup = r.summary("SuperL@0.010").median_f1;
        report(2, "augmentation vs supervised at 1% labels",
               {aug - sup >= kAugOverSuperMin, fmt("AUG %.3f, SuperL %.3f, Resample %.3f, gap %.3f (>= %.2f)", aug,
                                                   sup, r.summary("Resample@0.010").median_f1, aug - sup,
                                                   kAugOverSuperMin)});
    }

    std::fprintf(stderr, "running balance-sweep\n");
    {
        auto bcfg = cfg;
        bcfg.train_fraction = 0.01;
        bcfg.balance_ratios = {0.05, 0.50, 0.95};
        const auto r = run("balance-sweep", bcfg);
        const double f5 = r.summary("ratio=0.05").median_f1, f50 = r.summary("ratio=0.50").median_f1,
                     f95 = r.summary("ratio=0.95").median_f1;
        report(3, "balance sweep", {f50 >= f5 && f50 >= f95,
                                    fmt("F1 at 5%% %.3f, 50%% %.3f, 95%% %.3f (1%% labels)", f5, f50, f95)});
    }

    std::fprintf(stderr, "running ablation\n");
    {
        auto acfg = cfg;
        acfg.ablation_groups = {FeatureGroup::character};
        acfg.ablation_include_full = false;
        const auto r = run("ablation", acfg);
        const double full = e2e.summary("AUG").median_f1, ablated = r.summary("-character").median_f1;
        report(4, "character pathway ablation",
               {full - ablated >= kAblationMinDrop,
                fmt("full %.3f, without character %.3f, drop %.3f (>= %.2f)", full, ablated, full - ablated,
                    kAblationMinDrop)});
    }

    std::fprintf(stderr, "running weak-precision\n");
    {
        const auto r = run("weak-precision", cfg);
        std::size_t min_emitted = SIZE_MAX;
        for (const auto& row : r.rows) min_emitted = std::min(min_emitted, row.report.tp + row.report.fp);
        const double p = r.summary("NaiveBayes").median_precision;
        report(5, "weak supervision precision",
               {p >= kWeakMinPrecision && min_emitted >= kWeakMinEmitted,
                fmt("median precision %.3f (>= %.2f), fewest emitted %zu (>= %zu)", p, kWeakMinPrecision, min_emitted,
                    kWeakMinEmitted)});
    }

    report(6, "noisy-channel properties", noisy_channel_suite());
    report(7, "numerical checks", numerical_suite());
    report(8, "constraint counting", constraint_suite());

    std::printf("%d of 8 criteria failed\n", failures);
    return failures ? 1 : 0;
}
