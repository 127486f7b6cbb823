#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "errdetect/constraints.hpp"
#include "errdetect/dataset.hpp"
#include "errdetect/detector.hpp"
#include "errdetect/noisy_channel.hpp"

namespace errdetect {

// ---------------------------------------------------------------------------
// Synthetic benchmark

struct Benchmark {
    Dataset clean;
    std::vector<std::string> constraints;
};

// Hospital-style table: providers x quality measures. Provider attributes are functions of the provider
// number, zip determines city, measure code determines condition and measure name. Score and Sample vary
// per row without structure.
inline Benchmark make_hospital_benchmark(std::size_t n_tuples = 1000, std::uint64_t seed = 0) {
    static const std::array<std::string_view, 24> kCities{
        "birmingham", "dothan",    "gadsden",  "huntsville", "mobile",     "montgomery", "tuscaloosa", "auburn",
        "florence",   "decatur",   "anniston", "opelika",    "selma",      "enterprise", "cullman",    "jasper",
        "talladega",  "alexander", "fairhope", "foley",      "andalusia",  "troy",       "ozark",      "sheffield"};
    static const std::array<std::string_view, 8> kStates{"al", "ga", "ms", "tn", "fl", "sc", "nc", "ky"};
    static const std::array<std::string_view, 16> kCounties{
        "jefferson", "houston", "etowah",  "madison", "baldwin", "montgomery", "shelby",  "lee",
        "lauderdale", "morgan", "calhoun", "dallas",  "coffee",  "cullman",    "walker", "talladega"};
    static const std::array<std::string_view, 14> kNameA{"st vincents", "southeast", "marshall", "crestwood",
                                                         "baptist",     "north",     "grandview", "princeton",
                                                         "riverview",   "flowers",   "providence", "thomas",
                                                         "shelby",      "medical park"};
    static const std::array<std::string_view, 5> kNameB{"medical center", "hospital", "regional medical center",
                                                        "memorial hospital", "health system"};
    static const std::array<std::string_view, 12> kStreets{"main st", "oak ave", "university blvd", "ross clark circle",
                                                           "highway 31", "medical park dr", "church st", "pine st",
                                                           "commerce dr", "hospital dr", "park pl", "lakeshore dr"};
    static const std::array<std::string_view, 3> kTypes{"acute care hospitals", "critical access hospitals",
                                                        "childrens"};
    static const std::array<std::string_view, 5> kOwners{
        "government - hospital district or authority", "voluntary non-profit - private", "proprietary",
        "voluntary non-profit - church", "government - state"};
    struct Measure {
        std::string_view code, condition, name;
    };
    static const std::array<Measure, 20> kMeasures{{
        {"ami-1", "heart attack", "heart attack patients given aspirin at arrival"},
        {"ami-2", "heart attack", "heart attack patients given aspirin at discharge"},
        {"ami-3", "heart attack", "heart attack patients given ace inhibitor for lvsd"},
        {"ami-4", "heart attack", "heart attack patients given smoking cessation advice"},
        {"ami-5", "heart attack", "heart attack patients given beta blocker at discharge"},
        {"ami-7a", "heart attack", "heart attack patients given fibrinolytic medication"},
        {"ami-8a", "heart attack", "heart attack patients given pci within 90 minutes"},
        {"hf-1", "heart failure", "heart failure patients given discharge instructions"},
        {"hf-2", "heart failure", "heart failure patients given an evaluation of lvs function"},
        {"hf-3", "heart failure", "heart failure patients given ace inhibitor or arb"},
        {"hf-4", "heart failure", "heart failure patients given smoking cessation advice"},
        {"pn-2", "pneumonia", "pneumonia patients assessed and given pneumococcal vaccination"},
        {"pn-3b", "pneumonia", "pneumonia patients whose initial er blood culture was performed"},
        {"pn-4", "pneumonia", "pneumonia patients given smoking cessation advice"},
        {"pn-5c", "pneumonia", "pneumonia patients given initial antibiotic within 6 hours"},
        {"pn-6", "pneumonia", "pneumonia patients given the most appropriate initial antibiotic"},
        {"pn-7", "pneumonia", "pneumonia patients assessed and given influenza vaccination"},
        {"scip-card-2", "surgical infection prevention", "surgery patients who were taking beta blockers"},
        {"scip-inf-1", "surgical infection prevention", "surgery patients who received antibiotic within one hour"},
        {"scip-inf-2", "surgical infection prevention", "surgery patients who received the right kind of antibiotic"},
    }};

    std::mt19937_64 rng(seed ^ 0x40591ULL);
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    auto digits = [&](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('0' + pick(10)));
        return s;
    };

    struct City {
        std::string name, state, county, zip;
    };
    std::vector<City> cities;
    std::unordered_set<std::string> zips;
    for (std::size_t c = 0; c < kCities.size(); ++c) {
        City city{std::string(kCities[c]), std::string(kStates[pick(kStates.size())]),
                  std::string(kCounties[pick(kCounties.size())]), ""};
        do city.zip = "3" + digits(4);
        while (!zips.insert(city.zip).second);
        cities.push_back(std::move(city));
    }

    const std::size_t n_measures = kMeasures.size();
    const std::size_t n_providers = std::max<std::size_t>(1, (n_tuples + n_measures - 1) / n_measures);
    struct Provider {
        std::string number, name, address, phone, type, owner;
        std::size_t city;
    };
    std::vector<Provider> providers;
    std::unordered_set<std::string> numbers, phones, names;
    for (std::size_t p = 0; p < n_providers; ++p) {
        Provider pr;
        do pr.number = "1" + digits(4);
        while (!numbers.insert(pr.number).second);
        do pr.name = std::string(kNameA[pick(kNameA.size())]) + " " + std::string(kNameB[pick(kNameB.size())]);
        while (!names.insert(pr.name).second && names.size() < kNameA.size() * kNameB.size());
        pr.address = std::to_string(100 + pick(9900)) + " " + std::string(kStreets[pick(kStreets.size())]);
        do pr.phone = "256" + digits(7);
        while (!phones.insert(pr.phone).second);
        pr.type = kTypes[pick(kTypes.size())];
        pr.owner = kOwners[pick(kOwners.size())];
        pr.city = pick(cities.size());
        providers.push_back(std::move(pr));
    }

    Schema schema({"ProviderNumber", "HospitalName", "Address1", "City", "State", "ZipCode", "CountyName",
                   "PhoneNumber", "HospitalType", "HospitalOwner", "Condition", "MeasureCode", "MeasureName",
                   "Score", "Sample"});
    std::vector<Row> rows;
    rows.reserve(n_tuples);
    for (std::size_t t = 0; t < n_tuples; ++t) {
        const auto& pr = providers[t / n_measures];
        const auto& m = kMeasures[t % n_measures];
        const auto& city = cities[pr.city];
        rows.push_back({pr.number, pr.name, pr.address, city.name, city.state, city.zip, city.county, pr.phone, pr.type,
                        pr.owner, std::string(m.condition), std::string(m.code), std::string(m.name),
                        std::to_string(40 + pick(61)) + "%", std::to_string(pick(600)) + " patients"});
    }
    Benchmark b{Dataset(std::move(schema), std::move(rows), "hospital-synth"), {}};
    b.constraints = {"t1&t2: t1.ZipCode=t2.ZipCode & t1.City!=t2.City",
                     "t1&t2: t1.ProviderNumber=t2.ProviderNumber & t1.PhoneNumber!=t2.PhoneNumber",
                     "t1&t2: t1.MeasureCode=t2.MeasureCode & t1.MeasureName!=t2.MeasureName"};
    return b;
}

// ---------------------------------------------------------------------------
// Error injection

enum class ErrorType { typo, char_swap, value_swap, attribute_shift };

inline std::string_view to_string(ErrorType t) {
    switch (t) {
        case ErrorType::typo: return "typo";
        case ErrorType::char_swap: return "char-swap";
        case ErrorType::value_swap: return "value-swap";
        case ErrorType::attribute_shift: return "attribute-shift";
    }
    return "?";
}

struct InjectionSpec {
    double error_rate = 0.05;
    // Proportions over {typo, char_swap, value_swap, attribute_shift}.
    std::array<double, 4> mix{1.0, 0.0, 0.0, 0.0};
    // Typos insert this character; 0 inserts a random lowercase letter.
    char typo_char = 'x';
    std::uint64_t seed = 0;
};

struct InjectedErrors {
    Dataset dirty;
    TrainingSet truth;  // every cell with its clean value
    std::vector<std::pair<CellRef, ErrorType>> corrupted;
};

namespace detail {

// Largest-remainder apportionment of `total` over proportions.
inline std::array<std::size_t, 4> apportion(std::size_t total, const std::array<double, 4>& mix) {
    std::array<std::size_t, 4> out{};
    std::array<double, 4> rem{};
    std::size_t given = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        const double exact = mix[i] * static_cast<double>(total);
        out[i] = static_cast<std::size_t>(std::floor(exact));
        rem[i] = exact - std::floor(exact);
        given += out[i];
    }
    while (given < total) {
        const auto i = static_cast<std::size_t>(std::max_element(rem.begin(), rem.end()) - rem.begin());
        ++out[i];
        rem[i] = -1.0;
        ++given;
    }
    return out;
}

}  // namespace detail

inline InjectedErrors inject_errors(const Dataset& clean, const InjectionSpec& spec) {
    if (!(spec.error_rate > 0.0 && spec.error_rate < 1.0))
        throw ConfigError("error_rate must be in (0,1), got " + std::to_string(spec.error_rate));
    double mix_sum = 0.0;
    for (double m : spec.mix) {
        if (m < 0.0) throw ConfigError("error mix proportions must be non-negative");
        mix_sum += m;
    }
    if (std::abs(mix_sum - 1.0) > 1e-9) throw ConfigError("error mix proportions must sum to 1");

    const auto n_cells = clean.num_cells();
    const auto n_corrupt = static_cast<std::size_t>(std::ceil(spec.error_rate * static_cast<double>(n_cells) - 1e-9));
    std::mt19937_64 rng(spec.seed);

    std::vector<std::size_t> cells(n_cells);
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    std::shuffle(cells.begin(), cells.end(), rng);
    cells.resize(n_corrupt);

    const auto per_type = detail::apportion(n_corrupt, spec.mix);
    std::vector<ErrorType> types;
    for (std::size_t k = 0; k < 4; ++k) types.insert(types.end(), per_type[k], static_cast<ErrorType>(k));

    std::vector<std::vector<std::string>> domain(clean.num_attributes());
    {
        std::vector<std::unordered_set<std::string>> seen(clean.num_attributes());
        for (const auto& row : clean.rows())
            for (std::size_t a = 0; a < row.size(); ++a)
                if (seen[a].insert(row[a]).second) domain[a].push_back(row[a]);
    }

    auto typo = [&](const std::string& v) {
        std::string out = v;
        const char c = spec.typo_char ? spec.typo_char
                                      : static_cast<char>('a' + std::uniform_int_distribution<int>(0, 25)(rng));
        out.insert(std::uniform_int_distribution<std::size_t>(0, v.size())(rng), 1, c);
        return out;
    };

    std::vector<Row> rows = clean.rows();
    InjectedErrors result;
    for (std::size_t k = 0; k < n_corrupt; ++k) {
        const CellRef c{cells[k] / clean.num_attributes(), cells[k] % clean.num_attributes()};
        const std::string& v = clean.at(c);
        ErrorType type = types[k];
        std::string dirty;
        switch (type) {
            case ErrorType::typo: dirty = typo(v); break;
            case ErrorType::char_swap: {
                std::vector<std::size_t> spots;
                for (std::size_t i = 0; i + 1 < v.size(); ++i)
                    if (v[i] != v[i + 1]) spots.push_back(i);
                if (spots.empty()) break;
                const auto i = spots[std::uniform_int_distribution<std::size_t>(0, spots.size() - 1)(rng)];
                dirty = v;
                std::swap(dirty[i], dirty[i + 1]);
                break;
            }
            case ErrorType::value_swap: {
                std::vector<const std::string*> others;
                for (const auto& u : domain[c.attr])
                    if (u != v) others.push_back(&u);
                if (others.empty()) break;
                dirty = *others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
                break;
            }
            case ErrorType::attribute_shift: {
                std::vector<const std::string*> others;
                for (std::size_t a = 0; a < clean.num_attributes(); ++a)
                    if (a != c.attr && clean.row(c.tuple)[a] != v) others.push_back(&clean.row(c.tuple)[a]);
                if (others.empty()) break;
                dirty = *others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
                break;
            }
        }
        if (dirty.empty() || dirty == v) {
            type = ErrorType::typo;
            dirty = typo(v);
        }
        rows[c.tuple][c.attr] = std::move(dirty);
        result.corrupted.emplace_back(c, type);
    }
    result.dirty = Dataset(clean.schema(), std::move(rows), clean.id() + "-dirty");

    std::vector<LabeledCell> truth;
    truth.reserve(n_cells);
    for (std::size_t t = 0; t < clean.num_tuples(); ++t)
        for (std::size_t a = 0; a < clean.num_attributes(); ++a)
            truth.push_back({{t, a}, result.dirty.at({t, a}), clean.at({t, a})});
    result.truth = TrainingSet(std::move(truth));
    return result;
}

// ---------------------------------------------------------------------------
// Metrics

struct EvalReport {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline EvalReport make_report(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn = 0) {
    EvalReport r{tp, fp, fn, tn};
    r.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

// Precision/recall/F1 of error predictions restricted to `test_cells`.
inline EvalReport evaluate(const std::vector<CellPrediction>& predictions, const TrainingSet& truth,
                           const std::vector<CellRef>& test_cells) {
    std::unordered_map<CellRef, bool, CellRefHash> predicted;
    for (const auto& p : predictions) predicted[p.cell] = p.error;
    std::unordered_map<CellRef, bool, CellRefHash> actual;
    for (const auto& e : truth.entries()) actual[e.cell] = label_of(e) == CellLabel::error;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& c : test_cells) {
        auto pit = predicted.find(c);
        if (pit == predicted.end())
            throw ConfigError("no prediction for cell (" + std::to_string(c.tuple) + "," + std::to_string(c.attr) + ")");
        auto ait = actual.find(c);
        if (ait == actual.end())
            throw ConfigError("no ground truth for cell (" + std::to_string(c.tuple) + "," + std::to_string(c.attr) + ")");
        const bool pred = pit->second, err = ait->second;
        tp += pred && err;
        fp += pred && !err;
        fn += !pred && err;
        tn += !pred && !err;
    }
    return make_report(tp, fp, fn, tn);
}

struct Aggregate {
    double median_precision = 0.0, median_recall = 0.0, median_f1 = 0.0;
    double mean_f1 = 0.0, stderr_f1 = 0.0;
    std::size_t runs = 0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline Aggregate aggregate(const std::vector<EvalReport>& runs) {
    Aggregate a;
    a.runs = runs.size();
    if (runs.empty()) return a;
    std::vector<double> p, r, f;
    for (const auto& x : runs) {
        p.push_back(x.precision);
        r.push_back(x.recall);
        f.push_back(x.f1);
    }
    a.median_precision = median(p);
    a.median_recall = median(r);
    a.median_f1 = median(f);
    a.mean_f1 = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
    if (f.size() > 1) {
        double ss = 0.0;
        for (double x : f) ss += (x - a.mean_f1) * (x - a.mean_f1);
        a.stderr_f1 = std::sqrt(ss / static_cast<double>(f.size() - 1)) / std::sqrt(static_cast<double>(f.size()));
    }
    return a;
}

// ---------------------------------------------------------------------------
// Baselines

// Flags every cell referenced by a constraint in each tuple that violates it.
inline std::vector<CellPrediction> constraint_violation_baseline(const Dataset& d,
                                                                 const std::vector<DenialConstraint>& sigma,
                                                                 const std::vector<CellRef>& cells) {
    const auto counts = count_violations(d, sigma);
    std::vector<std::vector<bool>> flagged(d.num_tuples(), std::vector<bool>(d.num_attributes(), false));
    for (std::size_t t = 0; t < d.num_tuples(); ++t)
        for (std::size_t k = 0; k < sigma.size(); ++k) {
            if (!counts[t][k]) continue;
            for (const auto& p : sigma[k].predicates)
                for (const auto* o : {&p.lhs, &p.rhs})
                    if (!o->is_constant) flagged[t][o->attr] = true;
        }
    std::vector<CellPrediction> out;
    for (const auto& c : cells) out.push_back({c, flagged[c.tuple][c.attr], flagged[c.tuple][c.attr] ? 1.0 : 0.0});
    return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::size_t n_tuples = 1000;
    double error_rate = 0.05;
    std::array<double, 4> error_mix{1.0, 0.0, 0.0, 0.0};
    double train_fraction = 0.10;
    double holdout_fraction = 0.10;
    DetectorConfig detector;
    // aug-vs-super training fractions.
    std::vector<double> train_fractions{0.01};
    // balance-sweep target error ratios.
    std::vector<double> balance_ratios{0.05, 0.20, 0.35, 0.50, 0.65, 0.80, 0.95};
    // ablation groups; each is removed once.
    std::vector<FeatureGroup> ablation_groups{
        FeatureGroup::character, FeatureGroup::word,      FeatureGroup::tuple,           FeatureGroup::neighborhood,
        FeatureGroup::format,    FeatureGroup::symbolic_format, FeatureGroup::empirical, FeatureGroup::column_id,
        FeatureGroup::cooccurrence, FeatureGroup::constraints};
    // ablation emits the unablated "full" variant; off when the caller already has it from end2end.
    bool ablation_include_full = true;
    // Number of constraints passed to the detector (all when unset).
    std::optional<std::size_t> constraint_limit;
};

struct ResultRow {
    std::string suite;
    std::string dataset;
    std::string variant;
    std::uint64_t seed = 0;
    EvalReport report;
    double seconds = 0.0;
};

struct ExperimentResult {
    std::string suite;
    std::vector<ResultRow> rows;

    std::vector<std::string> variants() const {
        std::vector<std::string> v;
        for (const auto& r : rows)
            if (std::find(v.begin(), v.end(), r.variant) == v.end()) v.push_back(r.variant);
        return v;
    }
    std::vector<EvalReport> runs(const std::string& variant) const {
        std::vector<EvalReport> out;
        for (const auto& r : rows)
            if (r.variant == variant) out.push_back(r.report);
        return out;
    }
    Aggregate summary(const std::string& variant) const { return aggregate(runs(variant)); }
};

inline const std::vector<std::string>& experiment_suites() {
    static const std::vector<std::string> suites{"end2end", "ablation", "aug-vs-super", "balance-sweep",
                                                 "weak-precision"};
    return suites;
}

// One seeded benchmark instance: clean data, injected errors, constraints and a split.
struct BenchmarkRun {
    Benchmark benchmark;
    InjectedErrors injected;
    std::vector<DenialConstraint> constraints;
    Split split;
    std::vector<CellRef> test_cells;
    // Fitted feature pipelines by mask bits; labels do not enter the pipeline, so variants share it.
    std::map<std::uint64_t, FeaturePipeline> pipelines;
};

inline BenchmarkRun prepare_run(const ExperimentConfig& cfg, std::uint64_t seed, double train_fraction) {
    BenchmarkRun run;
    run.benchmark = make_hospital_benchmark(cfg.n_tuples, seed);
    InjectionSpec spec;
    spec.error_rate = cfg.error_rate;
    spec.mix = cfg.error_mix;
    spec.seed = seed * 7919 + 13;
    run.injected = inject_errors(run.benchmark.clean, spec);
    std::size_t limit = cfg.constraint_limit.value_or(run.benchmark.constraints.size());
    for (std::size_t i = 0; i < std::min(limit, run.benchmark.constraints.size()); ++i)
        run.constraints.push_back(
            parse_dc(run.benchmark.constraints[i], run.injected.dirty.schema(), "dc" + std::to_string(i + 1)));
    SplitSpec ss;
    ss.train_fraction = train_fraction;
    ss.holdout_fraction_of_train = cfg.holdout_fraction;
    ss.seed = seed * 104729 + 7;
    run.split = split(run.injected.truth, ss);
    for (const auto& e : run.split.test.entries()) run.test_cells.push_back(e.cell);
    return run;
}

// Trains a detector on the run and scores it on the test cells. A training set without error
// examples cannot be learned from; such runs predict no errors.
inline EvalReport train_and_score(BenchmarkRun& run, DetectorConfig dcfg, std::uint64_t seed) {
    dcfg.train.seed = seed;
    dcfg.augmentation.seed = seed * 31 + 1;
    dcfg.features.embedding.seed = seed;
    auto it = run.pipelines.find(dcfg.features.mask.bits());
    if (it == run.pipelines.end())
        it = run.pipelines
                 .emplace(dcfg.features.mask.bits(), FeaturePipeline::fit(run.injected.dirty, run.constraints, dcfg.features))
                 .first;
    try {
        auto det = Detector::train(run.injected.dirty, run.constraints, &it->second, run.split.train, run.split.holdout,
                                   dcfg);
        return evaluate(det.predict(run.injected.dirty, run.test_cells), run.injected.truth, run.test_cells);
    } catch (const SingleClassError& e) {
        warn(std::string("run predicts no errors: ") + e.what());
        std::vector<CellPrediction> none;
        for (const auto& c : run.test_cells) none.push_back({c, false, 0.0});
        return evaluate(none, run.injected.truth, run.test_cells);
    }
}

using ProgressFn = std::function<void(const ResultRow&)>;

inline ExperimentResult run_experiment(const std::string& suite, const ExperimentConfig& cfg,
                                       const ProgressFn& progress = {}) {
    if (std::find(experiment_suites().begin(), experiment_suites().end(), suite) == experiment_suites().end()) {
        std::string names;
        for (const auto& s : experiment_suites()) names += (names.empty() ? "" : ", ") + s;
        throw ConfigError("unknown suite '" + suite + "'; available: " + names);
    }
    ExperimentResult result{suite, {}};
    auto emit = [&](std::string variant, std::uint64_t seed, EvalReport r, double secs, const std::string& dataset) {
        result.rows.push_back({suite, dataset, std::move(variant), seed, r, secs});
        if (progress) progress(result.rows.back());
    };
    auto timed = [](auto&& fn) {
        detail::Stopwatch sw;
        auto r = fn();
        return std::make_pair(r, sw.lap());
    };

    for (auto seed : cfg.seeds) {
        if (suite == "end2end") {
            auto run = prepare_run(cfg, seed, cfg.train_fraction);
            const auto ds = run.benchmark.clean.id();
            auto [aug, t_aug] = timed([&] { return train_and_score(run, cfg.detector, seed); });
            emit("AUG", seed, aug, t_aug, ds);
            auto [cv, t_cv] = timed([&] {
                return evaluate(constraint_violation_baseline(run.injected.dirty, run.constraints, run.test_cells),
                                run.injected.truth, run.test_cells);
            });
            emit("CV", seed, cv, t_cv, ds);
        } else if (suite == "ablation") {
            auto run = prepare_run(cfg, seed, cfg.train_fraction);
            const auto ds = run.benchmark.clean.id();
            if (cfg.ablation_include_full) {
                auto [full, t_full] = timed([&] { return train_and_score(run, cfg.detector, seed); });
                emit("full", seed, full, t_full, ds);
            }
            for (auto g : cfg.ablation_groups) {
                auto dcfg = cfg.detector;
                dcfg.features.mask.set(g, false);
                auto [r, t] = timed([&] { return train_and_score(run, dcfg, seed); });
                emit("-" + std::string(to_string(g)), seed, r, t, ds);
            }
        } else if (suite == "aug-vs-super") {
            for (double frac : cfg.train_fractions) {
                auto run = prepare_run(cfg, seed, frac);
                const auto ds = run.benchmark.clean.id();
                const auto tag = "@" + std::to_string(frac).substr(0, 5);
                auto [aug, t_aug] = timed([&] { return train_and_score(run, cfg.detector, seed); });
                emit("AUG" + tag, seed, aug, t_aug, ds);
                auto super_cfg = cfg.detector;
                super_cfg.augment = false;
                auto [sup, t_sup] = timed([&] { return train_and_score(run, super_cfg, seed); });
                emit("SuperL" + tag, seed, sup, t_sup, ds);
                auto rs_cfg = super_cfg;
                rs_cfg.resample = true;
                auto [rs, t_rs] = timed([&] { return train_and_score(run, rs_cfg, seed); });
                emit("Resample" + tag, seed, rs, t_rs, ds);
            }
        } else if (suite == "balance-sweep") {
            auto run = prepare_run(cfg, seed, cfg.train_fraction);
            const auto ds = run.benchmark.clean.id();
            for (double ratio : cfg.balance_ratios) {
                auto dcfg = cfg.detector;
                dcfg.target_error_ratio = ratio;
                auto [r, t] = timed([&] { return train_and_score(run, dcfg, seed); });
                char name[32];
                std::snprintf(name, sizeof name, "ratio=%.2f", ratio);
                emit(name, seed, r, t, ds);
            }
        } else if (suite == "weak-precision") {
            auto run = prepare_run(cfg, seed, cfg.train_fraction);
            const auto ds = run.benchmark.clean.id();
            auto [labels, t] = timed([&] { return weak_label_cells(run.injected.dirty, cfg.detector.weak_labels); });
            std::unordered_set<CellRef, CellRefHash> corrupted;
            for (const auto& [c, type] : run.injected.corrupted) corrupted.insert(c);
            std::size_t tp = 0, fp = 0;
            for (const auto& w : labels) (corrupted.count(w.cell) ? tp : fp) += 1;
            emit("NaiveBayes", seed, make_report(tp, fp, corrupted.size() - tp), t, ds);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string report_csv(const ExperimentResult& r) {
    std::ostringstream out;
    out << "suite,dataset,variant,seed,P,R,F1\n";
    out.setf(std::ios::fixed);
    out.precision(6);
    for (const auto& row : r.rows)
        out << row.suite << ',' << csv::quote(row.dataset) << ',' << csv::quote(row.variant) << ',' << row.seed << ','
            << row.report.precision << ',' << row.report.recall << ',' << row.report.f1 << '\n';
    return out.str();
}

inline std::string report_summary(const ExperimentResult& r) {
    std::ostringstream out;
    out << "suite " << r.suite << "\n";
    out << "variant              runs  median_P  median_R  median_F1  mean_F1 +- stderr\n";
    for (const auto& v : r.variants()) {
        const auto a = r.summary(v);
        char line[160];
        std::snprintf(line, sizeof line, "%-20s %4zu  %8.3f  %8.3f  %9.3f  %7.3f +- %.3f\n", v.c_str(), a.runs,
                      a.median_precision, a.median_recall, a.median_f1, a.mean_f1, a.stderr_f1);
        out << line;
    }
    return out.str();
}

// Parses a report written by report_csv.
inline ExperimentResult parse_report(const std::string& text) {
    auto records = csv::parse(text);
    std::erase_if(records, [](const auto& r) { return r.size() == 1 && r[0].empty(); });
    const std::vector<std::string> header{"suite", "dataset", "variant", "seed", "P", "R", "F1"};
    if (records.empty() || records[0] != header) throw ParseError("not an experiment report");
    ExperimentResult r;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (rec.size() != header.size()) throw ParseError("report row " + std::to_string(i + 1) + " is malformed", i + 1);
        ResultRow row;
        row.suite = rec[0];
        row.dataset = rec[1];
        row.variant = rec[2];
        try {
            row.seed = std::stoull(rec[3]);
            row.report.precision = std::stod(rec[4]);
            row.report.recall = std::stod(rec[5]);
            row.report.f1 = std::stod(rec[6]);
        } catch (const std::exception&) {
            throw ParseError("report row " + std::to_string(i + 1) + " has a non-numeric field", i + 1);
        }
        r.suite = row.suite;
        r.rows.push_back(std::move(row));
    }
    return r;
}

}  // namespace errdetect
