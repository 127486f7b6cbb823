#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "errdetect/dataset.hpp"

namespace errdetect {

// ---------------------------------------------------------------------------
// String matching

struct CommonSubstring {
    std::size_t pos_a = 0;
    std::size_t pos_b = 0;
    std::size_t length = 0;
};

// Longest common substring. Ties resolve to the leftmost occurrence in `a`, then in `b`.
inline CommonSubstring longest_common_substring(std::string_view a, std::string_view b) {
    CommonSubstring best;
    if (a.empty() || b.empty()) return best;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
            if (cur[j] > best.length) best = {i - cur[j], j - cur[j], cur[j]};
        }
        std::swap(prev, cur);
    }
    return best;
}

// Characters covered by recursively matched blocks (Ratcliff-Obershelp).
inline std::size_t matching_characters(std::string_view a, std::string_view b) {
    const auto m = longest_common_substring(a, b);
    if (m.length == 0) return 0;
    return m.length + matching_characters(a.substr(0, m.pos_a), b.substr(0, m.pos_b)) +
           matching_characters(a.substr(m.pos_a + m.length), b.substr(m.pos_b + m.length));
}

// 2*C/S overlap. Two empty strings are identical and score 1.
inline double similarity(std::string_view a, std::string_view b) {
    const auto total = a.size() + b.size();
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(matching_characters(a, b)) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Transformations

enum class TransformKind { add, remove, exchange };

inline std::string_view to_string(TransformKind k) {
    switch (k) {
        case TransformKind::add: return "add";
        case TransformKind::remove: return "remove";
        case TransformKind::exchange: return "exchange";
    }
    return "?";
}

// A single rewrite lhs -> rhs applied once to a value.
struct Transformation {
    std::string lhs;
    std::string rhs;

    TransformKind kind() const {
        if (lhs.empty()) return TransformKind::add;
        if (rhs.empty()) return TransformKind::remove;
        return TransformKind::exchange;
    }
    bool is_identity() const { return lhs == rhs; }

    auto operator<=>(const Transformation&) const = default;
};

inline std::string to_string(const Transformation& t) {
    auto show = [](const std::string& s) { return s.empty() ? std::string("\xE2\x88\x85") : s; };
    return show(t.lhs) + " -> " + show(t.rhs);
}

struct TransformationHash {
    std::size_t operator()(const Transformation& t) const noexcept {
        return static_cast<std::size_t>(fnv1a(t.rhs, fnv1a(t.lhs) ^ 0x9e3779b97f4a7c15ULL));
    }
};

// A clean value and an observed erroneous version of it.
struct LabeledPair {
    std::string clean;
    std::string dirty;
};

// Hierarchical extraction of rewrites explaining clean -> dirty. The first element is always the
// whole-string rewrite; fragment rewrites follow in recursion order with duplicates kept.
inline std::vector<Transformation> learn_transformations(const std::string& clean, const std::string& dirty) {
    std::vector<Transformation> out;
    if (clean.empty() && dirty.empty()) return out;
    out.push_back({clean, dirty});

    const auto m = longest_common_substring(clean, dirty);
    if (m.length > 0) {
        const std::string lc = clean.substr(0, m.pos_a);
        const std::string rc = clean.substr(m.pos_a + m.length);
        const std::string ld = dirty.substr(0, m.pos_b);
        const std::string rd = dirty.substr(m.pos_b + m.length);

        // Ties go to the crossed pairing.
        const bool straight = similarity(lc, ld) + similarity(rc, rd) > similarity(lc, rd) + similarity(rc, ld);
        const auto& first_dirty = straight ? ld : rd;
        const auto& second_dirty = straight ? rd : ld;

        out.push_back({lc, first_dirty});
        out.push_back({rc, second_dirty});
        auto left = learn_transformations(lc, first_dirty);
        auto right = learn_transformations(rc, second_dirty);
        out.insert(out.end(), left.begin(), left.end());
        out.insert(out.end(), right.begin(), right.end());
    }
    std::erase_if(out, [](const Transformation& t) { return t.is_identity(); });
    return out;
}

inline std::vector<Transformation> learn_transformations(const LabeledPair& p) {
    return learn_transformations(p.clean, p.dirty);
}

struct TransformationSet {
    std::vector<Transformation> unique;                  // first-appearance order
    std::vector<std::vector<Transformation>> per_pair;   // with multiplicity
};

inline TransformationSet build_phi(const std::vector<LabeledPair>& pairs) {
    TransformationSet phi;
    if (pairs.empty()) warn("no labeled pairs; the transformation set is empty");
    std::unordered_map<Transformation, std::size_t, TransformationHash> seen;
    for (const auto& p : pairs) {
        auto list = learn_transformations(p);
        for (const auto& t : list)
            if (seen.emplace(t, phi.unique.size()).second) phi.unique.push_back(t);
        phi.per_pair.push_back(std::move(list));
    }
    return phi;
}

// ---------------------------------------------------------------------------
// Policies

struct WeightedTransformation {
    Transformation transformation;
    double probability = 0.0;
};

// p(phi) = c_phi / c over all per-pair lists.
class EmpiricalPolicy {
public:
    EmpiricalPolicy() = default;
    explicit EmpiricalPolicy(std::vector<WeightedTransformation> entries) : entries_(std::move(entries)) {}

    const std::vector<WeightedTransformation>& entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }

    double probability(const Transformation& t) const {
        for (const auto& e : entries_)
            if (e.transformation == t) return e.probability;
        return 0.0;
    }

private:
    std::vector<WeightedTransformation> entries_;
};

inline EmpiricalPolicy empirical_policy(const std::vector<std::vector<Transformation>>& lists) {
    std::vector<Transformation> order;
    std::unordered_map<Transformation, std::size_t, TransformationHash> counts;
    std::size_t total = 0;
    for (const auto& list : lists)
        for (const auto& t : list) {
            auto [it, inserted] = counts.emplace(t, 0);
            if (inserted) order.push_back(t);
            ++it->second;
            ++total;
        }
    if (total == 0) throw ConfigError("empirical policy needs at least one transformation");
    std::vector<WeightedTransformation> entries;
    entries.reserve(order.size());
    for (auto& t : order) {
        const double p = static_cast<double>(counts[t]) / static_cast<double>(total);
        entries.push_back({std::move(t), p});
    }
    return EmpiricalPolicy(std::move(entries));
}

// Renormalized distribution over the transformations applicable to one value.
using ConditionalPolicy = std::vector<WeightedTransformation>;

inline bool applicable(const Transformation& t, std::string_view v) {
    return t.lhs.empty() || v.find(t.lhs) != std::string_view::npos;
}

inline ConditionalPolicy conditional_policy(const EmpiricalPolicy& policy, std::string_view v) {
    ConditionalPolicy out;
    double mass = 0.0;
    for (const auto& e : policy.entries())
        if (applicable(e.transformation, v)) {
            out.push_back(e);
            mass += e.probability;
        }
    for (auto& e : out) e.probability /= mass;
    return out;
}

// Top-k entries by probability, ties broken by first appearance.
inline ConditionalPolicy top_k(ConditionalPolicy policy, std::size_t k) {
    std::stable_sort(policy.begin(), policy.end(),
                     [](const auto& a, const auto& b) { return a.probability > b.probability; });
    if (policy.size() > k) policy.resize(k);
    return policy;
}

// ---------------------------------------------------------------------------
// Channel application

// Applies t once at a uniformly chosen occurrence of lhs (or insertion position when lhs is empty).
template <typename Rng>
std::string apply(const Transformation& t, const std::string& v, Rng& rng) {
    if (t.lhs.empty()) {
        std::uniform_int_distribution<std::size_t> pos(0, v.size());
        std::string out = v;
        out.insert(pos(rng), t.rhs);
        return out;
    }
    std::vector<std::size_t> starts;
    for (auto p = v.find(t.lhs); p != std::string::npos; p = v.find(t.lhs, p + 1)) starts.push_back(p);
    if (starts.empty()) throw PreconditionError("'" + t.lhs + "' does not occur in '" + v + "'");
    std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
    std::string out = v;
    out.replace(starts[pick(rng)], t.lhs.size(), t.rhs);
    return out;
}

template <typename Rng>
const Transformation& sample(const ConditionalPolicy& policy, Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double u = u01(rng);
    for (const auto& e : policy) {
        u -= e.probability;
        if (u < 0.0) return e.transformation;
    }
    return policy.back().transformation;
}

struct AugConfig {
    double alpha = 0.5;
    std::uint64_t seed = 0;
    // Overrides the p - n stopping rule when set (balance experiments).
    std::optional<std::size_t> target;
    // Hard stop after iteration_cap_factor * target iterations.
    std::size_t iteration_cap_factor = 1000;
};

// A synthetic error derived from a correct training cell.
struct AugmentedExample {
    CellRef cell;
    std::string clean;
    std::string dirty;
};

// Generates synthetic errors from correct training cells until the classes balance.
inline std::vector<AugmentedExample> augment(const TrainingSet& train, const EmpiricalPolicy& policy,
                                             const AugConfig& cfg) {
    std::vector<const LabeledCell*> correct;
    std::size_t n_errors = 0;
    for (const auto& e : train.entries()) {
        if (label_of(e) == CellLabel::correct)
            correct.push_back(&e);
        else
            ++n_errors;
    }
    std::size_t target = 0;
    if (cfg.target) {
        target = *cfg.target;
    } else {
        if (correct.size() <= n_errors) {
            warn("training set is not imbalanced towards correct cells; no augmentation performed");
            return {};
        }
        target = correct.size() - n_errors;
    }
    std::vector<AugmentedExample> out;
    if (target == 0 || correct.empty()) return out;
    if (policy.empty()) {
        warn("empty policy; no augmentation performed");
        return out;
    }

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, correct.size() - 1);
    std::bernoulli_distribution coin(std::clamp(cfg.alpha, 0.0, 1.0));
    std::unordered_map<std::string, ConditionalPolicy> cache;

    const std::size_t cap = cfg.iteration_cap_factor * target;
    std::size_t iterations = 0;
    out.reserve(target);
    while (out.size() < target && iterations < cap) {
        ++iterations;
        const LabeledCell& src = *correct[pick(rng)];
        if (!coin(rng)) continue;
        auto it = cache.find(src.observed);
        if (it == cache.end()) it = cache.emplace(src.observed, conditional_policy(policy, src.observed)).first;
        if (it->second.empty()) continue;
        const auto& t = sample(it->second, rng);
        out.push_back({src.cell, src.observed, apply(t, src.observed, rng)});
    }
    if (out.size() < target)
        warn("augmentation stopped at the iteration cap with " + std::to_string(out.size()) + " of " +
             std::to_string(target) + " examples");
    return out;
}

// ---------------------------------------------------------------------------
// Weak supervision: leave-one-out Naive Bayes imputation

// Strictly greater than the threshold ("more than 90%").
inline bool accept_repair(double posterior, double threshold = 0.90) { return posterior > threshold; }

struct WeakLabelConfig {
    double threshold = 0.90;
};

struct WeakLabel {
    CellRef cell;
    LabeledPair pair;
    double posterior = 0.0;
};

// For every cell, hides its value and imputes it from the other attributes of the tuple. Repairs that
// differ from the observed value with posterior above the threshold become (repair, observed) pairs.
inline std::vector<WeakLabel> weak_label_cells(const Dataset& d, const WeakLabelConfig& cfg = {}) {
    const auto n_attr = d.num_attributes();
    const auto n = d.num_tuples();
    std::vector<WeakLabel> out;
    if (n_attr < 2 || n < 2) return out;

    // Intern values per attribute.
    std::vector<std::unordered_map<std::string, std::uint32_t>> dict(n_attr);
    std::vector<std::vector<std::string>> values(n_attr);
    std::vector<std::vector<std::uint32_t>> ids(n, std::vector<std::uint32_t>(n_attr));
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t a = 0; a < n_attr; ++a) {
            auto [it, inserted] = dict[a].emplace(d.row(t)[a], static_cast<std::uint32_t>(values[a].size()));
            if (inserted) values[a].push_back(d.row(t)[a]);
            ids[t][a] = it->second;
        }
    std::vector<std::vector<double>> count(n_attr);
    for (std::size_t a = 0; a < n_attr; ++a) count[a].assign(values[a].size(), 0.0);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t a = 0; a < n_attr; ++a) count[a][ids[t][a]] += 1.0;

    auto pair_key = [](std::uint32_t u, std::uint32_t w) { return (static_cast<std::uint64_t>(u) << 32) | w; };
    // joint[i][j][(u, w)] = #tuples with A_i = u and A_j = w
    std::vector<std::vector<std::unordered_map<std::uint64_t, double>>> joint(
        n_attr, std::vector<std::unordered_map<std::uint64_t, double>>(n_attr));
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t i = 0; i < n_attr; ++i)
            for (std::size_t j = 0; j < n_attr; ++j)
                if (i != j) joint[i][j][pair_key(ids[t][i], ids[t][j])] += 1.0;

    std::vector<double> log_score;
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t i = 0; i < n_attr; ++i) {
            const auto v = ids[t][i];
            const auto n_cand = values[i].size();
            log_score.assign(n_cand, -std::numeric_limits<double>::infinity());
            for (std::uint32_t u = 0; u < n_cand; ++u) {
                const double self = u == v ? 1.0 : 0.0;
                const double cu = count[i][u] - self;
                if (cu <= 0.0) continue;
                double s = std::log(cu / static_cast<double>(n - 1));
                for (std::size_t j = 0; j < n_attr; ++j) {
                    if (j == i) continue;
                    const auto w = ids[t][j];
                    auto it = joint[i][j].find(pair_key(u, w));
                    const double c_uw = (it == joint[i][j].end() ? 0.0 : it->second) - self;
                    s += std::log((c_uw + 1.0) / (cu + static_cast<double>(values[j].size())));
                }
                log_score[u] = s;
            }
            const auto best = static_cast<std::uint32_t>(
                std::max_element(log_score.begin(), log_score.end()) - log_score.begin());
            if (best == v || !std::isfinite(log_score[best])) continue;
            double z = 0.0;
            for (double s : log_score)
                if (std::isfinite(s)) z += std::exp(s - log_score[best]);
            const double posterior = 1.0 / z;
            if (accept_repair(posterior, cfg.threshold))
                out.push_back({{t, i}, {values[i][best], values[i][v]}, posterior});
        }
    }
    return out;
}

inline std::vector<LabeledPair> weak_label_pairs(const Dataset& d, const WeakLabelConfig& cfg = {}) {
    std::vector<LabeledPair> out;
    for (auto& w : weak_label_cells(d, cfg)) out.push_back(std::move(w.pair));
    return out;
}

}  // namespace errdetect
