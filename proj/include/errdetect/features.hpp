#pragma once

#include <array>
#include <bitset>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "errdetect/constraints.hpp"
#include "errdetect/dataset.hpp"
#include "errdetect/embedding.hpp"
#include "errdetect/serialize.hpp"

namespace errdetect {

// ---------------------------------------------------------------------------
// Format models: Laplace-smoothed 3-gram distributions per attribute

enum class FormatAlphabet { raw, symbolic };

inline char symbol_class(unsigned char c) {
    if (std::isalpha(c)) return 'C';
    if (std::isdigit(c)) return 'N';
    return 'S';
}

// 3-grams of ^value$. Raw grams map non-ASCII bytes to 0x7F so every gram lies in the 128-symbol alphabet.
inline std::vector<std::string> format_grams(std::string_view value, FormatAlphabet alphabet) {
    std::string padded = "^";
    for (unsigned char c : value) {
        if (alphabet == FormatAlphabet::symbolic)
            padded.push_back(symbol_class(c));
        else
            padded.push_back(c < 0x80 ? static_cast<char>(c) : '\x7f');
    }
    padded.push_back('$');
    std::vector<std::string> grams;
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) grams.push_back(padded.substr(i, 3));
    return grams;
}

class NGramFormatModel {
public:
    NGramFormatModel() = default;
    explicit NGramFormatModel(FormatAlphabet a) : alphabet_(a) {}

    static NGramFormatModel fit(const std::vector<std::string>& values, FormatAlphabet a) {
        NGramFormatModel m(a);
        for (const auto& v : values)
            for (auto& g : format_grams(v, a)) {
                ++m.counts_[g];
                ++m.total_;
            }
        return m;
    }

    FormatAlphabet alphabet() const noexcept { return alphabet_; }
    // |alphabet|^3: 128 ASCII symbols for raw grams, {C, N, S, ^, $} for symbolic grams.
    double support() const noexcept {
        const double a = alphabet_ == FormatAlphabet::raw ? 128.0 : 5.0;
        return a * a * a;
    }
    std::uint64_t total() const noexcept { return total_; }
    std::uint64_t count(const std::string& gram) const {
        auto it = counts_.find(gram);
        return it == counts_.end() ? 0 : it->second;
    }
    const std::unordered_map<std::string, std::uint64_t>& counts() const noexcept { return counts_; }

    double probability(const std::string& gram) const {
        return (static_cast<double>(count(gram)) + 1.0) / (static_cast<double>(total_) + support());
    }

    // Smallest smoothed probability over the whole alphabet.
    double floor() const {
        if (static_cast<double>(counts_.size()) < support()) return 1.0 / (static_cast<double>(total_) + support());
        std::uint64_t lo = std::numeric_limits<std::uint64_t>::max();
        for (const auto& [g, c] : counts_) lo = std::min(lo, c);
        return (static_cast<double>(lo) + 1.0) / (static_cast<double>(total_) + support());
    }

    // Probability of the least frequent 3-gram of `value`.
    double score(const std::string& value) const { return score_substituted(value, value); }

    // Score of `value` as if it replaced one occurrence of `original` in the fitted column.
    double score_substituted(const std::string& value, const std::string& original) const {
        const auto grams = format_grams(value, alphabet_);
        if (grams.empty()) return floor();
        if (value == original) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& g : grams) best = std::min(best, probability(g));
            return best;
        }
        const auto removed = format_grams(original, alphabet_);
        auto occurrences = [](const std::vector<std::string>& gs, const std::string& g) {
            return static_cast<double>(std::count(gs.begin(), gs.end(), g));
        };
        const double total = static_cast<double>(total_) + static_cast<double>(grams.size()) -
                             static_cast<double>(removed.size()) + support();
        double best = std::numeric_limits<double>::infinity();
        for (const auto& g : grams) {
            const double c = static_cast<double>(count(g)) + occurrences(grams, g) - occurrences(removed, g);
            best = std::min(best, (std::max(c, 0.0) + 1.0) / total);
        }
        return best;
    }

    void save(io::BinaryWriter& w) const {
        w.u64(static_cast<std::uint64_t>(alphabet_));
        w.u64(total_);
        std::vector<std::string> keys;
        std::vector<double> vals;
        for (const auto& [g, c] : counts_) {
            keys.push_back(g);
            vals.push_back(static_cast<double>(c));
        }
        w.strs(keys);
        w.f64s(vals);
    }
    static NGramFormatModel load(io::BinaryReader& r) {
        NGramFormatModel m(static_cast<FormatAlphabet>(r.u64()));
        m.total_ = r.u64();
        auto keys = r.strs();
        auto vals = r.f64s();
        if (keys.size() != vals.size()) throw ParseError("format model size mismatch");
        for (std::size_t i = 0; i < keys.size(); ++i) m.counts_[keys[i]] = static_cast<std::uint64_t>(vals[i]);
        return m;
    }

private:
    FormatAlphabet alphabet_ = FormatAlphabet::raw;
    std::unordered_map<std::string, std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

// ---------------------------------------------------------------------------
// Value statistics: per-attribute value frequencies and pairwise co-occurrence

class ValueStatistics {
public:
    ValueStatistics() = default;

    static ValueStatistics fit(const Dataset& d) {
        ValueStatistics s;
        const auto n_attr = d.num_attributes();
        s.n_tuples_ = d.num_tuples();
        s.dict_.assign(n_attr, {});
        s.values_.assign(n_attr, {});
        s.counts_.assign(n_attr, {});
        s.joint_.assign(n_attr * n_attr, {});
        std::vector<std::uint32_t> ids(n_attr);
        for (const auto& row : d.rows()) {
            for (std::size_t a = 0; a < n_attr; ++a) {
                auto [it, inserted] = s.dict_[a].emplace(row[a], static_cast<std::uint32_t>(s.values_[a].size()));
                if (inserted) {
                    s.values_[a].push_back(row[a]);
                    s.counts_[a].push_back(0);
                }
                ids[a] = it->second;
                ++s.counts_[a][ids[a]];
            }
            for (std::size_t i = 0; i < n_attr; ++i)
                for (std::size_t j = 0; j < n_attr; ++j)
                    if (i != j) ++s.joint_[i * n_attr + j][key(ids[i], ids[j])];
        }
        return s;
    }

    std::size_t num_attributes() const noexcept { return values_.size(); }
    std::size_t num_tuples() const noexcept { return n_tuples_; }
    const std::vector<std::string>& distinct_values(std::size_t attr) const { return values_.at(attr); }

    std::uint64_t count(std::size_t attr, const std::string& v) const {
        auto id = lookup(attr, v);
        return id ? counts_[attr][*id] : 0;
    }

    // Relative frequency of v among the values of attr.
    double frequency(std::size_t attr, const std::string& v) const {
        return n_tuples_ ? static_cast<double>(count(attr, v)) / static_cast<double>(n_tuples_) : 0.0;
    }

    std::uint64_t joint_count(std::size_t attr_a, const std::string& a, std::size_t attr_b, const std::string& b) const {
        auto ia = lookup(attr_a, a);
        auto ib = lookup(attr_b, b);
        if (!ia || !ib) return 0;
        const auto& m = joint_[attr_a * values_.size() + attr_b];
        auto it = m.find(key(*ia, *ib));
        return it == m.end() ? 0 : it->second;
    }

    // P(A_target = v | A_given = w); 0 when w was never observed.
    double conditional(std::size_t target, const std::string& v, std::size_t given, const std::string& w) const {
        const auto cw = count(given, w);
        if (cw == 0) return 0.0;
        return static_cast<double>(joint_count(target, v, given, w)) / static_cast<double>(cw);
    }

    // All observed (v, P(v | w)) for a fixed conditioning value.
    std::vector<std::pair<std::string, double>> conditional_distribution(std::size_t target, std::size_t given,
                                                                         const std::string& w) const {
        std::vector<std::pair<std::string, double>> out;
        const auto cw = count(given, w);
        if (cw == 0) return out;
        for (const auto& v : values_[target]) {
            const auto c = joint_count(target, v, given, w);
            if (c) out.emplace_back(v, static_cast<double>(c) / static_cast<double>(cw));
        }
        return out;
    }

    void save(io::BinaryWriter& w) const {
        w.u64(n_tuples_);
        w.u64(values_.size());
        for (std::size_t a = 0; a < values_.size(); ++a) {
            w.strs(values_[a]);
            std::vector<double> c(counts_[a].begin(), counts_[a].end());
            w.f64s(c);
        }
        for (const auto& m : joint_) {
            w.u64(m.size());
            for (const auto& [k, c] : m) {
                w.u64(k);
                w.u64(c);
            }
        }
    }
    static ValueStatistics load(io::BinaryReader& r) {
        ValueStatistics s;
        s.n_tuples_ = r.u64();
        const auto n_attr = r.u64();
        s.values_.resize(n_attr);
        s.counts_.resize(n_attr);
        s.dict_.resize(n_attr);
        for (std::size_t a = 0; a < n_attr; ++a) {
            s.values_[a] = r.strs();
            auto c = r.f64s();
            s.counts_[a].assign(c.begin(), c.end());
            for (std::size_t i = 0; i < s.values_[a].size(); ++i)
                s.dict_[a].emplace(s.values_[a][i], static_cast<std::uint32_t>(i));
        }
        s.joint_.resize(n_attr * n_attr);
        for (auto& m : s.joint_) {
            const auto n = r.u64();
            for (std::uint64_t i = 0; i < n; ++i) {
                const auto k = r.u64();
                m[k] = r.u64();
            }
        }
        return s;
    }

private:
    static std::uint64_t key(std::uint32_t a, std::uint32_t b) { return (static_cast<std::uint64_t>(a) << 32) | b; }
    std::optional<std::uint32_t> lookup(std::size_t attr, const std::string& v) const {
        auto it = dict_.at(attr).find(v);
        if (it == dict_[attr].end()) return std::nullopt;
        return it->second;
    }

    std::size_t n_tuples_ = 0;
    std::vector<std::unordered_map<std::string, std::uint32_t>> dict_;
    std::vector<std::vector<std::string>> values_;
    std::vector<std::vector<std::uint64_t>> counts_;
    std::vector<std::unordered_map<std::uint64_t, std::uint64_t>> joint_;  // [i * N + j]
};

// ---------------------------------------------------------------------------
// Layout

// Representation model groups; each can be switched off for ablations.
enum class FeatureGroup {
    character,        // char-embedding pathway
    word,             // cell-token embedding pathway
    tuple,            // tuple bag-of-tokens pathway
    neighborhood,     // dataset-level embedding pathway + nearest-neighbor distance
    format,           // raw 3-gram
    symbolic_format,  // symbolic 3-gram
    empirical,        // value frequency
    column_id,        // one-hot attribute id
    cooccurrence,
    constraints,
};

inline constexpr std::size_t kFeatureGroups = 10;

inline std::string_view to_string(FeatureGroup g) {
    constexpr std::array<std::string_view, kFeatureGroups> names{
        "character", "word", "tuple", "neighborhood", "format", "symbolic-format",
        "empirical", "column-id", "cooccurrence", "constraints"};
    return names[static_cast<std::size_t>(g)];
}

inline std::optional<FeatureGroup> feature_group_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kFeatureGroups; ++i)
        if (to_string(static_cast<FeatureGroup>(i)) == s) return static_cast<FeatureGroup>(i);
    return std::nullopt;
}

class FeatureMask {
public:
    FeatureMask() { bits_.set(); }
    static FeatureMask all() { return {}; }
    static FeatureMask without(FeatureGroup g) {
        FeatureMask m;
        m.bits_.reset(static_cast<std::size_t>(g));
        return m;
    }
    bool enabled(FeatureGroup g) const { return bits_.test(static_cast<std::size_t>(g)); }
    void set(FeatureGroup g, bool on) { bits_.set(static_cast<std::size_t>(g), on); }
    std::uint64_t bits() const { return bits_.to_ullong(); }
    static FeatureMask from_bits(std::uint64_t b) {
        FeatureMask m;
        m.bits_ = std::bitset<kFeatureGroups>(b);
        return m;
    }
    bool operator==(const FeatureMask&) const = default;

private:
    std::bitset<kFeatureGroups> bits_;
};

enum class WideTransform { log_probability, log1p_count, identity };

inline constexpr std::array<Granularity, 4> kPathways{Granularity::character, Granularity::cell_token,
                                                      Granularity::tuple_bag, Granularity::dataset_neighbor};

inline FeatureGroup pathway_group(Granularity g) {
    switch (g) {
        case Granularity::character: return FeatureGroup::character;
        case Granularity::cell_token: return FeatureGroup::word;
        case Granularity::tuple_bag: return FeatureGroup::tuple;
        case Granularity::dataset_neighbor: return FeatureGroup::neighborhood;
    }
    return FeatureGroup::character;
}

// Wide block order: raw 3-gram, symbolic 3-gram, value frequency, one-hot column (N),
// co-occurrence (N-1), violations (|sigma|), neighbor distance. Disabled groups are omitted.
// Deep inputs follow kPathways order, one embedding_dim block per enabled pathway.
struct FeatureLayout {
    std::vector<std::string> wide_names;
    std::vector<WideTransform> transforms;
    std::vector<Granularity> pathways;
    std::size_t embedding_dim = 50;
    std::uint64_t fingerprint = 0;

    std::size_t wide_dim() const noexcept { return wide_names.size(); }
    std::size_t deep_dim() const noexcept { return pathways.size() * embedding_dim; }

    static FeatureLayout make(const Schema& schema, const std::vector<DenialConstraint>& sigma, const FeatureMask& mask,
                              std::size_t embedding_dim) {
        FeatureLayout l;
        l.embedding_dim = embedding_dim;
        auto add = [&](std::string name, WideTransform t) {
            l.wide_names.push_back(std::move(name));
            l.transforms.push_back(t);
        };
        const auto n = schema.size();
        if (mask.enabled(FeatureGroup::format)) add("format.3gram", WideTransform::log_probability);
        if (mask.enabled(FeatureGroup::symbolic_format)) add("format.symbolic", WideTransform::log_probability);
        if (mask.enabled(FeatureGroup::empirical)) add("empirical.frequency", WideTransform::log_probability);
        if (mask.enabled(FeatureGroup::column_id))
            for (std::size_t a = 0; a < n; ++a) add("column." + schema.name(a), WideTransform::identity);
        if (mask.enabled(FeatureGroup::cooccurrence))
            for (std::size_t k = 0; k + 1 < n; ++k)
                add("cooccurrence." + std::to_string(k), WideTransform::log_probability);
        if (mask.enabled(FeatureGroup::constraints))
            for (const auto& dc : sigma) add("violations." + dc.id, WideTransform::log1p_count);
        if (mask.enabled(FeatureGroup::neighborhood)) add("neighborhood.distance", WideTransform::identity);
        for (auto g : kPathways)
            if (mask.enabled(pathway_group(g))) l.pathways.push_back(g);

        std::uint64_t h = fnv1a("errdetect-layout-v1");
        for (const auto& a : schema.names()) h = fnv1a(a, h ^ 0x1f);
        for (const auto& dc : sigma) h = fnv1a(dc.text, h ^ 0x1e);
        h = fnv1a(std::to_string(mask.bits()) + "/" + std::to_string(embedding_dim), h);
        l.fingerprint = h;
        return l;
    }
};

// One cell's representation: the fixed statistics and the raw embedding inputs of each pathway.
struct FeatureVector {
    std::vector<double> wide;
    std::vector<double> deep;
    bool operator==(const FeatureVector&) const = default;
};

// Per-dimension transform and standardization applied before the classifier.
struct FeatureScaler {
    std::vector<double> mean;
    std::vector<double> scale;

    static double transform(WideTransform t, double x) {
        switch (t) {
            case WideTransform::log_probability: return std::log(std::max(x, 1e-9));
            case WideTransform::log1p_count: return std::log1p(std::max(x, 0.0));
            case WideTransform::identity: return x;
        }
        return x;
    }

    void apply(const FeatureLayout& l, const std::vector<double>& raw, double* out) const {
        for (std::size_t k = 0; k < raw.size(); ++k) out[k] = (transform(l.transforms[k], raw[k]) - mean[k]) / scale[k];
    }
};

inline std::vector<std::string> tokenize(std::string_view value) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < value.size()) {
        while (i < value.size() && std::isspace(static_cast<unsigned char>(value[i]))) ++i;
        const auto start = i;
        while (i < value.size() && !std::isspace(static_cast<unsigned char>(value[i]))) ++i;
        if (i > start) out.emplace_back(value.substr(start, i - start));
    }
    return out;
}

inline std::vector<std::string> characters(std::string_view value) {
    std::vector<std::string> out;
    out.reserve(value.size());
    for (char c : value) out.emplace_back(1, c);
    return out;
}

struct PipelineConfig {
    EmbeddingConfig embedding;
    FeatureMask mask;
};

class Featurizer;

// Every non-learnable representation model, fitted on one dataset.
class FeaturePipeline {
public:
    FeaturePipeline() = default;

    static FeaturePipeline fit(const Dataset& d, std::vector<DenialConstraint> sigma, const PipelineConfig& cfg);

    const Schema& schema() const noexcept { return schema_; }
    const std::vector<DenialConstraint>& constraints() const noexcept { return sigma_; }
    const FeatureLayout& layout() const noexcept { return layout_; }
    const FeatureMask& mask() const noexcept { return mask_; }
    const FeatureScaler& scaler() const noexcept { return scaler_; }
    bool fitted() const noexcept { return fitted_; }

    const NGramFormatModel& format_model(std::size_t attr, FormatAlphabet a) const {
        return a == FormatAlphabet::raw ? raw_format_.at(attr) : symbolic_format_.at(attr);
    }
    const ValueStatistics& statistics() const noexcept { return stats_; }
    const EmbeddingModel& embedding(Granularity g) const { return embeddings_.at(static_cast<std::size_t>(g)); }

    // Minimum cosine distance between `value` and any other distinct value of the attribute.
    double neighborhood_distance(std::size_t attr, const std::string& value) const {
        return neighborhood_distance(attr, value, embedding(Granularity::dataset_neighbor).vector(value));
    }
    double neighborhood_distance(std::size_t attr, const std::string& value, const std::vector<double>& v) const {
        const auto& values = stats_.distinct_values(attr);
        const auto& vecs = neighbor_unit_.at(attr);
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        double best = std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i] == value) continue;
            any = true;
            double dot = 0.0;
            const double* u = vecs.data() + i * v.size();
            for (std::size_t k = 0; k < v.size(); ++k) dot += u[k] * v[k];
            const double cos = norm > 0.0 ? dot / norm : 0.0;
            best = std::min(best, 1.0 - cos);
        }
        return any ? best : 0.0;
    }

    // Constraints are stored as text and re-parsed against the stored schema on load.
    void save(io::BinaryWriter& w) const;
    static FeaturePipeline load(io::BinaryReader& r);

private:
    friend class Featurizer;
    void finish(const Dataset& d);
    void build_neighbor_index();

    bool fitted_ = false;
    Schema schema_;
    std::vector<DenialConstraint> sigma_;
    FeatureMask mask_;
    FeatureLayout layout_;
    FeatureScaler scaler_;
    std::vector<NGramFormatModel> raw_format_;
    std::vector<NGramFormatModel> symbolic_format_;
    ValueStatistics stats_;
    std::array<EmbeddingModel, 4> embeddings_;
    std::vector<std::vector<double>> neighbor_unit_;  // per attribute, unit vectors of distinct values
};

// A pipeline bound to a dataset: caches violation counts and per-tuple sums so cells featurize quickly.
class Featurizer {
public:
    Featurizer(const FeaturePipeline& p, const Dataset& d) : p_(p), d_(d) {
        if (!p.fitted()) throw ConfigError("feature pipeline is not fitted");
        if (!(d.schema() == p.schema())) throw ConfigError("dataset schema differs from the fitted pipeline");
        if (p.mask().enabled(FeatureGroup::constraints)) violations_ = count_violations(d, p.constraints());
        if (p.mask().enabled(FeatureGroup::tuple)) {
            const auto dim = static_cast<std::size_t>(p.layout().embedding_dim);
            tuple_sum_.assign(d.num_tuples(), std::vector<double>(dim, 0.0));
            tuple_tokens_.assign(d.num_tuples(), 0);
            for (std::size_t t = 0; t < d.num_tuples(); ++t)
                for (const auto& v : d.row(t)) {
                    const auto& tv = token_sum(v);
                    for (std::size_t k = 0; k < dim; ++k) tuple_sum_[t][k] += tv.sum[k];
                    tuple_tokens_[t] += tv.count;
                }
        }
    }

    const FeaturePipeline& pipeline() const noexcept { return p_; }
    const Dataset& dataset() const noexcept { return d_; }

    FeatureVector featurize(CellRef c) const { return featurize(c, d_.at(c)); }

    // Features for `value` placed in cell c, with the rest of the tuple and dataset unchanged.
    FeatureVector featurize(CellRef c, const std::string& value) const {
        const auto& layout = p_.layout();
        const auto& mask = p_.mask();
        const auto& stats = p_.statistics();
        const auto& original = d_.at(c);
        const bool substituted = value != original;
        const auto n = d_.num_attributes();
        const auto& row = d_.row(c.tuple);

        FeatureVector fv;
        fv.wide.reserve(layout.wide_dim());
        if (mask.enabled(FeatureGroup::format))
            fv.wide.push_back(p_.raw_format_[c.attr].score_substituted(value, original));
        if (mask.enabled(FeatureGroup::symbolic_format))
            fv.wide.push_back(p_.symbolic_format_[c.attr].score_substituted(value, original));
        if (mask.enabled(FeatureGroup::empirical)) {
            const double cnt = static_cast<double>(stats.count(c.attr, value)) + (substituted ? 1.0 : 0.0);
            fv.wide.push_back(cnt / static_cast<double>(std::max<std::size_t>(stats.num_tuples(), 1)));
        }
        if (mask.enabled(FeatureGroup::column_id))
            for (std::size_t a = 0; a < n; ++a) fv.wide.push_back(a == c.attr ? 1.0 : 0.0);
        if (mask.enabled(FeatureGroup::cooccurrence))
            for (std::size_t j = 0; j < n; ++j) {
                if (j == c.attr) continue;
                const auto cw = stats.count(j, row[j]);
                if (cw == 0) {
                    fv.wide.push_back(0.0);
                    continue;
                }
                const double joint = static_cast<double>(stats.joint_count(c.attr, value, j, row[j])) +
                                     (substituted ? 1.0 : 0.0);
                fv.wide.push_back(joint / static_cast<double>(cw));
            }
        if (mask.enabled(FeatureGroup::constraints)) {
            if (!substituted) {
                for (auto v : violations_[c.tuple]) fv.wide.push_back(static_cast<double>(v));
            } else {
                Row modified = row;
                modified[c.attr] = value;
                for (auto v : violations_for_row(d_, p_.constraints(), c.tuple, modified))
                    fv.wide.push_back(static_cast<double>(v));
            }
        }
        if (mask.enabled(FeatureGroup::neighborhood)) fv.wide.push_back(neighbor_distance(c.attr, value));

        const auto dim = layout.embedding_dim;
        fv.deep.reserve(layout.deep_dim());
        for (auto g : layout.pathways) {
            switch (g) {
                case Granularity::character: append_mean(fv.deep, char_sum(value)); break;
                case Granularity::cell_token: append_mean(fv.deep, token_sum(value)); break;
                case Granularity::tuple_bag: {
                    std::vector<double> sum = tuple_sum_[c.tuple];
                    std::size_t count = tuple_tokens_[c.tuple];
                    if (substituted) {
                        const auto& old_sum = token_sum(original);
                        const auto& new_sum = token_sum(value);
                        for (std::size_t k = 0; k < dim; ++k) sum[k] += new_sum.sum[k] - old_sum.sum[k];
                        count = count + new_sum.count - old_sum.count;
                    }
                    append_mean(fv.deep, {std::move(sum), count});
                    break;
                }
                case Granularity::dataset_neighbor: {
                    const auto& nv = neighbor_vector(value);
                    fv.deep.insert(fv.deep.end(), nv.begin(), nv.end());
                    break;
                }
            }
        }
        return fv;
    }

    // Classifier input: scaled wide block followed by raw deep inputs.
    std::vector<double> model_input(const FeatureVector& fv) const {
        std::vector<double> x(fv.wide.size() + fv.deep.size());
        p_.scaler().apply(p_.layout(), fv.wide, x.data());
        std::copy(fv.deep.begin(), fv.deep.end(), x.begin() + static_cast<std::ptrdiff_t>(fv.wide.size()));
        return x;
    }

    const ViolationCounts& violations() const noexcept { return violations_; }

private:
    struct Sum {
        std::vector<double> sum;
        std::size_t count = 0;
    };

    static void append_mean(std::vector<double>& out, const Sum& s) {
        const double inv = s.count ? 1.0 / static_cast<double>(s.count) : 0.0;
        for (double x : s.sum) out.push_back(x * inv);
    }

    const Sum& char_sum(const std::string& value) const {
        auto it = char_cache_.find(value);
        if (it != char_cache_.end()) return it->second;
        const auto& m = p_.embedding(Granularity::character);
        Sum s{std::vector<double>(static_cast<std::size_t>(m.dim()), 0.0), 0};
        for (const auto& ch : characters(value)) {
            m.accumulate(ch, s.sum.data());
            ++s.count;
        }
        return char_cache_.emplace(value, std::move(s)).first->second;
    }

    const Sum& token_sum(const std::string& value) const {
        auto it = token_cache_.find(value);
        if (it != token_cache_.end()) return it->second;
        const auto& m = p_.embedding(Granularity::cell_token);
        Sum s{std::vector<double>(static_cast<std::size_t>(m.dim()), 0.0), 0};
        for (const auto& tok : tokenize(value)) {
            m.accumulate(tok, s.sum.data());
            ++s.count;
        }
        return token_cache_.emplace(value, std::move(s)).first->second;
    }

    const std::vector<double>& neighbor_vector(const std::string& value) const {
        auto it = neighbor_cache_.find(value);
        if (it != neighbor_cache_.end()) return it->second;
        return neighbor_cache_.emplace(value, p_.embedding(Granularity::dataset_neighbor).vector(value)).first->second;
    }

    double neighbor_distance(std::size_t attr, const std::string& value) const {
        const std::string key = std::to_string(attr) + '\x1f' + value;
        auto it = distance_cache_.find(key);
        if (it != distance_cache_.end()) return it->second;
        const double dist = p_.neighborhood_distance(attr, value, neighbor_vector(value));
        distance_cache_.emplace(key, dist);
        return dist;
    }

    const FeaturePipeline& p_;
    const Dataset& d_;
    ViolationCounts violations_;
    std::vector<std::vector<double>> tuple_sum_;
    std::vector<std::size_t> tuple_tokens_;
    mutable std::unordered_map<std::string, Sum> char_cache_;
    mutable std::unordered_map<std::string, Sum> token_cache_;
    mutable std::unordered_map<std::string, std::vector<double>> neighbor_cache_;
    mutable std::unordered_map<std::string, double> distance_cache_;
};

inline FeatureVector featurize(const FeaturePipeline& p, const Dataset& d, CellRef c) {
    return Featurizer(p, d).featurize(c);
}

// ---------------------------------------------------------------------------

inline std::vector<std::vector<std::string>> embedding_corpus(const Dataset& d, Granularity g) {
    std::vector<std::vector<std::string>> corpus;
    for (const auto& row : d.rows()) {
        switch (g) {
            case Granularity::character:
                for (const auto& v : row)
                    if (!v.empty()) corpus.push_back(characters(v));
                break;
            case Granularity::cell_token:
            case Granularity::tuple_bag: {
                std::vector<std::string> toks;
                for (const auto& v : row)
                    for (auto& t : tokenize(v)) toks.push_back(std::move(t));
                if (!toks.empty()) corpus.push_back(std::move(toks));
                break;
            }
            case Granularity::dataset_neighbor: {
                std::vector<std::string> vals;
                for (const auto& v : row)
                    if (!v.empty()) vals.push_back(v);
                if (!vals.empty()) corpus.push_back(std::move(vals));
                break;
            }
        }
    }
    return corpus;
}

// Trains one embedding model per granularity; tuple-bag and dataset-neighbor use order-free contexts.
inline std::array<EmbeddingModel, 4> fit_embeddings(const Dataset& d, const EmbeddingConfig& cfg) {
    if (d.num_tuples() == 0) throw ConfigError("cannot fit embeddings on an empty dataset");
    std::array<EmbeddingModel, 4> out;
    for (auto g : kPathways) {
        EmbeddingConfig c = cfg;
        c.seed = cfg.seed * 4 + static_cast<std::uint64_t>(g) + 1;
        if (g == Granularity::character) c.min_count = 1;
        const bool bag = g == Granularity::tuple_bag || g == Granularity::dataset_neighbor;
        out[static_cast<std::size_t>(g)] = EmbeddingModel::train(g, embedding_corpus(d, g), bag, c);
    }
    return out;
}

inline FeaturePipeline FeaturePipeline::fit(const Dataset& d, std::vector<DenialConstraint> sigma,
                                            const PipelineConfig& cfg) {
    FeaturePipeline p;
    p.schema_ = d.schema();
    p.sigma_ = std::move(sigma);
    p.mask_ = cfg.mask;
    p.layout_ = FeatureLayout::make(p.schema_, p.sigma_, p.mask_, static_cast<std::size_t>(cfg.embedding.dims));
    for (std::size_t a = 0; a < d.num_attributes(); ++a) {
        std::vector<std::string> column;
        column.reserve(d.num_tuples());
        for (const auto& row : d.rows()) column.push_back(row[a]);
        p.raw_format_.push_back(NGramFormatModel::fit(column, FormatAlphabet::raw));
        p.symbolic_format_.push_back(NGramFormatModel::fit(column, FormatAlphabet::symbolic));
    }
    p.stats_ = ValueStatistics::fit(d);
    p.embeddings_ = fit_embeddings(d, cfg.embedding);
    p.finish(d);
    return p;
}

inline void FeaturePipeline::build_neighbor_index() {
    const auto& nm = embedding(Granularity::dataset_neighbor);
    neighbor_unit_.assign(schema_.size(), {});
    for (std::size_t a = 0; a < schema_.size(); ++a) {
        for (const auto& v : stats_.distinct_values(a)) {
            auto vec = nm.vector(v);
            double norm = 0.0;
            for (double x : vec) norm += x * x;
            norm = std::sqrt(norm);
            for (double x : vec) neighbor_unit_[a].push_back(norm > 0.0 ? x / norm : 0.0);
        }
    }
}

inline void FeaturePipeline::finish(const Dataset& d) {
    build_neighbor_index();
    fitted_ = true;
    // Standardize the transformed wide block over every cell of the fitting dataset.
    const auto w = layout_.wide_dim();
    scaler_.mean.assign(w, 0.0);
    scaler_.scale.assign(w, 1.0);
    if (w == 0 || d.num_cells() == 0) return;
    std::vector<double> sum(w, 0.0), sq(w, 0.0);
    Featurizer f(*this, d);
    for (std::size_t t = 0; t < d.num_tuples(); ++t)
        for (std::size_t a = 0; a < d.num_attributes(); ++a) {
            const auto fv = f.featurize({t, a});
            for (std::size_t k = 0; k < w; ++k) {
                const double x = FeatureScaler::transform(layout_.transforms[k], fv.wide[k]);
                sum[k] += x;
                sq[k] += x * x;
            }
        }
    const double n = static_cast<double>(d.num_cells());
    for (std::size_t k = 0; k < w; ++k) {
        scaler_.mean[k] = sum[k] / n;
        const double var = std::max(sq[k] / n - scaler_.mean[k] * scaler_.mean[k], 0.0);
        scaler_.scale[k] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
}

inline void FeaturePipeline::save(io::BinaryWriter& w) const {
    w.strs(schema_.names());
    std::vector<std::string> texts;
    for (const auto& dc : sigma_) texts.push_back(dc.text);
    w.strs(texts);
    w.u64(mask_.bits());
    w.u64(layout_.embedding_dim);
    w.u64(layout_.fingerprint);
    w.f64s(scaler_.mean);
    w.f64s(scaler_.scale);
    for (const auto& m : raw_format_) m.save(w);
    for (const auto& m : symbolic_format_) m.save(w);
    stats_.save(w);
    for (const auto& e : embeddings_) e.save(w);
}

inline FeaturePipeline FeaturePipeline::load(io::BinaryReader& r) {
    FeaturePipeline p;
    p.schema_ = Schema(r.strs());
    const auto texts = r.strs();
    for (std::size_t i = 0; i < texts.size(); ++i)
        p.sigma_.push_back(parse_dc(texts[i], p.schema_, "dc" + std::to_string(i + 1)));
    p.mask_ = FeatureMask::from_bits(r.u64());
    const auto dim = r.u64();
    const auto fingerprint = r.u64();
    p.layout_ = FeatureLayout::make(p.schema_, p.sigma_, p.mask_, dim);
    if (p.layout_.fingerprint != fingerprint) throw ParseError("pipeline layout fingerprint mismatch");
    p.scaler_.mean = r.f64s();
    p.scaler_.scale = r.f64s();
    for (std::size_t a = 0; a < p.schema_.size(); ++a) p.raw_format_.push_back(NGramFormatModel::load(r));
    for (std::size_t a = 0; a < p.schema_.size(); ++a) p.symbolic_format_.push_back(NGramFormatModel::load(r));
    p.stats_ = ValueStatistics::load(r);
    for (auto& e : p.embeddings_) e = EmbeddingModel::load(r);
    p.build_neighbor_index();
    p.fitted_ = true;
    return p;
}

}  // namespace errdetect
