#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "errdetect/common.hpp"
#include "errdetect/serialize.hpp"

namespace errdetect {

enum class Granularity { character, cell_token, tuple_bag, dataset_neighbor };

inline std::string_view to_string(Granularity g) {
    switch (g) {
        case Granularity::character: return "character";
        case Granularity::cell_token: return "cell-token";
        case Granularity::tuple_bag: return "tuple-bag";
        case Granularity::dataset_neighbor: return "dataset-neighbor";
    }
    return "?";
}

struct EmbeddingConfig {
    int dims = 50;
    int epochs = 5;
    int window = 2;       // ignored when bag_context is set
    int bag_samples = 8;  // contexts drawn per center token when bag_context is set
    int negatives = 5;
    double learning_rate = 0.05;
    int min_count = 2;    // rarer tokens are embedded from subwords only
    int min_n = 3;
    int max_n = 5;
    std::size_t buckets = 4096;
    std::uint64_t seed = 0;
};

// Skip-gram with negative sampling over tokens and hashed character n-grams. A token's vector is the
// mean of its own row and its n-gram rows; out-of-vocabulary tokens use the n-gram rows alone.
class EmbeddingModel {
public:
    EmbeddingModel() = default;

    // `bag_context`: every other token of the sentence is context (order-free); otherwise a sliding window.
    static EmbeddingModel train(Granularity g, const std::vector<std::vector<std::string>>& corpus, bool bag_context,
                                const EmbeddingConfig& cfg) {
        EmbeddingModel m;
        m.granularity_ = g;
        m.dim_ = cfg.dims;
        m.min_n_ = cfg.min_n;
        m.max_n_ = cfg.max_n;
        m.buckets_ = cfg.buckets;

        std::unordered_map<std::string, std::uint64_t> freq;
        std::vector<std::string> order;
        std::size_t n_tokens = 0;
        for (const auto& s : corpus)
            for (const auto& w : s) {
                if (freq[w]++ == 0) order.push_back(w);
                ++n_tokens;
            }
        if (n_tokens == 0) throw ConfigError("cannot train embeddings on an empty corpus");
        // Rows of the output layer cover every token; input rows only frequent ones.
        for (const auto& w : order) {
            m.out_index_.emplace(w, static_cast<std::uint32_t>(m.out_words_.size()));
            m.out_words_.push_back(w);
            if (freq[w] >= static_cast<std::uint64_t>(cfg.min_count)) {
                m.vocab_.emplace(w, static_cast<std::uint32_t>(m.words_.size()));
                m.words_.push_back(w);
            }
        }

        const std::size_t d = static_cast<std::size_t>(m.dim_);
        const std::size_t rows = m.words_.size() + m.buckets_;
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> init(-1.0 / m.dim_, 1.0 / m.dim_);
        m.input_.resize(rows * d);
        for (auto& x : m.input_) x = init(rng);
        std::vector<double> output(m.out_words_.size() * d, 0.0);

        // Unigram^0.5 table for negative sampling.
        std::vector<std::uint32_t> table;
        {
            constexpr std::size_t kTable = 1 << 18;
            double total = 0.0;
            for (const auto& w : m.out_words_) total += std::sqrt(static_cast<double>(freq[w]));
            table.reserve(kTable + m.out_words_.size());
            for (std::uint32_t i = 0; i < m.out_words_.size(); ++i) {
                const auto share = std::sqrt(static_cast<double>(freq[m.out_words_[i]])) / total;
                const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(share * kTable));
                table.insert(table.end(), n, i);
            }
        }
        std::uniform_int_distribution<std::size_t> negative(0, table.size() - 1);

        // Pre-resolve sentences to (input rows, output row).
        struct Tok {
            std::vector<std::uint32_t> rows;
            std::uint32_t out;
        };
        std::vector<std::vector<Tok>> sentences;
        sentences.reserve(corpus.size());
        for (const auto& s : corpus) {
            std::vector<Tok> toks;
            toks.reserve(s.size());
            for (const auto& w : s) toks.push_back({m.input_rows(w), m.out_index_.at(w)});
            sentences.push_back(std::move(toks));
        }

        std::vector<double> h(d), grad(d);
        std::vector<std::size_t> contexts;
        const double total_steps = static_cast<double>(cfg.epochs) * static_cast<double>(n_tokens);
        double step = 0.0;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            for (const auto& s : sentences) {
                for (std::size_t i = 0; i < s.size(); ++i) {
                    const double lr = cfg.learning_rate * std::max(1e-4, 1.0 - step / total_steps);
                    step += 1.0;
                    contexts.clear();
                    if (bag_context) {
                        if (s.size() <= static_cast<std::size_t>(cfg.bag_samples) + 1) {
                            for (std::size_t j = 0; j < s.size(); ++j)
                                if (j != i) contexts.push_back(j);
                        } else {
                            std::uniform_int_distribution<std::size_t> other(0, s.size() - 2);
                            for (int k = 0; k < cfg.bag_samples; ++k) {
                                const auto j = other(rng);
                                contexts.push_back(j >= i ? j + 1 : j);
                            }
                        }
                    } else {
                        const auto w = static_cast<std::size_t>(cfg.window);
                        for (std::size_t j = i >= w ? i - w : 0; j < std::min(s.size(), i + w + 1); ++j)
                            if (j != i) contexts.push_back(j);
                    }
                    if (contexts.empty()) continue;
                    const auto& center = s[i];
                    m.hidden(center.rows, h.data());
                    std::fill(grad.begin(), grad.end(), 0.0);
                    auto update = [&](std::uint32_t target, double label) {
                        double* u = output.data() + static_cast<std::size_t>(target) * d;
                        double dot = 0.0;
                        for (std::size_t k = 0; k < d; ++k) dot += h[k] * u[k];
                        const double g = lr * (label - sigmoid(dot));
                        for (std::size_t k = 0; k < d; ++k) {
                            grad[k] += g * u[k];
                            u[k] += g * h[k];
                        }
                    };
                    for (auto j : contexts) {
                        update(s[j].out, 1.0);
                        for (int n = 0; n < cfg.negatives; ++n) {
                            const auto neg = table[negative(rng)];
                            if (neg == s[j].out) continue;
                            update(neg, 0.0);
                        }
                    }
                    for (auto r : center.rows) {
                        double* v = m.input_.data() + static_cast<std::size_t>(r) * d;
                        for (std::size_t k = 0; k < d; ++k) v[k] += grad[k];
                    }
                }
            }
        }
        return m;
    }

    Granularity granularity() const noexcept { return granularity_; }
    int dim() const noexcept { return dim_; }
    bool in_vocabulary(const std::string& token) const { return vocab_.count(token) > 0; }
    std::size_t vocabulary_size() const noexcept { return words_.size(); }
    const std::vector<std::string>& vocabulary() const noexcept { return words_; }

    // Never fails: unknown tokens are composed from their n-gram buckets.
    std::vector<double> vector(const std::string& token) const {
        std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
        if (token.empty()) return out;
        hidden(input_rows(token), out.data());
        return out;
    }

    // Adds vector(token) into `acc`.
    void accumulate(const std::string& token, double* acc) const {
        const auto v = vector(token);
        for (std::size_t k = 0; k < v.size(); ++k) acc[k] += v[k];
    }

    void save(io::BinaryWriter& w) const {
        w.u64(static_cast<std::uint64_t>(granularity_));
        w.u64(static_cast<std::uint64_t>(dim_));
        w.u64(static_cast<std::uint64_t>(min_n_));
        w.u64(static_cast<std::uint64_t>(max_n_));
        w.u64(buckets_);
        w.strs(words_);
        w.f64s(input_);
    }

    static EmbeddingModel load(io::BinaryReader& r) {
        EmbeddingModel m;
        m.granularity_ = static_cast<Granularity>(r.u64());
        m.dim_ = static_cast<int>(r.u64());
        m.min_n_ = static_cast<int>(r.u64());
        m.max_n_ = static_cast<int>(r.u64());
        m.buckets_ = r.u64();
        m.words_ = r.strs();
        m.input_ = r.f64s();
        for (std::size_t i = 0; i < m.words_.size(); ++i) m.vocab_.emplace(m.words_[i], static_cast<std::uint32_t>(i));
        if (m.input_.size() != (m.words_.size() + m.buckets_) * static_cast<std::size_t>(m.dim_))
            throw ParseError("embedding table size mismatch");
        return m;
    }

private:
    static double sigmoid(double x) {
        if (x > 30.0) return 1.0;
        if (x < -30.0) return 0.0;
        return 1.0 / (1.0 + std::exp(-x));
    }

    std::vector<std::uint32_t> input_rows(const std::string& token) const {
        std::vector<std::uint32_t> rows;
        if (auto it = vocab_.find(token); it != vocab_.end()) rows.push_back(it->second);
        const std::string padded = "<" + token + ">";
        const auto base = static_cast<std::uint32_t>(words_.size());
        for (int n = min_n_; n <= max_n_; ++n)
            for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= padded.size(); ++i)
                rows.push_back(base + static_cast<std::uint32_t>(
                                          fnv1a(std::string_view(padded).substr(i, static_cast<std::size_t>(n))) %
                                          buckets_));
        if (rows.empty()) rows.push_back(base + static_cast<std::uint32_t>(fnv1a(padded) % buckets_));
        return rows;
    }

    void hidden(const std::vector<std::uint32_t>& rows, double* h) const {
        const auto d = static_cast<std::size_t>(dim_);
        std::fill(h, h + d, 0.0);
        for (auto r : rows) {
            const double* v = input_.data() + static_cast<std::size_t>(r) * d;
            for (std::size_t k = 0; k < d; ++k) h[k] += v[k];
        }
        const double inv = 1.0 / static_cast<double>(rows.size());
        for (std::size_t k = 0; k < d; ++k) h[k] *= inv;
    }

    Granularity granularity_ = Granularity::character;
    int dim_ = 50;
    int min_n_ = 3;
    int max_n_ = 5;
    std::size_t buckets_ = 4096;
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::uint32_t> vocab_;
    std::vector<double> input_;
    // Training-only state.
    std::vector<std::string> out_words_;
    std::unordered_map<std::string, std::uint32_t> out_index_;
};

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

}  // namespace errdetect
