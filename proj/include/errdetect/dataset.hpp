#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "errdetect/common.hpp"

namespace errdetect {

// Ordered attribute names. All values are treated as strings.
class Schema {
public:
    Schema() = default;
    explicit Schema(std::vector<std::string> attributes) : attributes_(std::move(attributes)) {
        if (attributes_.empty()) throw ConfigError("schema needs at least one attribute");
        for (std::size_t i = 0; i < attributes_.size(); ++i) {
            if (attributes_[i].empty()) throw ConfigError("attribute " + std::to_string(i) + " has an empty name");
            if (!index_.emplace(attributes_[i], i).second)
                throw ConfigError("duplicate attribute name '" + attributes_[i] + "'");
        }
    }

    std::size_t size() const noexcept { return attributes_.size(); }
    const std::string& name(std::size_t i) const { return attributes_.at(i); }
    const std::vector<std::string>& names() const noexcept { return attributes_; }

    std::optional<std::size_t> index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    bool operator==(const Schema& o) const { return attributes_ == o.attributes_; }

private:
    std::vector<std::string> attributes_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct CellRef {
    std::size_t tuple = 0;
    std::size_t attr = 0;

    auto operator<=>(const CellRef&) const = default;
};

struct CellRefHash {
    std::size_t operator()(const CellRef& c) const noexcept {
        return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(c.tuple) << 20) ^ c.attr);
    }
};

using Row = std::vector<std::string>;

// A relational table. Row ordinal is the tuple identifier and is never reordered.
class Dataset {
public:
    Dataset() = default;
    Dataset(Schema schema, std::vector<Row> rows, std::string id = "dataset")
        : schema_(std::move(schema)), rows_(std::move(rows)), id_(std::move(id)) {
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            if (rows_[r].size() != schema_.size())
                throw ConfigError("row " + std::to_string(r) + " has " + std::to_string(rows_[r].size()) +
                                  " values, expected " + std::to_string(schema_.size()));
        }
    }

    const Schema& schema() const noexcept { return schema_; }
    const std::vector<Row>& rows() const noexcept { return rows_; }
    const Row& row(std::size_t t) const { return rows_.at(t); }
    const std::string& id() const noexcept { return id_; }
    std::size_t num_tuples() const noexcept { return rows_.size(); }
    std::size_t num_attributes() const noexcept { return schema_.size(); }
    std::size_t num_cells() const noexcept { return rows_.size() * schema_.size(); }

    const std::string& at(CellRef c) const { return rows_.at(c.tuple).at(c.attr); }
    bool contains(CellRef c) const noexcept { return c.tuple < rows_.size() && c.attr < schema_.size(); }

    // Copy with one cell replaced.
    Dataset with_value(CellRef c, std::string value) const {
        Dataset copy = *this;
        copy.rows_.at(c.tuple).at(c.attr) = std::move(value);
        return copy;
    }

    bool operator==(const Dataset& o) const { return schema_ == o.schema_ && rows_ == o.rows_; }

private:
    Schema schema_;
    std::vector<Row> rows_;
    std::string id_ = "dataset";
};

enum class CellLabel : int { error = -1, correct = +1 };

// One ground-truth observation (c, v_c, v*_c).
struct LabeledCell {
    CellRef cell;
    std::string observed;
    std::string truth;
};

inline CellLabel label_of(const std::string& observed, const std::string& truth) {
    return observed == truth ? CellLabel::correct : CellLabel::error;
}

inline CellLabel label_of(const LabeledCell& e) { return label_of(e.observed, e.truth); }

class TrainingSet {
public:
    TrainingSet() = default;
    explicit TrainingSet(std::vector<LabeledCell> entries) : entries_(std::move(entries)) {
        std::unordered_set<CellRef, CellRefHash> seen;
        for (const auto& e : entries_) {
            if (!seen.insert(e.cell).second)
                throw ConfigError("duplicate labeled cell (" + std::to_string(e.cell.tuple) + "," +
                                  std::to_string(e.cell.attr) + ")");
        }
    }

    const std::vector<LabeledCell>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    std::size_t count(CellLabel l) const {
        return static_cast<std::size_t>(
            std::count_if(entries_.begin(), entries_.end(), [&](const auto& e) { return label_of(e) == l; }));
    }

    // Checks that every observed value matches the dataset's current cell.
    void validate_against(const Dataset& d) const {
        for (const auto& e : entries_) {
            if (!d.contains(e.cell)) throw ConfigError("labeled cell outside the dataset");
            if (d.at(e.cell) != e.observed)
                throw ConfigError("labeled cell (" + std::to_string(e.cell.tuple) + "," + std::to_string(e.cell.attr) +
                                  ") observed value differs from the dataset");
        }
    }

private:
    std::vector<LabeledCell> entries_;
};

struct SplitSpec {
    double train_fraction = 0.10;
    double holdout_fraction_of_train = 0.10;
    std::uint64_t seed = 0;
};

struct Split {
    TrainingSet train;
    TrainingSet holdout;
    TrainingSet test;
};

// Shuffles the labeled cells with `spec.seed` and cuts them into disjoint train, holdout and test parts.
inline Split split(const TrainingSet& labels, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0))
        throw ConfigError("train_fraction must be in (0,1], got " + std::to_string(spec.train_fraction));
    if (!(spec.holdout_fraction_of_train >= 0.0 && spec.holdout_fraction_of_train < 1.0))
        throw ConfigError("holdout fraction must be in [0,1), got " + std::to_string(spec.holdout_fraction_of_train));

    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n = labels.size();
    const auto n_labeled = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    const auto n_holdout =
        static_cast<std::size_t>(std::llround(spec.holdout_fraction_of_train * static_cast<double>(n_labeled)));
    if (n_labeled == n) warn("train_fraction covers every labeled cell; the test set is empty");

    std::vector<LabeledCell> train, holdout, test;
    for (std::size_t k = 0; k < n; ++k) {
        const auto& e = labels.entries()[order[k]];
        if (k < n_holdout)
            holdout.push_back(e);
        else if (k < n_labeled)
            train.push_back(e);
        else
            test.push_back(e);
    }
    return {TrainingSet(std::move(train)), TrainingSet(std::move(holdout)), TrainingSet(std::move(test))};
}

// Cuts an already-labeled training set into train and holdout parts.
inline std::pair<TrainingSet, TrainingSet> holdout_split(const TrainingSet& labels, double holdout_fraction,
                                                         std::uint64_t seed) {
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
        throw ConfigError("holdout fraction must be in [0,1), got " + std::to_string(holdout_fraction));
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_holdout =
        static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(labels.size())));
    std::vector<LabeledCell> train, holdout;
    for (std::size_t k = 0; k < order.size(); ++k)
        (k < n_holdout ? holdout : train).push_back(labels.entries()[order[k]]);
    return {TrainingSet(std::move(train)), TrainingSet(std::move(holdout))};
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

namespace csv {

// Parses the whole text into records. Quoted fields may contain separators, quotes ("") and newlines.
inline std::vector<std::vector<std::string>> parse(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field.empty()) throw ParseError("stray quote inside unquoted field", line);
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                break;
            case '\n':
                end_record();
                ++line;
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (in_quotes) throw ParseError("unterminated quoted field", line);
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

inline std::string quote(const std::string& v) {
    if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline std::string join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += quote(fields[i]);
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace csv

inline Dataset parse_csv(const std::string& text, bool has_header = true, std::string id = "dataset") {
    auto records = csv::parse(text);
    // A lone empty line parses as one empty field; it carries no data.
    std::erase_if(records, [](const auto& r) { return r.size() == 1 && r[0].empty(); });
    if (records.empty()) throw ParseError("empty CSV input");

    std::vector<std::string> names;
    std::size_t first = 0;
    if (has_header) {
        names = records[0];
        first = 1;
    } else {
        for (std::size_t i = 0; i < records[0].size(); ++i) names.push_back("A" + std::to_string(i + 1));
    }
    const std::size_t width = names.size();
    std::vector<Row> rows;
    rows.reserve(records.size() - first);
    for (std::size_t r = first; r < records.size(); ++r) {
        if (records[r].size() != width)
            throw ParseError("row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                                 " fields, expected " + std::to_string(width),
                             r + 1);
        rows.push_back(std::move(records[r]));
    }
    return Dataset(Schema(std::move(names)), std::move(rows), std::move(id));
}

inline Dataset load_csv(const std::string& path, bool has_header = true) {
    return parse_csv(csv::read_file(path), has_header, path);
}

inline std::string to_csv(const Dataset& d) {
    std::string out = csv::join(d.schema().names()) + "\n";
    for (const auto& row : d.rows()) out += csv::join(row) + "\n";
    return out;
}

inline void write_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << to_csv(d);
}

// ---------------------------------------------------------------------------
// Ground truth: CSV with header tuple_index,attribute,clean_value

inline TrainingSet parse_truth(const std::string& text, const Dataset& d) {
    auto records = csv::parse(text);
    std::erase_if(records, [](const auto& r) { return r.size() == 1 && r[0].empty(); });
    if (records.empty()) throw ParseError("empty ground-truth file");
    const std::vector<std::string> header{"tuple_index", "attribute", "clean_value"};
    if (records[0] != header) throw ParseError("ground truth header must be tuple_index,attribute,clean_value", 1);

    std::vector<LabeledCell> entries;
    entries.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != 3) throw ParseError("ground truth row " + std::to_string(r + 1) + " needs 3 fields", r + 1);
        std::size_t t = 0;
        try {
            std::size_t used = 0;
            t = std::stoul(rec[0], &used);
            if (used != rec[0].size()) throw std::invalid_argument(rec[0]);
        } catch (const std::exception&) {
            throw ParseError("bad tuple_index '" + rec[0] + "' on row " + std::to_string(r + 1), r + 1);
        }
        auto a = d.schema().index_of(rec[1]);
        if (!a) throw ParseError("unknown attribute '" + rec[1] + "' on row " + std::to_string(r + 1), r + 1);
        if (t >= d.num_tuples())
            throw ParseError("tuple_index " + rec[0] + " out of range on row " + std::to_string(r + 1), r + 1);
        CellRef c{t, *a};
        entries.push_back({c, d.at(c), rec[2]});
    }
    return TrainingSet(std::move(entries));
}

inline TrainingSet load_truth(const std::string& path, const Dataset& d) {
    return parse_truth(csv::read_file(path), d);
}

inline std::string truth_to_csv(const Dataset& d, const TrainingSet& truth) {
    std::string out = "tuple_index,attribute,clean_value\n";
    for (const auto& e : truth.entries())
        out += std::to_string(e.cell.tuple) + "," + csv::quote(d.schema().name(e.cell.attr)) + "," +
               csv::quote(e.truth) + "\n";
    return out;
}

inline void write_truth(const Dataset& d, const TrainingSet& truth, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << truth_to_csv(d, truth);
}

}  // namespace errdetect
