#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "errdetect/features.hpp"

using namespace errdetect;

TEST(FormatGrams, SentinelPadding) {
    EXPECT_EQ(format_grams("ab", FormatAlphabet::raw), (std::vector<std::string>{"^ab", "ab$"}));
    EXPECT_EQ(format_grams("a", FormatAlphabet::raw), (std::vector<std::string>{"^a$"}));
    EXPECT_EQ(format_grams("", FormatAlphabet::raw).size(), 0u);
}

TEST(FormatGrams, SymbolicClasses) {
    EXPECT_EQ(symbol_class('a'), 'C');
    EXPECT_EQ(symbol_class('1'), 'N');
    EXPECT_EQ(symbol_class('-'), 'S');
    EXPECT_EQ(format_grams("a1-", FormatAlphabet::symbolic), (std::vector<std::string>{"^CN", "CNS", "NS$"}));
}

TEST(NGramFormatModel, LaplaceHandComputed) {
    const std::vector<std::string> column(10, "abc");
    const auto m = NGramFormatModel::fit(column, FormatAlphabet::raw);
    const double denom = 30.0 + 128.0 * 128.0 * 128.0;
    EXPECT_EQ(m.total(), 30u);
    EXPECT_DOUBLE_EQ(m.score("abc"), 11.0 / denom);
    EXPECT_DOUBLE_EQ(m.score("abz"), 1.0 / denom);
    EXPECT_DOUBLE_EQ(m.floor(), 1.0 / denom);
    EXPECT_DOUBLE_EQ(m.score(""), m.floor());
}

TEST(NGramFormatModel, RareValueScoresLower) {
    std::vector<std::string> column(9, "abc");
    column.push_back("xyz");
    for (auto a : {FormatAlphabet::raw, FormatAlphabet::symbolic}) {
        const auto m = NGramFormatModel::fit(column, a);
        if (a == FormatAlphabet::raw)
            EXPECT_LT(m.score("xyz"), m.score("abc"));
        else
            EXPECT_DOUBLE_EQ(m.score("xyz"), m.score("abc"));
    }
    const auto raw = NGramFormatModel::fit(column, FormatAlphabet::raw);
    const double denom = 30.0 + 128.0 * 128.0 * 128.0;
    EXPECT_DOUBLE_EQ(raw.score("xyz"), 2.0 / denom);
    EXPECT_DOUBLE_EQ(raw.score("abc"), 10.0 / denom);
}

TEST(NGramFormatModel, SharedRarestGramGivesEqualScores) {
    const auto m = NGramFormatModel::fit({"aab", "aab", "aab", "qab"}, FormatAlphabet::raw);
    EXPECT_DOUBLE_EQ(m.score("zab"), m.score("zzq"));
}

TEST(NGramFormatModel, NormalizesOverFullAlphabet) {
    for (auto a : {FormatAlphabet::raw, FormatAlphabet::symbolic}) {
        const auto m = NGramFormatModel::fit({"60612", "6061x2", "a-b", "", "Z"}, a);
        double sum = 0.0;
        for (const auto& [g, c] : m.counts()) sum += m.probability(g);
        sum += (m.support() - static_cast<double>(m.counts().size())) * (1.0 / (static_cast<double>(m.total()) + m.support()));
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(NGramFormatModel, RepeatingAValueNeverLowersItsScore) {
    std::vector<std::string> column{"abc", "abd", "xbd"};
    const auto before = NGramFormatModel::fit(column, FormatAlphabet::raw).score("xbd");
    column.push_back("xbd");
    const auto after = NGramFormatModel::fit(column, FormatAlphabet::raw).score("xbd");
    EXPECT_GE(after, before);
}

TEST(NGramFormatModel, SubstitutedScoreMatchesRefit) {
    std::vector<std::string> column{"60612", "60612", "60613", "60614"};
    const auto m = NGramFormatModel::fit(column, FormatAlphabet::raw);
    auto modified = column;
    modified[1] = "6061x2";
    const auto refit = NGramFormatModel::fit(modified, FormatAlphabet::raw);
    EXPECT_DOUBLE_EQ(m.score_substituted("6061x2", "60612"), refit.score("6061x2"));
}

namespace {
// 10 rows: city is constant, zip is consistent except one corrupted row.
Dataset zip_table() {
    std::vector<Row> rows(9, Row{"chicago", "60612"});
    rows.push_back({"chicago", "6061x2"});
    return Dataset(Schema({"city", "zip"}), std::move(rows));
}
}  // namespace

TEST(ValueStatistics, FrequenciesNormalize) {
    const auto s = ValueStatistics::fit(zip_table());
    EXPECT_DOUBLE_EQ(s.frequency(1, "60612"), 0.9);
    EXPECT_DOUBLE_EQ(s.frequency(1, "6061x2"), 0.1);
    double sum = 0.0;
    for (const auto& v : s.distinct_values(1)) sum += s.frequency(1, v);
    EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(ValueStatistics, ConditionalCooccurrence) {
    const auto s = ValueStatistics::fit(zip_table());
    EXPECT_DOUBLE_EQ(s.conditional(1, "6061x2", 0, "chicago"), 0.1);
    EXPECT_DOUBLE_EQ(s.conditional(0, "chicago", 1, "60612"), 1.0);
    EXPECT_DOUBLE_EQ(s.conditional(1, "60612", 0, "boston"), 0.0);
    double sum = 0.0;
    for (const auto& [v, p] : s.conditional_distribution(1, 0, "chicago")) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(FeatureLayout, WideDimension) {
    const Schema schema({"a", "b", "c", "d", "e"});
    const auto sigma = parse_constraints("t1&t2: t1.a=t2.a & t1.b!=t2.b\nt1: t1.c<'0'\nt1&t2: t1.d=t2.d & t1.e>t2.e",
                                         schema);
    const auto l = FeatureLayout::make(schema, sigma, FeatureMask::all(), 50);
    EXPECT_EQ(l.wide_dim(), 16u);
    EXPECT_EQ(l.deep_dim(), 200u);
    EXPECT_EQ(FeatureLayout::make(schema, {}, FeatureMask::all(), 50).wide_dim(), 13u);
}

TEST(FeatureLayout, MaskRemovesGroups) {
    const Schema schema({"a", "b", "c"});
    const auto full = FeatureLayout::make(schema, {}, FeatureMask::all(), 50);
    const auto no_char = FeatureLayout::make(schema, {}, FeatureMask::without(FeatureGroup::character), 50);
    EXPECT_EQ(no_char.pathways.size(), 3u);
    EXPECT_EQ(no_char.wide_dim(), full.wide_dim());
    EXPECT_NE(no_char.fingerprint, full.fingerprint);
    const auto no_cooc = FeatureLayout::make(schema, {}, FeatureMask::without(FeatureGroup::cooccurrence), 50);
    EXPECT_EQ(no_cooc.wide_dim(), full.wide_dim() - 2);
}

TEST(FeatureGroups, NamesRoundTrip) {
    for (std::size_t g = 0; g < kFeatureGroups; ++g) {
        const auto group = static_cast<FeatureGroup>(g);
        EXPECT_EQ(feature_group_from_string(std::string(to_string(group))), group);
    }
    EXPECT_FALSE(feature_group_from_string("nope"));
}

namespace {
EmbeddingConfig quick_embeddings() {
    EmbeddingConfig c;
    c.epochs = 5;
    c.seed = 7;
    return c;
}

// 200 tuples; zips 60612 and 60613 share every context, 10001 lives in another context.
std::vector<std::vector<std::string>> zip_corpus() {
    std::vector<std::vector<std::string>> corpus;
    for (int i = 0; i < 200; ++i) {
        if (i % 4 == 0) corpus.push_back({"60612", "chicago", "il", "cook"});
        if (i % 4 == 1) corpus.push_back({"60613", "chicago", "il", "cook"});
        if (i % 4 >= 2) corpus.push_back({"10001", "manhattan", "ny", "newyork"});
    }
    return corpus;
}
}  // namespace

TEST(Embedding, SharedContextsAreCloser) {
    const auto m = EmbeddingModel::train(Granularity::tuple_bag, zip_corpus(), true, quick_embeddings());
    EXPECT_GT(cosine_similarity(m.vector("60612"), m.vector("60613")),
              cosine_similarity(m.vector("60612"), m.vector("manhattan")));
}

TEST(Embedding, SelfSimilarityAndCoverage) {
    const auto m = EmbeddingModel::train(Granularity::tuple_bag, zip_corpus(), true, quick_embeddings());
    EXPECT_TRUE(m.in_vocabulary("cook"));
    const auto v = m.vector("cook");
    EXPECT_NEAR(cosine_similarity(v, v), 1.0, 1e-12);
    for (double x : v) EXPECT_TRUE(std::isfinite(x));
    const auto oov = m.vector("never-seen-token");
    EXPECT_EQ(oov.size(), 50u);
    EXPECT_FALSE(m.in_vocabulary("never-seen-token"));
}

TEST(Embedding, DeterministicGivenSeed) {
    const auto a = EmbeddingModel::train(Granularity::cell_token, zip_corpus(), false, quick_embeddings());
    const auto b = EmbeddingModel::train(Granularity::cell_token, zip_corpus(), false, quick_embeddings());
    EXPECT_EQ(a.vector("chicago"), b.vector("chicago"));
}

TEST(Embedding, EmptyCorpusIsAnError) {
    EXPECT_THROW(EmbeddingModel::train(Granularity::character, {}, false, quick_embeddings()), ConfigError);
}

namespace {
// 200 rows of Chicago-area zips plus one typo; a second attribute holds a constant.
Dataset zip_column() {
    std::vector<Row> rows;
    for (int i = 0; i < 200; ++i) rows.push_back({std::to_string(60600 + i % 40), "il"});
    rows.push_back({"6061x2", "il"});
    return Dataset(Schema({"zip", "state"}), std::move(rows));
}

PipelineConfig quick_pipeline() {
    PipelineConfig c;
    c.embedding = quick_embeddings();
    return c;
}
}  // namespace

TEST(Neighborhood, TypoIsCloserThanUnrelatedToken) {
    const auto p = FeaturePipeline::fit(zip_column(), {}, quick_pipeline());
    EXPECT_LT(p.neighborhood_distance(0, "6061x2"), p.neighborhood_distance(0, "qwvbkj"));
}

TEST(Neighborhood, SingleDistinctValueIsZero) {
    const auto p = FeaturePipeline::fit(zip_column(), {}, quick_pipeline());
    EXPECT_DOUBLE_EQ(p.neighborhood_distance(1, "il"), 0.0);
}

TEST(Neighborhood, ExcludesTheValueItself) {
    const auto p = FeaturePipeline::fit(zip_column(), {}, quick_pipeline());
    EXPECT_GT(p.neighborhood_distance(0, "60612"), 0.0);
}

TEST(Featurize, LayoutDimensionsAndFiniteness) {
    const auto d = zip_column();
    const auto sigma = parse_constraints("t1&t2: t1.zip=t2.zip & t1.state!=t2.state", d.schema());
    const auto p = FeaturePipeline::fit(d, sigma, quick_pipeline());
    const auto fv = featurize(p, d, {0, 0});
    EXPECT_EQ(fv.wide.size(), 3u + 2 + 1 + 1 + 1);
    EXPECT_EQ(fv.deep.size(), 200u);
    for (double x : fv.wide) EXPECT_TRUE(std::isfinite(x));
    for (double x : fv.deep) EXPECT_TRUE(std::isfinite(x));
}

TEST(Featurize, IdenticalCellsGetIdenticalVectors) {
    const auto d = zip_column();
    const auto p = FeaturePipeline::fit(d, {}, quick_pipeline());
    // Rows 0 and 40 hold the same values.
    Featurizer f(p, d);
    EXPECT_EQ(f.featurize({0, 0}), f.featurize({40, 0}));
    EXPECT_EQ(f.featurize({0, 0}), Featurizer(p, d).featurize({0, 0}));
}

TEST(Featurize, WithoutConstraints) {
    const auto d = zip_column();
    const auto p = FeaturePipeline::fit(d, {}, quick_pipeline());
    EXPECT_EQ(p.layout().wide_dim(), 3u + 2 + 1 + 0 + 1);
}

TEST(Featurize, CooccurrenceOfCorruptedZip) {
    const auto d = zip_table();
    const auto p = FeaturePipeline::fit(d, {}, quick_pipeline());
    const auto fv = featurize(p, d, {9, 1});
    // format, symbolic, frequency, one-hot(2), cooccurrence(1), neighbor
    EXPECT_DOUBLE_EQ(fv.wide[5], 0.1);
    EXPECT_DOUBLE_EQ(featurize(p, d, {0, 0}).wide[5], 1.0);
}

TEST(Featurize, SubstitutionActsLikeAReplacedValue) {
    const Schema schema({"zip", "city"});
    Dataset d(schema, {{"1", "a"}, {"1", "a"}, {"2", "b"}});
    const auto sigma = parse_constraints("t1&t2: t1.zip=t2.zip & t1.city!=t2.city", schema);
    const auto p = FeaturePipeline::fit(d, sigma, quick_pipeline());
    Featurizer f(p, d);
    const auto fv = f.featurize({0, 1}, "ax");
    // Violations recomputed: (0,1) and (1,0) now violate.
    EXPECT_DOUBLE_EQ(fv.wide[fv.wide.size() - 2], 2.0);
    EXPECT_DOUBLE_EQ(fv.wide[2], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(fv.wide[5], 1.0 / 2.0);
}

TEST(Featurize, ScalerStandardizesOverCells) {
    const auto d = zip_column();
    const auto p = FeaturePipeline::fit(d, {}, quick_pipeline());
    Featurizer f(p, d);
    const auto w = p.layout().wide_dim();
    std::vector<double> mean(w, 0.0);
    for (std::size_t t = 0; t < d.num_tuples(); ++t)
        for (std::size_t a = 0; a < d.num_attributes(); ++a) {
            const auto x = f.model_input(f.featurize({t, a}));
            for (std::size_t k = 0; k < w; ++k) mean[k] += x[k];
        }
    for (double m : mean) EXPECT_NEAR(m / static_cast<double>(d.num_cells()), 0.0, 1e-9);
}

TEST(Featurize, UnfittedPipelineIsAnError) {
    FeaturePipeline p;
    const auto d = zip_column();
    EXPECT_THROW(Featurizer(p, d), ConfigError);
}

TEST(FeaturePipeline, SaveLoadRoundTrip) {
    const auto d = zip_column();
    const auto sigma = parse_constraints("t1&t2: t1.zip=t2.zip & t1.state!=t2.state", d.schema());
    const auto p = FeaturePipeline::fit(d, sigma, quick_pipeline());
    io::BinaryWriter w;
    p.save(w);
    const auto path = (std::filesystem::temp_directory_path() / "errdetect_pipeline.bin").string();
    w.save(path);
    auto r = io::BinaryReader::from_file(path);
    const auto q = FeaturePipeline::load(r);
    std::filesystem::remove(path);
    EXPECT_EQ(q.layout().fingerprint, p.layout().fingerprint);
    Featurizer fp(p, d), fq(q, d);
    for (std::size_t t : {0u, 17u, 200u})
        for (std::size_t a = 0; a < 2; ++a) {
            EXPECT_EQ(fp.featurize({t, a}), fq.featurize({t, a}));
            EXPECT_EQ(fp.model_input(fp.featurize({t, a})), fq.model_input(fq.featurize({t, a})));
        }
}
