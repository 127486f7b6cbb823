#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "errdetect/dataset.hpp"
#include "test_util.hpp"

using namespace errdetect;

TEST(Csv, HeaderAndRows) {
    const auto d = parse_csv("a,b\n1,2\n3,4\n5,6\n");
    EXPECT_EQ(d.num_attributes(), 2u);
    EXPECT_EQ(d.num_tuples(), 3u);
    EXPECT_EQ(d.schema().name(1), "b");
    EXPECT_EQ(d.at({2, 0}), "5");
}

TEST(Csv, QuotedComma) {
    const auto d = parse_csv("x,y\n\"a,b\",c\n");
    EXPECT_EQ(d.at({0, 0}), "a,b");
    EXPECT_EQ(d.at({0, 1}), "c");
}

TEST(Csv, EscapedQuotesAndNewlines) {
    const auto d = parse_csv("x\n\"say \"\"hi\"\"\nthere\"\n");
    EXPECT_EQ(d.at({0, 0}), "say \"hi\"\nthere");
}

TEST(Csv, MissingFieldIsEmptyString) {
    const auto d = parse_csv("x,y\n,b\n");
    EXPECT_EQ(d.at({0, 0}), "");
}

TEST(Csv, RaggedRowNamesTheRow) {
    try {
        parse_csv("x,y\n1,2\n3\n");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
    }
}

TEST(Csv, EmptyInputIsAnError) { EXPECT_THROW(parse_csv(""), ParseError); }

TEST(Csv, HeaderlessNamesColumns) {
    const auto d = parse_csv("1,2\n", false);
    EXPECT_EQ(d.schema().name(0), "A1");
    EXPECT_EQ(d.num_tuples(), 1u);
}

TEST(Csv, RoundTripIsValueExact) {
    Dataset d(Schema({"a", "b c", "q"}), {{"x,y", "", "\"quoted\""}, {"line\nbreak", " lead", "trail "}});
    const auto back = parse_csv(to_csv(d));
    EXPECT_EQ(back.schema(), d.schema());
    EXPECT_EQ(back.rows(), d.rows());

    const auto path = std::filesystem::temp_directory_path() / "errdetect_roundtrip.csv";
    write_csv(d, path.string());
    EXPECT_EQ(load_csv(path.string()).rows(), d.rows());
    std::filesystem::remove(path);
}

TEST(Schema, RejectsDuplicateAndEmptyNames) {
    EXPECT_THROW(Schema({"a", "a"}), ConfigError);
    EXPECT_THROW(Schema({"a", ""}), ConfigError);
    EXPECT_THROW(Schema(std::vector<std::string>{}), ConfigError);
}

TEST(LabelOf, Examples) {
    EXPECT_EQ(label_of("60612", "60612"), CellLabel::correct);
    EXPECT_EQ(label_of("6061x2", "60612"), CellLabel::error);
    EXPECT_EQ(label_of("", "a"), CellLabel::error);
    EXPECT_EQ(label_of("", ""), CellLabel::correct);
}

TEST(TrainingSet, RejectsDuplicateCells) {
    EXPECT_THROW(TrainingSet({{{0, 0}, "a", "a"}, {{0, 0}, "a", "b"}}), ConfigError);
}

TEST(TrainingSet, ValidatesObservedValues) {
    Dataset d(Schema({"a"}), {{"x"}});
    EXPECT_NO_THROW(TrainingSet({{{0, 0}, "x", "y"}}).validate_against(d));
    EXPECT_THROW(TrainingSet({{{0, 0}, "z", "y"}}).validate_against(d), ConfigError);
}

namespace {
TrainingSet thousand_cells() {
    std::vector<LabeledCell> e;
    for (std::size_t t = 0; t < 100; ++t)
        for (std::size_t a = 0; a < 10; ++a) e.push_back({{t, a}, "v", t % 7 ? "v" : "w"});
    return TrainingSet(std::move(e));
}
}  // namespace

TEST(Split, SizesFollowFractions) {
    const auto s = split(thousand_cells(), {0.10, 0.10, 42});
    EXPECT_EQ(s.train.size(), 90u);
    EXPECT_EQ(s.holdout.size(), 10u);
    EXPECT_EQ(s.test.size(), 900u);
}

TEST(Split, DisjointAndCovering) {
    const auto labels = thousand_cells();
    const auto s = split(labels, {0.25, 0.2, 3});
    std::set<CellRef> seen;
    for (const auto* part : {&s.train, &s.holdout, &s.test})
        for (const auto& e : part->entries()) EXPECT_TRUE(seen.insert(e.cell).second);
    EXPECT_EQ(seen.size(), labels.size());
}

TEST(Split, DeterministicGivenSeed) {
    const auto labels = thousand_cells();
    const auto a = split(labels, {0.1, 0.1, 9});
    const auto b = split(labels, {0.1, 0.1, 9});
    const auto c = split(labels, {0.1, 0.1, 10});
    auto cells = [](const TrainingSet& t) {
        std::vector<CellRef> out;
        for (const auto& e : t.entries()) out.push_back(e.cell);
        return out;
    };
    EXPECT_EQ(cells(a.train), cells(b.train));
    EXPECT_EQ(cells(a.test), cells(b.test));
    EXPECT_NE(cells(a.train), cells(c.train));
}

TEST(Split, FullTrainingWarnsAboutEmptyTest) {
    errdetect::testing::CaptureWarnings w;
    const auto s = split(thousand_cells(), {1.0, 0.1, 1});
    EXPECT_TRUE(s.test.empty());
    EXPECT_TRUE(w.contains("test set is empty"));
}

TEST(Split, RejectsBadFractions) {
    EXPECT_THROW(split(thousand_cells(), {0.0, 0.1, 1}), ConfigError);
    EXPECT_THROW(split(thousand_cells(), {1.5, 0.1, 1}), ConfigError);
    EXPECT_THROW(split(thousand_cells(), {0.5, 1.0, 1}), ConfigError);
}

TEST(Truth, RoundTrip) {
    Dataset d(Schema({"zip", "city"}), {{"6061x2", "chicago"}, {"60613", "chicago"}});
    TrainingSet t({{{0, 0}, "6061x2", "60612"}, {{1, 1}, "chicago", "chicago"}});
    const auto back = parse_truth(truth_to_csv(d, t), d);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.entries()[0].truth, "60612");
    EXPECT_EQ(back.entries()[0].observed, "6061x2");
    EXPECT_EQ(label_of(back.entries()[0]), CellLabel::error);
    EXPECT_EQ(label_of(back.entries()[1]), CellLabel::correct);
}

TEST(Truth, RejectsUnknownAttribute) {
    Dataset d(Schema({"zip"}), {{"1"}});
    EXPECT_THROW(parse_truth("tuple_index,attribute,clean_value\n0,city,x\n", d), ParseError);
    EXPECT_THROW(parse_truth("tuple_index,attribute,clean_value\n5,zip,x\n", d), ParseError);
    EXPECT_THROW(parse_truth("a,b,c\n", d), ParseError);
}
