#include <cmath>

#include <gtest/gtest.h>

#include "pzsl/disambiguation.hpp"
#include "pzsl/embedding_io.hpp"
#include "test_helpers.hpp"

using namespace pzsl;

namespace {

// Nearest-prototype accuracy of the seed-7 synthetic set, measured once.
constexpr double kPinnedBaseline = 0.8030;

ClassVocabulary vocab(std::vector<std::string> seen, std::vector<std::string> unseen = {}) {
    ClassVocabulary v;
    v.seen = std::move(seen);
    v.unseen = std::move(unseen);
    return v;
}

EmbeddingStore random_store(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    EmbeddingStore s;
    s.data = random_uniform<float>({n, d}, rng);
    s.ids = make_ids("row_", n);
    s.vocabulary = vocab({"a", "b"}, {"c"});
    return s;
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.what();
    }
    ADD_FAILURE() << "no FormatError";
    return {};
}

} // namespace

TEST(Prompts, SingleClass) {
    EXPECT_EQ(build_prompts(vocab({"cat"})), std::vector<std::string>{"A photo of a cat."});
}

TEST(Prompts, EmptyVocabulary) { EXPECT_TRUE(build_prompts(vocab({})).empty()); }

TEST(Prompts, PreservesOrderSeenThenUnseen) {
    EXPECT_EQ(build_prompts(vocab({"dog"}, {"horse"})),
              (std::vector<std::string>{"A photo of a dog.", "A photo of a horse."}));
}

TEST(Prompts, RejectsEmptyNameAndMissingPlaceholder) {
    EXPECT_THROW(build_prompts(vocab({""})), ParameterError);
    auto v = vocab({"x"});
    v.prompt_template = "no slot";
    EXPECT_THROW(build_prompts(v), ParameterError);
}

TEST(Vocabulary, RejectsOverlap) {
    EXPECT_THROW(vocab({"a", "b"}, {"a"}).validate(), DataError);
    EXPECT_THROW(vocab({"a", "a"}).validate(), DataError);
}

TEST(EmbeddingFile, RoundTripIsBitExact) {
    TempDir dir;
    const auto store = random_store(5, 8, 1);
    save_embeddings(store, dir / "x.pzslemb");
    const auto back = load_embeddings(dir / "x.pzslemb", LoadOptions{false});
    EXPECT_EQ(back.data, store.data);
    EXPECT_EQ(back.ids, store.ids);
    EXPECT_EQ(back.vocabulary.seen, store.vocabulary.seen);
    EXPECT_EQ(back.vocabulary.unseen, store.vocabulary.unseen);
    save_embeddings(back, dir / "y.pzslemb");
    EXPECT_EQ(slurp(dir / "x.pzslemb"), slurp(dir / "y.pzslemb"));
    EXPECT_TRUE(std::filesystem::exists(dir / "x.manifest.json"));
}

TEST(EmbeddingFile, LayoutIsLittleEndianWithHeader) {
    TempDir dir;
    EmbeddingStore s = random_store(2, 3, 2);
    s.data(0, 0) = 1.0f;
    save_embeddings(s, dir / "x.pzslemb");
    const std::string bytes = slurp(dir / "x.pzslemb");
    ASSERT_EQ(bytes.size(), 16u + 4u * 6u);
    EXPECT_EQ(bytes.substr(0, 8), "PZSLEMB1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 3);
    // 1.0f = 0x3f800000
    EXPECT_EQ(static_cast<unsigned char>(bytes[16 + 2]), 0x80);
    EXPECT_EQ(static_cast<unsigned char>(bytes[16 + 3]), 0x3f);
}

TEST(EmbeddingFile, LoadNormalizesByDefault) {
    TempDir dir;
    save_embeddings(random_store(4, 6, 3), dir / "x.pzslemb");
    const auto s = load_embeddings(dir / "x.pzslemb");
    for (std::size_t i = 0; i < s.count(); ++i) {
        double n = 0.0;
        for (float v : s.data.row(i)) n += double(v) * v;
        EXPECT_NEAR(std::sqrt(n), 1.0, 1e-5);
    }
}

TEST(EmbeddingFile, BadMagic) {
    TempDir dir;
    save_embeddings(random_store(2, 2, 4), dir / "x.pzslemb");
    std::string bytes = slurp(dir / "x.pzslemb");
    bytes.replace(0, 4, "XXXX");
    spit(dir / "x.pzslemb", bytes);
    const auto msg = message_of([&] { load_embeddings(dir / "x.pzslemb"); });
    EXPECT_NE(msg.find("bad magic at byte offset 0"), std::string::npos) << msg;
}

TEST(EmbeddingFile, TruncatedHeaderAndPayload) {
    TempDir dir;
    save_embeddings(random_store(2, 2, 5), dir / "x.pzslemb");
    const std::string bytes = slurp(dir / "x.pzslemb");
    spit(dir / "x.pzslemb", bytes.substr(0, 12));
    EXPECT_NE(message_of([&] { load_embeddings(dir / "x.pzslemb"); }).find("truncated header at byte offset 12"),
              std::string::npos);
    spit(dir / "x.pzslemb", bytes.substr(0, bytes.size() - 1));
    EXPECT_NE(message_of([&] { load_embeddings(dir / "x.pzslemb"); }).find("truncated payload"), std::string::npos);
    spit(dir / "x.pzslemb", bytes + "z");
    EXPECT_NE(message_of([&] { load_embeddings(dir / "x.pzslemb"); }).find("trailing data"), std::string::npos);
}

TEST(EmbeddingFile, IdCountMismatchIsConsistencyError) {
    TempDir dir;
    save_embeddings(random_store(5, 2, 6), dir / "x.pzslemb");
    auto manifest = nlohmann::json::parse(slurp(dir / "x.manifest.json"));
    manifest["ids"] = {"a", "b", "c", "d"};
    spit(dir / "x.manifest.json", manifest.dump());
    const auto msg = message_of([&] { load_embeddings(dir / "x.pzslemb"); });
    EXPECT_NE(msg.find("consistency error"), std::string::npos) << msg;
}

TEST(EmbeddingFile, ManifestHeaderDisagreement) {
    TempDir dir;
    save_embeddings(random_store(3, 2, 7), dir / "x.pzslemb");
    auto manifest = nlohmann::json::parse(slurp(dir / "x.manifest.json"));
    manifest["dim"] = 4;
    spit(dir / "x.manifest.json", manifest.dump());
    EXPECT_NE(message_of([&] { load_embeddings(dir / "x.pzslemb"); }).find("byte offset 12"), std::string::npos);
}

TEST(EmbeddingFile, NonFinitePayloadAndMissingFiles) {
    TempDir dir;
    auto s = random_store(2, 2, 8);
    s.data(1, 1) = std::numeric_limits<float>::infinity();
    save_embeddings(s, dir / "x.pzslemb");
    EXPECT_NE(message_of([&] { load_embeddings(dir / "x.pzslemb"); }).find("non-finite"), std::string::npos);
    EXPECT_THROW(load_embeddings(dir / "missing.pzslemb"), Error);
    std::filesystem::remove(dir / "x.manifest.json");
    EXPECT_THROW(load_embeddings(dir / "x.pzslemb"), Error);
}

TEST(EmbeddingFile, DuplicateIdsRejectedOnSave) {
    TempDir dir;
    auto s = random_store(2, 2, 9);
    s.ids = {"same", "same"};
    EXPECT_THROW(save_embeddings(s, dir / "x.pzslemb"), DataError);
}

TEST(SynthEmbeddings, ZeroNoiseReproducesPrototypes) {
    const auto v = vocab({"a", "b", "c"}, {"d"});
    const auto s = synth_embeddings(v, 5, 16, 0.0, 3);
    ASSERT_EQ(s.instances.count(), 20u);
    for (std::size_t i = 0; i < s.instances.count(); ++i) {
        auto row = s.instances.data.row(i), proto = s.labels.data.row(s.truth[i]);
        for (std::size_t j = 0; j < 16; ++j) EXPECT_FLOAT_EQ(row[j], proto[j]);
    }
    const auto preds = predict_all(s.instances.data, s.labels.data);
    EXPECT_EQ(preds, s.truth);
}

TEST(SynthEmbeddings, AllRowsUnitNorm) {
    const auto s = synth_embeddings(vocab({"a", "b"}, {"c"}), 30, 12, 0.7, 4);
    for (const auto* a : {&s.instances.data, &s.labels.data}) {
        for (std::size_t i = 0; i < a->rows(); ++i) {
            double n = 0.0;
            for (float x : a->row(i)) n += double(x) * x;
            EXPECT_NEAR(std::sqrt(n), 1.0, 1e-5);
        }
    }
}

TEST(SynthEmbeddings, SameSeedSameBytes) {
    const auto v = vocab({"a", "b"}, {"c"});
    EXPECT_EQ(synth_embeddings(v, 4, 8, 0.4, 11).instances.data, synth_embeddings(v, 4, 8, 0.4, 11).instances.data);
    EXPECT_NE(synth_embeddings(v, 4, 8, 0.4, 11).instances.data, synth_embeddings(v, 4, 8, 0.4, 12).instances.data);
}

TEST(SynthEmbeddings, BaselineAccuracyRegression) {
    std::vector<std::string> names;
    for (int i = 0; i < 10; ++i) names.push_back("c" + std::to_string(i));
    const auto s = synth_embeddings(vocab(names), 100, 32, 0.4, 7);
    const auto preds = predict_all(s.instances.data, s.labels.data);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == s.truth[i];
    const double acc = static_cast<double>(hit) / preds.size();
    std::printf("baseline accuracy %.4f\n", acc);
    EXPECT_GE(acc, 0.55);
    EXPECT_LE(acc, 0.95);
    EXPECT_NEAR(acc, kPinnedBaseline, 0.02);
}

TEST(SynthEmbeddings, RejectsBadParameters) {
    EXPECT_THROW(synth_embeddings(vocab({"a", "b"}), 1, 1, 0.1, 0), ParameterError);
    EXPECT_THROW(synth_embeddings(vocab({"a", "b"}), 1, 4, -0.1, 0), ParameterError);
}
