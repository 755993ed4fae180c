#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "dncc/data.hpp"
#include "dncc/error.hpp"
#include "dncc/text.hpp"
#include "dncc/trainer.hpp"

using namespace dncc;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("dncc_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path path(const std::string& name) const { return dir_ / name; }
    fs::path dir_;
};

void put_u32(std::string& s, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xFF));
}

// Ten 28x28 images whose pixel (r, c) of image i is (i * 7 + r + c) mod 256.
void write_fixture(const fs::path& images, const fs::path& labels) {
    std::string img, lab;
    put_u32(img, 0x803);
    put_u32(img, 10);
    put_u32(img, 28);
    put_u32(img, 28);
    put_u32(lab, 0x801);
    put_u32(lab, 10);
    for (int i = 0; i < 10; ++i) {
        for (int r = 0; r < 28; ++r) {
            for (int c = 0; c < 28; ++c) img.push_back(static_cast<char>((i * 7 + r + c) % 256));
        }
        lab.push_back(static_cast<char>(i % 6));
    }
    write_file(images.string(), img);
    write_file(labels.string(), lab);
}

}  // namespace

using Idx = TempDir;
using Csv = TempDir;

TEST_F(Idx, FixtureLoads) {
    write_fixture(path("img"), path("lab"));
    const Dataset ds = load_idx(path("img"), path("lab"));
    EXPECT_EQ(ds.size(), 10u);
    EXPECT_EQ(ds.dim, 784u);
    EXPECT_EQ(ds.num_classes, 6u);
    EXPECT_DOUBLE_EQ(ds.features[3 * 784 + 2 * 28 + 5], (3 * 7 + 2 + 5) / 255.0);
    EXPECT_EQ(ds.labels[9], 3);
}

TEST_F(Idx, FixtureChecksumIsStable) {
    write_fixture(path("img"), path("lab"));
    const std::string img = read_file(path("img").string());
    const auto* bytes = reinterpret_cast<const unsigned char*>(img.data());
    // FNV-1a of the fixture bytes, computed independently in Python.
    EXPECT_EQ(img.size(), 16u + 7840u);
    EXPECT_EQ(fnv1a({bytes, img.size()}), 0x05357c21b51cea5aull);
}

TEST_F(Idx, WriterReproducesFixtureBytes) {
    write_fixture(path("img"), path("lab"));
    const Dataset ds = load_idx(path("img"), path("lab"));
    write_idx(ds, 28, 28, path("img2"), path("lab2"));
    EXPECT_EQ(read_file(path("img").string()), read_file(path("img2").string()));
    EXPECT_EQ(read_file(path("lab").string()), read_file(path("lab2").string()));
}

TEST_F(Idx, WrongLabelMagicRejected) {
    write_fixture(path("img"), path("lab"));
    std::string lab = read_file(path("lab").string());
    lab[3] = 0x03;
    write_file(path("lab").string(), lab);
    EXPECT_THROW(load_idx(path("img"), path("lab")), FormatError);
}

TEST_F(Idx, EmptyFileAtOffsetZero) {
    write_fixture(path("img"), path("lab"));
    write_file(path("empty").string(), "");
    try {
        load_idx(path("empty"), path("lab"));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
}

TEST_F(Idx, TruncatedImagesReportOffset) {
    write_fixture(path("img"), path("lab"));
    std::string img = read_file(path("img").string());
    img.resize(1000);
    write_file(path("img").string(), img);
    try {
        load_idx(path("img"), path("lab"));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 1000u);
    }
}

TEST_F(Idx, CountMismatchRejected) {
    write_fixture(path("img"), path("lab"));
    std::string lab = read_file(path("lab").string());
    lab[7] = 9;
    write_file(path("lab").string(), lab);
    EXPECT_THROW(load_idx(path("img"), path("lab")), FormatError);
}

TEST_F(Csv, ThreeRowFixture) {
    write_file(path("d.csv").string(), "a,label,b\n1.5,0,2\n-3,1,4.25\n0,2,1e-3\n");
    const Dataset ds = load_csv(path("d.csv"), "label");
    EXPECT_EQ(ds.size(), 3u);
    EXPECT_EQ(ds.dim, 2u);
    EXPECT_EQ(ds.features, (std::vector<double>{1.5, 2, -3, 4.25, 0, 1e-3}));
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 2}));
}

TEST_F(Csv, MissingLabelColumn) {
    write_file(path("d.csv").string(), "a,b\n1,2\n");
    EXPECT_THROW(load_csv(path("d.csv"), "label"), ConfigError);
}

TEST_F(Csv, RaggedRowNamesLine) {
    write_file(path("d.csv").string(), "a,label\n1,0\n2\n");
    try {
        load_csv(path("d.csv"), "label");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 3u);
    }
}

TEST_F(Csv, NonNumericCellNamesLine) {
    write_file(path("d.csv").string(), "a,label\n1,0\nx,1\n");
    try {
        load_csv(path("d.csv"), "label");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 3u);
    }
}

TEST_F(Csv, WriterRoundTrip) {
    const Dataset ds = synth_blobs(2, 3, 4, 5, 1.0);
    write_csv(ds, path("b.csv"), "y");
    const Dataset back = load_csv(path("b.csv"), "y");
    EXPECT_EQ(back.features, ds.features);
    EXPECT_EQ(back.labels, ds.labels);
}

TEST(Blobs, SameSeedIdentical) {
    const Dataset a = synth_blobs(5, 4, 50, 16, 1.0), b = synth_blobs(5, 4, 50, 16, 1.0);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
}

TEST(Blobs, SizeIsClassesTimesPerClass) {
    const Dataset ds = synth_blobs(0, 4, 500, 16, 1.0);
    EXPECT_EQ(ds.size(), 2000u);
    EXPECT_EQ(ds.dim, 16u);
    EXPECT_EQ(ds.num_classes, 4u);
}

TEST(Blobs, TightClustersAreSeparable) {
    const Dataset ds = synth_blobs(3, 4, 50, 16, 1e-3);
    auto model = EnsembleModel::init({16, {16}, Activation::relu, 0}, {1, FeatureMode::split, 4, 0});
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 32;
    train(model, ds, ds, cfg);
    EXPECT_EQ(evaluate(model, ds).ensemble_accuracy, 1.0);
}

TEST(Split, FourToOne) {
    const Dataset ds = synth_blobs(0, 4, 250, 4, 1.0);
    const Split s = train_val_split(ds, 4, 1, 0);
    EXPECT_EQ(s.train.size(), 800u);
    EXPECT_EQ(s.val.size(), 200u);
    EXPECT_TRUE(s.stratified);
    std::vector<int> counts(4, 0);
    for (int y : s.val.labels) ++counts[y];
    for (int c : counts) EXPECT_EQ(c, 50);
}

TEST(Split, DisjointAndCovering) {
    const Dataset ds = synth_blobs(0, 3, 37, 4, 1.0);
    const Split s = train_val_split(ds, 4, 1, 7);
    std::set<std::size_t> all(s.train_indices.begin(), s.train_indices.end());
    all.insert(s.val_indices.begin(), s.val_indices.end());
    EXPECT_EQ(all.size(), ds.size());
    EXPECT_EQ(s.train_indices.size() + s.val_indices.size(), ds.size());
}

TEST(Split, SameSeedSameSplit) {
    const Dataset ds = synth_blobs(0, 4, 50, 4, 1.0);
    EXPECT_EQ(train_val_split(ds, 4, 1, 3).val_indices, train_val_split(ds, 4, 1, 3).val_indices);
    EXPECT_NE(train_val_split(ds, 4, 1, 3).val_indices, train_val_split(ds, 4, 1, 4).val_indices);
}

TEST(Split, TinyClassFallsBackToUnstratified) {
    Dataset ds = synth_blobs(0, 2, 20, 4, 1.0);
    ds.labels[0] = 2;
    ds.num_classes = 3;
    const Split s = train_val_split(ds, 4, 1, 0);
    EXPECT_FALSE(s.stratified);
    EXPECT_EQ(s.val.size(), 8u);
}

TEST(Batches, EpochOrderIsPermutationAndDeterministic) {
    const BatchIterator it(103, 10, 5);
    const auto order = it.order(3);
    EXPECT_EQ(std::set<std::size_t>(order.begin(), order.end()).size(), 103u);
    EXPECT_EQ(order, BatchIterator(103, 10, 5).order(3));
    EXPECT_NE(order, it.order(4));
    const auto batches = it.batches(3);
    EXPECT_EQ(batches.size(), 11u);
    EXPECT_EQ(batches.back().size(), 3u);
}
