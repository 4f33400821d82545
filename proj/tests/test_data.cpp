#include "support.hpp"

#include "xrdl/data.hpp"
#include "xrdl/image.hpp"
#include "xrdl/tensor_io.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

using namespace xrdl;
using xrdl::testing::random_tensor;
using xrdl::testing::temp_dir;

namespace fs = std::filesystem;

namespace {

void write_gray(const fs::path& p, std::size_t h, std::size_t w, float value) {
    fs::create_directories(p.parent_path());
    save_pnm(tensor32({1, h, w}, value), p);
}

void touch(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream(p).put('\0');
}

// Bilinear sample with half-pixel centers and edge clamping, written out longhand.
double bilinear_oracle(const std::vector<std::vector<double>>& src, std::size_t oy, std::size_t ox, std::size_t out_h,
                       std::size_t out_w) {
    const double in_h = static_cast<double>(src.size()), in_w = static_cast<double>(src[0].size());
    double y = (static_cast<double>(oy) + 0.5) * in_h / static_cast<double>(out_h) - 0.5;
    double x = (static_cast<double>(ox) + 0.5) * in_w / static_cast<double>(out_w) - 0.5;
    y = std::clamp(y, 0.0, in_h - 1);
    x = std::clamp(x, 0.0, in_w - 1);
    const auto y0 = static_cast<std::size_t>(std::floor(y)), x0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t y1 = std::min(y0 + 1, src.size() - 1), x1 = std::min(x0 + 1, src[0].size() - 1);
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    return (1 - fy) * ((1 - fx) * src[y0][x0] + fx * src[y0][x1]) + fy * ((1 - fx) * src[y1][x0] + fx * src[y1][x1]);
}

sample_set toy_samples(std::size_t n, std::size_t classes) {
    sample_set s;
    s.num_classes = classes;
    for (std::size_t i = 0; i < n; ++i) {
        s.images.push_back(tensor32({1, 2, 2}, static_cast<float>(i) / static_cast<float>(n)));
        s.labels.push_back(i % classes);
    }
    return s;
}

}  // namespace

TEST(ScanDataset, SmallFixtureCounts) {
    temp_dir dir;
    for (int i = 0; i < 3; ++i) write_gray(dir / "train/Normal" / ("n" + std::to_string(i) + ".pgm"), 4, 4, 10);
    for (int i = 0; i < 2; ++i) write_gray(dir / "train/Pneumonia" / ("p" + std::to_string(i) + ".pgm"), 4, 4, 200);
    touch(dir / "train/Normal/notes.txt");
    const auto m = scan_dataset(dir.path());
    EXPECT_EQ(m.class_names, (std::vector<std::string>{"Normal", "Pneumonia"}));
    EXPECT_EQ(m.class_counts(split_kind::train), (std::vector<std::size_t>{3, 2}));
    EXPECT_FALSE(m.has(split_kind::valid));
    EXPECT_TRUE(std::is_sorted(m.split(split_kind::train).begin(), m.split(split_kind::train).end(),
                               [](const sample_ref& a, const sample_ref& b) { return a.path < b.path; }));
    EXPECT_EQ(scan_dataset(dir.path()), m);
}

TEST(ScanDataset, ClassIndexIsLexicographicRank) {
    temp_dir dir;
    for (const char* c : {"Squamous", "Adeno", "Normal", "Large"}) write_gray(dir / "train" / c / "a.pgm", 2, 2, 1);
    const auto m = scan_dataset(dir.path());
    EXPECT_EQ(m.class_names, (std::vector<std::string>{"Adeno", "Large", "Normal", "Squamous"}));
    for (const auto& item : m.split(split_kind::train)) {
        EXPECT_EQ(m.class_names[item.label], item.path.parent_path().filename().string());
    }
}

TEST(ScanDataset, ChestXrayStubTreeTotals) {
    temp_dir dir;
    for (int i = 0; i < 1340; ++i) touch(dir / "train/NORMAL" / ("im" + std::to_string(i) + ".pgm"));
    for (int i = 0; i < 3874; ++i) touch(dir / "train/PNEUMONIA" / ("im" + std::to_string(i) + ".pgm"));
    for (int i = 0; i < 8; ++i) {
        touch(dir / "valid/NORMAL" / ("v" + std::to_string(i) + ".pgm"));
        touch(dir / "valid/PNEUMONIA" / ("v" + std::to_string(i) + ".pgm"));
    }
    const auto m = scan_dataset(dir.path());
    EXPECT_EQ(m.class_counts(split_kind::train), (std::vector<std::size_t>{1340, 3874}));
    EXPECT_EQ(m.split(split_kind::train).size(), 5214u);
    EXPECT_EQ(m.class_counts(split_kind::valid), (std::vector<std::size_t>{8, 8}));
}

TEST(ScanDataset, Errors) {
    temp_dir dir;
    EXPECT_THROW(scan_dataset(dir / "missing"), ingestion_error);
    EXPECT_THROW(scan_dataset(dir.path()), ingestion_error);
    fs::create_directories(dir / "train");
    EXPECT_THROW(scan_dataset(dir.path()), ingestion_error);
    write_gray(dir / "train/A/x.pgm", 2, 2, 0);
    write_gray(dir / "train/B/x.pgm", 2, 2, 0);
    write_gray(dir / "test/A/x.pgm", 2, 2, 0);
    try {
        (void)scan_dataset(dir.path());
        FAIL() << "expected ingestion_error";
    } catch (const ingestion_error& e) {
        EXPECT_NE(std::string(e.what()).find("test lacks 'B'"), std::string::npos) << e.what();
    }
}

TEST(SplitDataset, SizesFollowRoundedBoundaries) {
    std::vector<int> ten(10), fortysix(46);
    std::iota(ten.begin(), ten.end(), 0);
    std::iota(fortysix.begin(), fortysix.end(), 0);
    auto a = split_dataset(ten, {0.7, 0.2, 0.1}, 1);
    EXPECT_EQ(a[0].size(), 7u);
    EXPECT_EQ(a[1].size(), 2u);
    EXPECT_EQ(a[2].size(), 1u);
    auto b = split_dataset(fortysix, {0.8, 0.2, 0.0}, 1);
    EXPECT_EQ(b[0].size(), static_cast<std::size_t>(std::llround(0.8 * 46)));
    EXPECT_EQ(b[0].size(), 37u);
    EXPECT_EQ(b[1].size(), 9u);
    EXPECT_EQ(b[2].size(), 0u);
}

TEST(SplitDataset, PartitionsAndIsSeeded) {
    std::vector<int> items(101);
    std::iota(items.begin(), items.end(), 0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = split_dataset(items, {0.6, 0.25, 0.15}, seed);
        std::vector<int> all;
        for (const auto& part : s) all.insert(all.end(), part.begin(), part.end());
        std::sort(all.begin(), all.end());
        ASSERT_EQ(all, items);
        EXPECT_EQ(split_dataset(items, {0.6, 0.25, 0.15}, seed), s);
    }
    EXPECT_NE(split_dataset(items, {0.5, 0.5, 0}, 1)[0], split_dataset(items, {0.5, 0.5, 0}, 2)[0]);
    auto whole = split_dataset(items, {1, 0, 0}, 3)[0];
    std::sort(whole.begin(), whole.end());
    EXPECT_EQ(whole, items);
}

TEST(SplitDataset, BadRatios) {
    const std::vector<int> items{1, 2, 3};
    EXPECT_THROW(split_dataset(items, {0.5, 0.4, 0.0}, 0), parameter_error);
    EXPECT_THROW(split_dataset(items, {1.2, -0.2, 0.0}, 0), parameter_error);
}

TEST(Preprocess, WhiteImageBecomesOnes) {
    temp_dir dir;
    write_gray(dir / "w.pgm", 5, 7, 255);
    const tensor32 t = load_and_preprocess(dir / "w.pgm", {8, 8, 1});
    EXPECT_EQ(t.dims(), (shape_t{1, 8, 8}));
    for (const float v : t.values()) EXPECT_EQ(v, 1.0f);
}

TEST(Preprocess, SinglePixelResizesToConstant) {
    temp_dir dir;
    write_gray(dir / "p.pgm", 1, 1, 51);
    const tensor32 t = load_and_preprocess(dir / "p.pgm", {224, 224, 1});
    for (const float v : t.values()) EXPECT_FLOAT_EQ(v, 0.2f);
}

TEST(Preprocess, BilinearGridMatchesOracle) {
    temp_dir dir;
    save_pnm(tensor32({1, 2, 2}, std::vector<float>{0, 255, 255, 0}), dir / "c.pgm");
    const tensor32 t = load_and_preprocess(dir / "c.pgm", {4, 4, 1});
    const std::vector<std::vector<double>> src{{0, 1}, {1, 0}};
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) {
            EXPECT_NEAR(t[y * 4 + x], bilinear_oracle(src, y, x, 4, 4), 1e-4) << y << "," << x;
        }
    }
    EXPECT_NEAR(t[1 * 4 + 1], 0.375, 1e-6);
}

TEST(Preprocess, RandomResizeMatchesOracle) {
    rng gen(4);
    const tensor32 img = random_tensor<float>({1, 5, 3}, gen, 0, 255);
    std::vector<std::vector<double>> src(5, std::vector<double>(3));
    for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 3; ++x) src[y][x] = img[y * 3 + x];
    const tensor32 r = resize_bilinear(img, 7, 8);
    for (std::size_t y = 0; y < 7; ++y)
        for (std::size_t x = 0; x < 8; ++x) EXPECT_NEAR(r[y * 8 + x], bilinear_oracle(src, y, x, 7, 8), 1e-3);
}

TEST(Preprocess, ChannelConversion) {
    temp_dir dir;
    tensor32 rgb({3, 1, 1}, std::vector<float>{255, 0, 0});
    save_pnm(rgb, dir / "r.ppm");
    const tensor32 gray = load_and_preprocess(dir / "r.ppm", {1, 1, 1});
    EXPECT_NEAR(gray[0], 0.299, 1e-3);
    write_gray(dir / "g.pgm", 2, 2, 102);
    const tensor32 three = load_and_preprocess(dir / "g.pgm", {2, 2, 3});
    EXPECT_EQ(three.dims(), (shape_t{3, 2, 2}));
    for (const float v : three.values()) EXPECT_FLOAT_EQ(v, 0.4f);
}

TEST(Preprocess, XrtImagesUseByteScale) {
    temp_dir dir;
    save_xrt(tensor32({2, 2}, std::vector<float>{0, 255, 127.5f, 51}), dir / "a.xrt");
    const tensor32 t = load_and_preprocess(dir / "a.xrt", {2, 2, 1});
    EXPECT_EQ(t.storage(), (std::vector<float>{0.0f, 1.0f, 0.5f, 0.2f}));
    save_xrt(tensor32({1, 1}, std::vector<float>{300}), dir / "bad.xrt");
    EXPECT_THROW(load_and_preprocess(dir / "bad.xrt", {2, 2, 1}), decode_error);
}

TEST(Preprocess, DecodeAndFormatErrors) {
    temp_dir dir;
    xrdl::testing::write_text(dir / "junk.pgm", "P5\n4 4\n255\nab");
    try {
        (void)load_and_preprocess(dir / "junk.pgm", {4, 4, 1});
        FAIL() << "expected decode_error";
    } catch (const decode_error& e) {
        EXPECT_NE(std::string(e.what()).find("junk.pgm"), std::string::npos);
    }
    xrdl::testing::write_text(dir / "x.bmp", "BM");
    EXPECT_THROW(load_and_preprocess(dir / "x.bmp", {4, 4, 1}), format_error);
    xrdl::testing::write_text(dir / "x.png", "\x89PNG");
    EXPECT_THROW(load_and_preprocess(dir / "x.png", {4, 4, 1}), format_error);
    xrdl::testing::write_text(dir / "wide.pgm", "P5\n1 1\n65535\n\x01\x02");
    EXPECT_THROW(load_and_preprocess(dir / "wide.pgm", {1, 1, 1}), format_error);
    EXPECT_THROW(load_and_preprocess(dir / "absent.pgm", {1, 1, 1}), io_error);
}

TEST(Pnm, RoundTripAndComments) {
    const bytes with_comment{'P', '5', '\n', '#', ' ', 'h', 'i', '\n', '2', ' ', '1', '\n', '2', '5', '5', '\n', 7, 9};
    const tensor32 t = decode_pnm(with_comment);
    EXPECT_EQ(t.dims(), (shape_t{1, 1, 2}));
    EXPECT_EQ(t.storage(), (std::vector<float>{7, 9}));
    EXPECT_EQ(decode_pnm(encode_pnm(t)).storage(), t.storage());
}

TEST(Augment, DegenerateConfigIsIdentity) {
    rng gen(3);
    const tensor32 img = random_tensor<float>({1, 12, 10}, gen, 0, 1);
    for (int i = 0; i < 20; ++i) EXPECT_TRUE(bit_identical(augment(img, augment_config::none(), gen), img));
}

TEST(Augment, ForcedFlipIsInvolution) {
    rng gen(5);
    const tensor32 img = random_tensor<float>({3, 6, 7}, gen, 0, 1);
    augment_config flip = augment_config::none();
    flip.flip_prob = 1.0;
    const tensor32 once = augment(img, flip, gen);
    EXPECT_FALSE(bit_identical(once, img));
    EXPECT_EQ(once[0], img[6]);
    EXPECT_TRUE(bit_identical(augment(once, flip, gen), img));
}

TEST(Augment, ThousandDrawsStayInRange) {
    rng seed_gen(11);
    const tensor32 img = random_tensor<float>({1, 16, 16}, seed_gen, 0, 1);
    rng gen(12);
    augment_config cfg;
    cfg.rotation_degrees = 30;
    cfg.zoom_min = 0.8;
    cfg.zoom_max = 1.25;
    cfg.shift_fraction = 0.2;
    for (int i = 0; i < 1000; ++i) {
        const tensor32 a = augment(img, cfg, gen);
        ASSERT_EQ(a.dims(), img.dims());
        for (const float v : a.values()) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
    }
}

TEST(Augment, DeterministicGivenRngState) {
    rng g0(1);
    const tensor32 img = random_tensor<float>({1, 10, 10}, g0, 0, 1);
    rng a(77), b(77);
    EXPECT_TRUE(bit_identical(augment(img, {}, a), augment(img, {}, b)));
}

TEST(Augment, RotationOfConstantKeepsCenter) {
    const tensor32 img({1, 9, 9}, 0.5f);
    augment_config cfg = augment_config::none();
    cfg.rotation_degrees = 45;
    rng gen(2);
    const tensor32 out = augment(img, cfg, gen);
    EXPECT_NEAR(out[4 * 9 + 4], 0.5f, 1e-6);
}

TEST(Augment, InvalidConfigsRejected) {
    augment_config c;
    c.zoom_min = 1.2;
    EXPECT_THROW(c.validate(), parameter_error);
    c = {};
    c.flip_prob = 1.5;
    EXPECT_THROW(c.validate(), parameter_error);
}

TEST(Batches, CeilingSizesAndOneHot) {
    const auto s = toy_samples(70, 3);
    rng gen(0);
    const auto bs = make_batches(s, 32, false, gen);
    ASSERT_EQ(bs.size(), 3u);
    EXPECT_EQ(bs[0].size(), 32u);
    EXPECT_EQ(bs[1].size(), 32u);
    EXPECT_EQ(bs[2].size(), 6u);
    EXPECT_EQ(bs[2].images.dims(), (shape_t{6, 1, 2, 2}));
    std::size_t k = 0;
    for (const auto& b : bs) {
        for (std::size_t i = 0; i < b.size(); ++i, ++k) {
            float row = 0;
            for (std::size_t c = 0; c < 3; ++c) row += b.labels[i * 3 + c];
            EXPECT_EQ(row, 1.0f);
            EXPECT_EQ(b.labels[i * 3 + b.label_indices[i]], 1.0f);
            EXPECT_EQ(b.label_indices[i], k % 3);
            EXPECT_EQ(b.images[i * 4], s.images[k][0]);
        }
    }
}

TEST(Batches, ShuffleVisitsEachItemOnceAndReplays) {
    const auto s = toy_samples(45, 2);
    rng a(9), b(9);
    const auto x = make_batches(s, 8, true, a);
    const auto y = make_batches(s, 8, true, b);
    ASSERT_EQ(x.size(), y.size());
    std::vector<float> seen;
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_TRUE(bit_identical(x[i].images, y[i].images));
        EXPECT_EQ(x[i].label_indices, y[i].label_indices);
        for (std::size_t j = 0; j < x[i].size(); ++j) seen.push_back(x[i].images[j * 4]);
    }
    std::vector<float> expected;
    for (const auto& img : s.images) expected.push_back(img[0]);
    std::vector<float> in_order = seen;
    std::sort(seen.begin(), seen.end());
    EXPECT_EQ(seen, expected);
    EXPECT_NE(in_order, expected);
}

TEST(Batches, AugmentationIndependentOfBatchSize) {
    sample_set s;
    s.num_classes = 2;
    rng g0(3);
    for (int i = 0; i < 6; ++i) {
        s.images.push_back(random_tensor<float>({1, 8, 8}, g0, 0, 1));
        s.labels.push_back(i % 2);
    }
    const augment_config cfg;
    rng a(4), b(4);
    const auto one = make_batches(s, 6, false, a, &cfg);
    const auto many = make_batches(s, 2, false, b, &cfg);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 64; ++j) {
            ASSERT_EQ(one[0].images[i * 64 + j], many[i / 2].images[(i % 2) * 64 + j]);
        }
    }
}

TEST(Batches, Errors) {
    rng gen(0);
    EXPECT_THROW(make_batches(sample_set{{}, {}, 2}, 4, false, gen), ingestion_error);
    EXPECT_THROW(make_batches(toy_samples(3, 2), 0, false, gen), parameter_error);
    EXPECT_THROW(make_batches(std::vector<sample_ref>{}, preprocess_config{}, 2, 4, false, gen), ingestion_error);
}

TEST(Batches, FromManifestOnDisk) {
    temp_dir dir;
    for (int i = 0; i < 5; ++i) write_gray(dir / "train/a" / (std::to_string(i) + ".pgm"), 4, 4, 0);
    for (int i = 0; i < 4; ++i) write_gray(dir / "train/b" / (std::to_string(i) + ".pgm"), 4, 4, 255);
    const auto m = scan_dataset(dir.path());
    rng gen(0);
    const auto bs = make_batches(m.split(split_kind::train), {4, 4, 1}, 2, 4, false, gen);
    ASSERT_EQ(bs.size(), 3u);
    EXPECT_EQ(bs[0].label_indices, (std::vector<std::size_t>{0, 0, 0, 0}));
    EXPECT_EQ(bs[2].label_indices, std::vector<std::size_t>{1});
    EXPECT_EQ(bs[2].images[0], 1.0f);
}
