#include <gtest/gtest.h>

#include <numeric>

#include "rvrecon/dataset.hpp"
#include "rvrecon/random.hpp"
#include "test_util.hpp"

using namespace rvrecon;

namespace {

ScanRecord random_scan(std::size_t T, std::uint64_t seed, const std::string& id = "s") {
    Rng rng(seed);
    ScanRecord s;
    s.scan_id = id;
    s.bold = Matrix(T, kNumRois);
    s.motion = Matrix(T, kNumMotion);
    for (double& v : s.bold.values()) v = rng.normal();
    for (double& v : s.motion.values()) v = rng.normal();
    s.tr_s = 0.72;
    return s;
}

// rv[t] = t + 1, so a target value is its own 1-based volume index.
RvSeries index_rv(std::size_t T) {
    RvSeries rv{std::vector<double>(T), 0.72};
    std::iota(rv.values.begin(), rv.values.end(), 1.0);
    return rv;
}

}  // namespace

TEST(BuildWindows, FullScanMethodTwoGeometry) {
    const auto scan = random_scan(1200, 1);
    const auto ds = build_windows(scan, index_rv(1200), WindowSpec{}, Method::middle);
    ASSERT_EQ(ds.size(), 1136u);
    EXPECT_EQ(ds.target_dim(), 1u);
    EXPECT_EQ(ds.target(0)[0], 33.0);
    EXPECT_EQ(ds.target(1135)[0], 1168.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(ds.window_start(i), i);
        EXPECT_EQ(ds.target(i)[0], static_cast<double>(ds.window_start(i) + 32 + 1));
    }
}

TEST(BuildWindows, MethodOneAndThreeTargets) {
    const auto scan = random_scan(1200, 2);
    const auto m1 = build_windows(scan, index_rv(1200), WindowSpec{}, Method::start);
    const auto m3 = build_windows(scan, index_rv(1200), WindowSpec{}, Method::end);
    ASSERT_EQ(m1.size(), 1u);
    ASSERT_EQ(m3.size(), 1u);
    ASSERT_EQ(m1.target_dim(), 32u);
    for (std::size_t k = 0; k < 32; ++k) {
        EXPECT_EQ(m1.target(0)[k], static_cast<double>(k + 1));
        EXPECT_EQ(m3.target(0)[k], static_cast<double>(1169 + k));
    }
    EXPECT_EQ(m1.window_start(0), 0u);
    EXPECT_EQ(m3.window_start(0), 1200u - 65u);
}

TEST(BuildWindows, MinimalScan) {
    const auto ds = build_windows(random_scan(65, 3), index_rv(65), WindowSpec{}, Method::middle);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.target(0)[0], 33.0);
}

TEST(BuildWindows, WindowCountForAllLengths) {
    for (std::size_t T = 65; T <= 265; T += 7) {
        const auto ds = build_windows(random_scan(T, T), index_rv(T), WindowSpec{}, Method::middle);
        EXPECT_EQ(ds.size(), T - 65 + 1);
    }
}

TEST(BuildWindows, InputIsTheZScoredRowBlock) {
    const auto scan = random_scan(100, 4);
    const auto z = prepare_channels(scan, ChannelMode::bold_plus_motion);
    const auto ds = build_windows(scan, index_rv(100), WindowSpec{}, Method::middle);
    const auto in = ds.input(10);
    ASSERT_EQ(in.size(), 65u * 96u);
    for (std::size_t r = 0; r < 65; ++r) {
        for (std::size_t c = 0; c < 96; ++c) EXPECT_EQ(in[r * 96 + c], z(10 + r, c));
    }
}

TEST(BuildWindows, Errors) {
    EXPECT_THROW(build_windows(random_scan(64, 5), index_rv(64), WindowSpec{}, Method::middle), ShapeError);
    auto channels = std::make_shared<const Matrix>(100, 90);
    EXPECT_THROW(build_windows(channels, index_rv(100), WindowSpec{}, Method::middle, "x"), SchemaError);
    EXPECT_THROW((WindowSpec{64, 96}.validate()), SchemaError);
    EXPECT_THROW((WindowSpec{65, 95}.validate()), SchemaError);
}

TEST(BuildWindows, DeterministicAndOrderIndependent) {
    const auto a = random_scan(90, 6, "a");
    const auto b = random_scan(120, 7, "b");
    const WindowSpec spec;
    WindowedDataset ab(65, 96, 1, Method::middle), ba(65, 96, 1, Method::middle);
    ab.append(build_windows(a, index_rv(90), spec, Method::middle));
    ab.append(build_windows(b, index_rv(120), spec, Method::middle));
    ba.append(build_windows(b, index_rv(120), spec, Method::middle));
    ba.append(build_windows(a, index_rv(90), spec, Method::middle));
    const auto again = build_windows(a, index_rv(90), spec, Method::middle);
    for (std::size_t i = 0; i < again.size(); ++i) {
        EXPECT_TRUE(std::ranges::equal(ab.input(i), again.input(i)));
        EXPECT_TRUE(std::ranges::equal(ba.input(56 + i), again.input(i)));
        EXPECT_EQ(ba.scan_id(56 + i), "a");
    }
}

TEST(SelectChannels, ShapesAndColumnOrder) {
    const auto scan = random_scan(1200, 8);
    const auto both = select_channels(scan, ChannelMode::bold_plus_motion);
    const auto bold = select_channels(scan, ChannelMode::bold_only);
    EXPECT_EQ(both.rows(), 1200u);
    EXPECT_EQ(both.cols(), 96u);
    EXPECT_EQ(bold.cols(), 90u);
    for (std::size_t t = 0; t < 1200; t += 97) {
        for (std::size_t c = 0; c < 90; ++c) EXPECT_EQ(both(t, c), scan.bold(t, c));
        for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(both(t, 90 + c), scan.motion(t, c));
    }
}

TEST(Stitch, PaperGeometry) {
    const auto l = stitch_layout(1200, WindowSpec{});
    EXPECT_EQ(l.start_first, 1u);
    EXPECT_EQ(l.start_last, 32u);
    EXPECT_EQ(l.middle_first, 33u);
    EXPECT_EQ(l.middle_last, 1168u);
    EXPECT_EQ(l.end_first, 1169u);
    EXPECT_EQ(l.end_last, 1200u);
    const auto s = stitch_layout(130, WindowSpec{});
    EXPECT_EQ(s.middle_last, 98u);
    EXPECT_EQ(s.end_first, 99u);
    const auto m = stitch_layout(65, WindowSpec{});
    EXPECT_EQ(m.middle_first, 33u);
    EXPECT_EQ(m.middle_last, 33u);
    EXPECT_EQ(m.end_first, 34u);
}

TEST(Stitch, PartitionPropertyExhaustive) {
    for (std::size_t L : {3u, 5u, 65u}) {
        const WindowSpec spec{L, 96};
        const std::size_t h = spec.half();
        for (std::size_t T = L; T <= L + 200; ++T) {
            std::vector<double> p1(h), p2(T - L + 1), p3(h);
            std::iota(p1.begin(), p1.end(), 1.0);
            std::iota(p2.begin(), p2.end(), static_cast<double>(h + 1));
            std::iota(p3.begin(), p3.end(), static_cast<double>(T - h + 1));
            const auto rv = stitch(p1, p2, p3, T, spec, 1.0);
            ASSERT_EQ(rv.size(), T);
            for (std::size_t t = 0; t < T; ++t) ASSERT_EQ(rv.values[t], static_cast<double>(t + 1));
        }
    }
}

TEST(Stitch, RoundTripsBuildWindowsTargets) {
    const std::size_t T = 300;
    const auto scan = random_scan(T, 9);
    const auto rv = index_rv(T);
    const WindowSpec spec;
    const auto m1 = build_windows(scan, rv, spec, Method::start);
    const auto m2 = build_windows(scan, rv, spec, Method::middle);
    const auto m3 = build_windows(scan, rv, spec, Method::end);
    std::vector<double> p2;
    for (std::size_t i = 0; i < m2.size(); ++i) p2.push_back(m2.target(i)[0]);
    EXPECT_EQ(stitch(m1.target(0), p2, m3.target(0), T, spec, 0.72), rv);
}

TEST(Stitch, LengthMismatchIsStitchError) {
    std::vector<double> a(32), b(1136), c(32), short_b(1135);
    EXPECT_NO_THROW(stitch(a, b, c, 1200, WindowSpec{}, 1.0));
    EXPECT_THROW(stitch(a, short_b, c, 1200, WindowSpec{}, 1.0), StitchError);
    EXPECT_THROW(stitch(b, b, c, 1200, WindowSpec{}, 1.0), StitchError);
}

TEST(WindowedDataset, SubsampleKeepsEveryNth) {
    const auto ds = build_windows(random_scan(100, 10), index_rv(100), WindowSpec{}, Method::middle);
    const auto sub = ds.subsample(3);
    ASSERT_EQ(sub.size(), 12u);
    for (std::size_t i = 0; i < sub.size(); ++i) {
        EXPECT_EQ(sub.window_start(i), 3 * i);
        EXPECT_EQ(sub.target(i)[0], ds.target(3 * i)[0]);
    }
}

TEST(WindowedDataset, CacheRoundTrip) {
    test::TempDir dir;
    WindowedDataset ds(65, 96, 32, Method::end);
    ds.append(build_windows(random_scan(100, 11, "x"), index_rv(100), WindowSpec{}, Method::end));
    ds.append(build_windows(random_scan(80, 12, "y"), index_rv(80), WindowSpec{}, Method::end));
    save_dataset(dir.path() / "w.bin", ds);
    const auto back = load_dataset(dir.path() / "w.bin");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.method(), Method::end);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_TRUE(std::ranges::equal(back.input(i), ds.input(i)));
        EXPECT_TRUE(std::ranges::equal(back.target(i), ds.target(i)));
        EXPECT_EQ(back.scan_id(i), ds.scan_id(i));
    }
    std::ofstream(dir.path() / "bad.bin") << "not a cache";
    EXPECT_THROW(load_dataset(dir.path() / "bad.bin"), DataError);
}
