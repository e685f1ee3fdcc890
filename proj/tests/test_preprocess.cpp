#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "oracles.hpp"
#include "preprocess/channels.hpp"
#include "preprocess/corrections.hpp"
#include "preprocess/dataset.hpp"
#include "preprocess/histogram_peak.hpp"
#include "preprocess/mask_ops.hpp"
#include "test_util.hpp"

using namespace mcs;

namespace {

bool volumes_equal(const Volume3D& a, const Volume3D& b) {
    return a.shape == b.shape && a.data == b.data;
}

}  // namespace

TEST_CASE("dilate/erode/close match structuring-element oracles on random grids") {
    Rng rng(11);
    for (int t = 0; t < 12; ++t) {
        const int64_t nz = 3 + static_cast<int64_t>(rng.below(8));
        const int64_t ny = 3 + static_cast<int64_t>(rng.below(10));
        const int64_t nx = 3 + static_cast<int64_t>(rng.below(10));
        Volume3D m = testutil::random_binary(rng, nz, ny, nx, 0.35);
        const int r = 1 + static_cast<int>(rng.below(3));
        CHECK(volumes_equal(binary_dilate(m, r), oracle::dilate(m, r)));
        CHECK(volumes_equal(binary_erode(m, r), oracle::erode(m, r)));
        CHECK(volumes_equal(binary_close(m, r), oracle::close(m, r)));
    }
}

TEST_CASE("closing is extensive even at volume faces") {
    // mask touching all 6 faces: naive border-as-background erosion would
    // carve it away; closing must keep every original voxel
    Volume3D m(6, 9, 9, 1.0f);
    Volume3D c = binary_close(m, 5);
    CHECK(volumes_equal(c, m));
    Volume3D o = oracle::close(m, 5);
    CHECK(volumes_equal(c, o));
}

TEST_CASE("edt_squared equals all-pairs scan") {
    Rng rng(12);
    for (int t = 0; t < 8; ++t) {
        const int64_t n = 4 + static_cast<int64_t>(rng.below(7));
        Volume3D seeds = testutil::random_binary(rng, n, n, n, 0.15);
        seeds.spacing = {rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)};
        const std::vector<double> fast = edt_squared(seeds);
        const std::vector<double> slow = oracle::edt_squared(seeds);
        REQUIRE(fast.size() == slow.size());
        for (size_t i = 0; i < fast.size(); ++i) {
            if (std::isinf(slow[i])) {
                CHECK(std::isinf(fast[i]));
            } else {
                CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("regenerate_mask equals brute-force morphology") {
    SUBCASE("solid ellipsoid in air") {
        Volume3D ct = testutil::ellipsoid_volume(16, 24, 24, 6.0, 9.0, 9.0, 0.0f, kAirHu);
        Volume3D got = regenerate_mask(ct);
        Volume3D want = oracle::regenerate_mask(ct);
        CHECK(volumes_equal(got, want));
        // dilation is extensive: every ellipsoid voxel stays inside the mask
        for (int64_t i = 0; i < ct.voxels(); ++i)
            if (ct.data[static_cast<size_t>(i)] > -500.0f)
                CHECK(got.data[static_cast<size_t>(i)] == 1.0f);
    }
    SUBCASE("random blobs, random parameters") {
        Rng rng(13);
        for (int t = 0; t < 6; ++t) {
            const int64_t n = 8 + static_cast<int64_t>(rng.below(9));
            Volume3D ct(n, n, n, kAirHu);
            for (int b = 0; b < 3; ++b) {
                const int64_t cz = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
                const int64_t cy = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
                const int64_t cx = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
                const int64_t rr = 1 + static_cast<int64_t>(rng.below(3));
                for (int64_t z = 0; z < n; ++z)
                    for (int64_t y = 0; y < n; ++y)
                        for (int64_t x = 0; x < n; ++x)
                            if ((z - cz) * (z - cz) + (y - cy) * (y - cy) +
                                    (x - cx) * (x - cx) <=
                                rr * rr)
                                ct.at(z, y, x) = 50.0f;
            }
            MaskParams p;
            p.dilate_radius = 1 + static_cast<int>(rng.below(2));
            p.close_radius = 1 + static_cast<int>(rng.below(3));
            CHECK(volumes_equal(regenerate_mask(ct, p), oracle::regenerate_mask(ct, p)));
        }
    }
    SUBCASE("uniform air errors") {
        Volume3D air(4, 4, 4, kAirHu);
        CHECK_THROWS_AS(regenerate_mask(air), ValidationError);
    }
    SUBCASE("interior air cavity ends up inside the mask") {
        Volume3D ct = testutil::ellipsoid_volume(12, 20, 20, 5.0, 8.0, 8.0, 0.0f, kAirHu);
        ct.at(6, 10, 10) = -900.0f;
        ct.at(6, 10, 11) = -900.0f;
        Volume3D m = regenerate_mask(ct);
        CHECK(m.at(6, 10, 10) == 1.0f);
        CHECK(m.at(6, 10, 11) == 1.0f);
    }
    SUBCASE("largest component only") {
        Volume3D ct(6, 24, 24, kAirHu);
        for (int64_t z = 1; z < 5; ++z)
            for (int64_t y = 2; y < 10; ++y)
                for (int64_t x = 2; x < 10; ++x) ct.at(z, y, x) = 0.0f;  // big blob
        ct.at(3, 20, 20) = 0.0f;  // far speck
        Volume3D m = regenerate_mask(ct);
        CHECK(m.at(3, 5, 5) == 1.0f);
        CHECK(m.at(3, 20, 20) == 0.0f);
        CHECK(volumes_equal(m, oracle::regenerate_mask(ct)));
    }
}

TEST_CASE("cbct range offset detection and shift") {
    SUBCASE("air stored as 0 is shifted down") {
        Volume3D v(4, 8, 8, 0.0f);  // "air" at 0: offset storage
        v.at(2, 4, 4) = 1800.0f;
        CHECK(range_offset_detected(v));
        Volume3D c = correct_cbct_range(v);
        CHECK(c.at(0, 0, 0) == kAirHu);
        CHECK(c.at(2, 4, 4) == 1800.0f - 1024.0f);
    }
    SUBCASE("already consistent volume is untouched before clipping") {
        Rng rng(14);
        Volume3D v = testutil::random_volume(rng, 4, 8, 8, -1024.0f, 3000.0f);
        // force the low percentile below -500 so no offset is detected
        for (int i = 0; i < 8; ++i) v.data[static_cast<size_t>(i)] = kAirHu;
        Volume3D c = correct_cbct_range(v);
        CHECK(c.data == v.data);
    }
    SUBCASE("values above 3000 clip") {
        Volume3D v(2, 4, 4, kAirHu);
        v.at(0, 0, 0) = 3500.0f;
        Volume3D c = correct_cbct_range(v);
        CHECK(c.at(0, 0, 0) == 3000.0f);
    }
}

TEST_CASE("overflow_correct changes exactly the oracle change set") {
    SUBCASE("sphere phantom with analytic depths") {
        // ball radius 24 mm at 2 mm spacing; mask = the ball
        const int64_t n = 31;
        Volume3D mask(n, n, n, 0.0f);
        mask.spacing = {2.0, 2.0, 2.0};
        const double c = (n - 1) / 2.0;
        for (int64_t z = 0; z < n; ++z)
            for (int64_t y = 0; y < n; ++y)
                for (int64_t x = 0; x < n; ++x) {
                    const double d2 = ((z - c) * (z - c) + (y - c) * (y - c) +
                                       (x - c) * (x - c)) *
                                      4.0;
                    if (d2 <= 24.0 * 24.0) mask.at(z, y, x) = 1.0f;
                }
        Volume3D cbct(n, n, n, 0.0f);
        cbct.spacing = mask.spacing;
        const int64_t ci = (n - 1) / 2;
        cbct.at(ci, ci, ci + 7) = 1500.0f;   // 14 mm from center, ~10 mm deep
        cbct.at(ci, ci, ci) = 1500.0f;       // center: ~22+ mm deep but hull is 40
        cbct.at(0, 0, 0) = 2000.0f;          // outside the mask
        cbct.at(ci, ci, ci + 2) = 900.0f;    // below threshold
        Volume3D out = overflow_correct(cbct, mask);
        CHECK(out.at(ci, ci, ci + 7) == kAirHu);
        CHECK(out.at(ci, ci, ci) == kAirHu);  // depth ~24 mm < 40 mm hull
        CHECK(out.at(0, 0, 0) == kAirHu);
        CHECK(out.at(ci, ci, ci + 2) == 900.0f);

        const std::vector<char> want = oracle::overflow_changeset(cbct, mask, 40.0, 1000.0);
        for (int64_t i = 0; i < cbct.voxels(); ++i) {
            const bool changed =
                out.data[static_cast<size_t>(i)] != cbct.data[static_cast<size_t>(i)];
            CHECK(changed == (want[static_cast<size_t>(i)] != 0));
        }
    }
    SUBCASE("deep voxel beyond the hull is preserved") {
        // 31^3 at 3.5 mm spacing: center is ~50 mm from the fully-masked
        // volume's boundary, beyond the 40 mm hull
        const int64_t n = 31;
        Volume3D mask(n, n, n, 1.0f);
        mask.spacing = {3.5, 3.5, 3.5};
        for (int64_t z = 0; z < n; ++z)
            for (int64_t y = 0; y < n; ++y)
                for (int64_t x = 0; x < n; ++x)
                    if (z == 0 || y == 0 || x == 0 || z == n - 1 || y == n - 1 || x == n - 1)
                        mask.at(z, y, x) = 0.0f;
        Volume3D cbct(n, n, n, 0.0f);
        cbct.spacing = mask.spacing;
        const int64_t ci = (n - 1) / 2;
        cbct.at(ci, ci, ci) = 1500.0f;
        Volume3D out = overflow_correct(cbct, mask);
        CHECK(out.at(ci, ci, ci) == 1500.0f);
        const std::vector<char> want = oracle::overflow_changeset(cbct, mask, 40.0, 1000.0);
        CHECK(want[mask.index(ci, ci, ci)] == 0);
    }
    SUBCASE("no voxel above threshold: bitwise identity") {
        Rng rng(15);
        Volume3D cbct = testutil::random_volume(rng, 8, 10, 10, -1024.0f, 900.0f);
        Volume3D mask = testutil::ellipsoid_volume(8, 10, 10, 3.0, 4.0, 4.0, 1.0f, 0.0f);
        Volume3D out = overflow_correct(cbct, mask);
        CHECK(out.data == cbct.data);
    }
    SUBCASE("random grids match the oracle change set") {
        Rng rng(16);
        for (int t = 0; t < 5; ++t) {
            const int64_t n = 8 + static_cast<int64_t>(rng.below(9));
            Volume3D mask = testutil::ellipsoid_volume(n, n, n, n * 0.4, n * 0.42, n * 0.42,
                                                       1.0f, 0.0f);
            mask.spacing = {rng.uniform(1.0, 4.0), rng.uniform(1.0, 4.0),
                            rng.uniform(1.0, 4.0)};
            Volume3D cbct(n, n, n);
            cbct.spacing = mask.spacing;
            for (float& v : cbct.data)
                v = static_cast<float>(rng.uniform(-1024.0, 2500.0));
            Volume3D out = overflow_correct(cbct, mask);
            const std::vector<char> want =
                oracle::overflow_changeset(cbct, mask, 40.0, 1000.0);
            for (int64_t i = 0; i < cbct.voxels(); ++i) {
                const size_t ui = static_cast<size_t>(i);
                if (want[ui]) {
                    CHECK(out.data[ui] == kAirHu);
                } else {
                    CHECK(out.data[ui] == cbct.data[ui]);
                }
            }
        }
    }
    SUBCASE("empty mask errors") {
        Volume3D cbct(4, 4, 4, 0.0f);
        Volume3D mask(4, 4, 4, 0.0f);
        CHECK_THROWS_AS(overflow_correct(cbct, mask), ValidationError);
    }
}

TEST_CASE("histogram peak finder") {
    SUBCASE("dominant water mode returns ~0") {
        Volume3D v(8, 16, 16, 0.0f);
        Rng rng(17);
        for (float& x : v.data) x = static_cast<float>(rng.normal(0.0, 10.0));
        Volume3D mask(8, 16, 16, 1.0f);
        PeakResult r = find_soft_tissue_level(v, mask);
        CHECK(r.found);
        CHECK(std::abs(r.level) <= 4.0);  // one bin
    }
    SUBCASE("mode shifted to +80 is recovered within a bin") {
        Volume3D v(8, 16, 16, 0.0f);
        Rng rng(18);
        for (float& x : v.data) x = static_cast<float>(rng.normal(80.0, 10.0));
        Volume3D mask(8, 16, 16, 1.0f);
        PeakResult r = find_soft_tissue_level(v, mask);
        CHECK(r.found);
        CHECK(r.level >= 80.0 - 4.0);
        CHECK(r.level <= 80.0 + 4.0);
    }
    SUBCASE("bimodal: taller mode wins regardless of HU order") {
        HistogramPeakParams p;
        const int nbins = static_cast<int>((p.search_hi - p.search_lo) / p.bin_width);
        std::vector<double> counts(static_cast<size_t>(nbins), 0.0);
        auto bump = [&](double hu, double peak) {
            // triangular mode so box smoothing keeps the max on the mode bin
            const int64_t b = static_cast<int64_t>((hu - p.search_lo) / p.bin_width);
            for (int64_t d = -4; d <= 4; ++d)
                counts[static_cast<size_t>(b + d)] +=
                    peak * (1.0 - std::abs(double(d)) / 5.0);
        };
        bump(-60.0, 1000.0);
        bump(40.0, 400.0);
        PeakResult r = find_histogram_peak(counts, p);
        CHECK(r.found);
        CHECK(r.level >= -60.0 - p.bin_width);
        CHECK(r.level <= -60.0 + p.bin_width);
    }
    SUBCASE("equal-height modes tie toward the lower HU") {
        HistogramPeakParams p;
        p.smooth_radius = 0;
        const int nbins = static_cast<int>((p.search_hi - p.search_lo) / p.bin_width);
        std::vector<double> counts(static_cast<size_t>(nbins), 0.0);
        counts[20] = 500.0;
        counts[100] = 500.0;
        PeakResult r = find_histogram_peak(counts, p);
        CHECK(r.found);
        CHECK(r.level == doctest::Approx(p.search_lo + (20 + 0.5) * p.bin_width));
    }
    SUBCASE("no qualifying peak falls back to 0 with the flag") {
        std::vector<double> counts(150, 0.0);
        PeakResult r = find_histogram_peak(counts, HistogramPeakParams{});
        CHECK_FALSE(r.found);
        CHECK(r.level == 0.0);
    }
    SUBCASE("translation covariance by whole bins") {
        HistogramPeakParams p;
        Rng rng(19);
        Volume3D v(6, 12, 12, 0.0f);
        for (float& x : v.data) x = static_cast<float>(rng.normal(-40.0, 12.0));
        Volume3D mask(6, 12, 12, 1.0f);
        PeakResult base = find_soft_tissue_level(v, mask, p);
        const double c = 5.0 * p.bin_width;
        Volume3D shifted = v;
        for (float& x : shifted.data) x += static_cast<float>(c);
        PeakResult moved = find_soft_tissue_level(shifted, mask, p);
        REQUIRE(base.found);
        REQUIRE(moved.found);
        CHECK(moved.level == doctest::Approx(base.level + c).epsilon(1e-12));
    }
    SUBCASE("empty mask errors") {
        Volume3D v(4, 4, 4, 0.0f);
        Volume3D mask(4, 4, 4, 0.0f);
        CHECK_THROWS_AS(find_soft_tissue_level(v, mask), ValidationError);
    }
}

TEST_CASE("channel construction") {
    SUBCASE("window placement per region and modality") {
        ChannelWindows wb = make_channel_windows(Region::brain, 0.0);
        CHECK(wb.soft.lo == -100.0);
        CHECK(wb.soft.hi == 100.0);
        ChannelWindows wp = make_channel_windows(Region::pelvis, 0.0);
        CHECK(wp.soft.lo == -150.0);
        CHECK(wp.soft.hi == 150.0);
        ChannelWindows shifted = make_channel_windows(Region::pelvis, 60.0);
        CHECK(shifted.soft.lo == -90.0);
        CHECK(shifted.soft.hi == 210.0);
        CHECK(wb.full.lo == -1024.0);
        CHECK(wb.full.hi == 3000.0);
        CHECK(wb.dense.lo == 600.0);
        CHECK(wb.dense.hi == 3000.0);
    }
    SUBCASE("extreme voxels and masked voxels") {
        Volume3D v = testutil::ellipsoid_volume(6, 16, 16, 2.5, 7.0, 7.0, 0.0f, kAirHu);
        Volume3D mask = testutil::ellipsoid_volume(6, 16, 16, 2.5, 7.0, 7.0, 1.0f, 0.0f);
        v.at(3, 8, 8) = 3000.0f;
        v.at(3, 8, 9) = kAirHu;  // in-mask air
        v.at(0, 0, 0) = 500.0f;  // outside the mask: must read as air
        MultiChannelVolume mc = build_channels(v, mask, Region::pelvis, Modality::ct);
        CHECK(mc.ch[0].at(3, 8, 8) == 1.0f);
        CHECK(mc.ch[1].at(3, 8, 8) == 1.0f);
        CHECK(mc.ch[2].at(3, 8, 8) == 1.0f);
        CHECK(mc.ch[0].at(3, 8, 9) == 0.0f);
        CHECK(mc.ch[1].at(3, 8, 9) == 0.0f);
        CHECK(mc.ch[2].at(3, 8, 9) == 0.0f);
        CHECK(mc.ch[0].at(0, 0, 0) == 0.0f);
        CHECK(mc.ch[1].at(0, 0, 0) == 0.0f);
        CHECK(mc.ch[2].at(0, 0, 0) == 0.0f);
        // CT soft window is centred on water: 0 HU -> 0.5
        CHECK(mc.ch[1].at(3, 8, 10) == doctest::Approx(0.5).epsilon(1e-6));
        for (int c = 0; c < 3; ++c)
            for (float x : mc.ch[static_cast<size_t>(c)].data) {
                CHECK(x >= 0.0f);
                CHECK(x <= 1.0f);
            }
    }
    SUBCASE("cbct soft window follows the histogram peak") {
        Volume3D v = testutil::ellipsoid_volume(6, 16, 16, 2.5, 7.0, 7.0, 80.0f, kAirHu);
        Volume3D mask = testutil::ellipsoid_volume(6, 16, 16, 2.5, 7.0, 7.0, 1.0f, 0.0f);
        Rng rng(20);
        for (size_t i = 0; i < v.data.size(); ++i)  // broad mode, not a delta spike
            if (mask.data[i] > 0.5f) v.data[i] += static_cast<float>(rng.normal(0.0, 10.0));
        MultiChannelVolume mc = build_channels(v, mask, Region::brain, Modality::cbct);
        CHECK(std::abs(mc.windows.soft_level - 80.0) <= 4.0);
        // soft channel reads ~0.5 near the peak level for a near-80 voxel
        const float probe = v.at(3, 8, 8);
        const double expect = 0.5 + (probe - mc.windows.soft_level) / 200.0;
        CHECK(mc.ch[1].at(3, 8, 8) == doctest::Approx(expect).epsilon(0.02));
    }
}

TEST_CASE("slice assembly") {
    Volume3D cbct = testutil::ellipsoid_volume(5, 20, 24, 2.0, 8.0, 10.0, 50.0f, kAirHu);
    Volume3D ct = cbct;
    PatientCase c;
    c.case_id = "t";
    c.region = Region::brain;
    c.cbct = cbct;
    c.ct = ct;
    c.has_ct = true;
    PreprocessedCase pc = preprocess_case(c);

    SUBCASE("default brain target is 304") {
        std::vector<SlicePair> slices = assemble_training_slices(pc);
        REQUIRE(slices.size() == 5);
        CHECK(slices[0].cbct.channels[0].ny == 304);
        CHECK(slices[0].cbct.channels[0].nx == 304);
        CHECK(slices[0].has_ct);
    }
    SUBCASE("explicit target overrides") {
        std::vector<SlicePair> slices = assemble_training_slices(pc, 32);
        REQUIRE(slices.size() == 5);
        CHECK(slices[0].cbct.channels[0].ny == 32);
        CHECK(slices[2].ct.channels[1].nx == 32);
        CHECK(slices[0].cbct.geometry.original_shape[0] == 20);
        CHECK(slices[0].cbct.geometry.original_shape[1] == 24);
    }
    SUBCASE("cbct-only case yields cbct-only pairs") {
        PatientCase infer_case = c;
        infer_case.ct = Volume3D{};
        infer_case.has_ct = false;
        infer_case.mask = pc.mask;
        infer_case.has_mask = true;
        PreprocessedCase ipc = preprocess_case(infer_case);
        std::vector<SlicePair> slices = assemble_training_slices(ipc, 32);
        REQUIRE(slices.size() == 5);
        CHECK_FALSE(slices[0].has_ct);
    }
}

TEST_CASE("case io round trip") {
    testutil::TempDir tmp;
    PatientCase c;
    c.case_id = "case_007";
    c.region = Region::pelvis;
    c.cbct = testutil::ellipsoid_volume(4, 12, 12, 1.8, 5.0, 5.0, 30.0f, kAirHu);
    c.ct = c.cbct;
    c.has_ct = true;
    write_case(tmp.str(), c);
    std::vector<CaseRef> refs = list_cases(tmp.str());
    REQUIRE(refs.size() == 1);
    CHECK(refs[0].case_id == "case_007");
    CHECK(refs[0].region == Region::pelvis);
    PatientCase r = load_case(tmp.str(), refs[0]);
    CHECK(r.cbct.data == c.cbct.data);
    CHECK(r.has_ct);
    CHECK_FALSE(r.has_mask);

    PatientCase d = load_case_dir(tmp.str("pelvis/case_007"), Region::pelvis);
    CHECK(d.case_id == "case_007");
    CHECK(d.cbct.data == c.cbct.data);
}
