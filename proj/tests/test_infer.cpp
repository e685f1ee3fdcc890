#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "infer/synthesis.hpp"
#include "phantom/phantom.hpp"
#include "test_util.hpp"

using namespace mcs;

namespace {

// Passes the generator input straight through; fusion returns the full
// window channel. Makes the HU round trip through the slice machinery
// predictable to a window-normalization rounding error.
class IdentityModel : public SliceModel {
public:
    Tensor translate(const Tensor& cbct3) override { return cbct3; }
    Tensor fuse(const Tensor& sct3) override {
        Tensor out(1, 1, sct3.h, sct3.w);
        std::copy(sct3.at(0, 0), sct3.at(0, 0) + sct3.h * sct3.w, out.v.begin());
        return out;
    }
};

PreprocessedCase phantom_preprocessed(uint64_t seed, Region region,
                                      std::array<int64_t, 3> shape) {
    PhantomSpec spec;
    spec.seed = seed;
    spec.region = region;
    spec.shape = shape;
    return preprocess_case(generate_case(spec, "case"));
}

SctBundle flat_bundle(Region region, int64_t n, float base_hu, float ch2_hu,
                      float ch3_hu) {
    SctBundle b;
    b.windows = make_channel_windows(region, 0.0);
    auto vol = [&](float hu) {
        Volume3D v(1, n, n);
        for (float& x : v.data) x = hu;
        return v;
    };
    b.ch1 = vol(base_hu);
    b.fused = vol(base_hu);
    b.ch2 = vol(ch2_hu);
    b.ch3 = vol(ch3_hu);
    return b;
}

}  // namespace

TEST_CASE("identity model reproduces the preprocessed channels in HU") {
    PreprocessedCase pc = phantom_preprocessed(41, Region::brain, {4, 20, 24});
    IdentityModel model;
    SctBundle out = generate_sct(pc, model, Region::brain, 32);

    CHECK(out.ch1.shape == pc.cbct_corr.shape);
    CHECK(out.geometry.size() == 4);
    CHECK(out.geometry[0].target_shape == std::array<int64_t, 2>{32, 32});
    CHECK(out.geometry[0].original_shape == std::array<int64_t, 2>{20, 24});

    const ChannelWindows ctw = make_channel_windows(Region::brain, 0.0);
    const HUWindow* wins[3] = {&ctw.full, &ctw.soft, &ctw.dense};
    const Volume3D* got[3] = {&out.ch1, &out.ch2, &out.ch3};
    for (int c = 0; c < 3; ++c) {
        const Volume3D& norm = pc.cbct_ch.ch[static_cast<size_t>(c)];
        for (size_t i = 0; i < norm.data.size(); ++i) {
            const float want = window_denormalize_value(norm.data[i], *wins[c]);
            CHECK(std::abs((*got[c]).data[i] - want) <= 1e-3f);
        }
    }
    // fusion stub returns the full-window channel
    CHECK(out.fused.data == out.ch1.data);
}

TEST_CASE("cropped margins come back as the window floor") {
    PreprocessedCase pc = phantom_preprocessed(42, Region::brain, {4, 20, 20});
    IdentityModel model;
    SctBundle out = generate_sct(pc, model, Region::brain, 16);  // 20 -> crop -> 16

    // corner voxels fall outside the kept 16x16 region
    const ChannelWindows ctw = make_channel_windows(Region::brain, 0.0);
    CHECK(out.ch1.at(0, 0, 0) == -1024.0f);
    CHECK(out.ch2.at(0, 0, 0) == static_cast<float>(ctw.soft.lo));
    CHECK(out.ch3.at(0, 0, 0) == 600.0f);
    CHECK(out.ch1.at(3, 19, 19) == -1024.0f);

    // interior voxels survive the crop round trip
    const float want =
        window_denormalize_value(pc.cbct_ch.ch[0].at(2, 10, 10), ctw.full);
    CHECK(std::abs(out.ch1.at(2, 10, 10) - want) <= 1e-3f);
}

TEST_CASE("generate_sct input checks") {
    PreprocessedCase pc = phantom_preprocessed(43, Region::brain, {4, 16, 16});
    IdentityModel model;
    CHECK_THROWS_AS(generate_sct(pc, model, Region::pelvis), ValidationError);
}

TEST_CASE("real bundle outputs stay inside the channel windows") {
    PreprocessedCase pc = phantom_preprocessed(44, Region::brain, {4, 16, 16});
    GeneratorSpec gs;
    gs.base_filters = 4;
    gs.n_down = 2;
    gs.n_residual_blocks = 1;
    DiscriminatorSpec ds;
    ds.base_filters = 4;
    ds.n_layers = 2;
    FusionSpec fs;
    fs.base_filters = 4;
    fs.n_down = 2;
    ModelBundle bundle = build_bundle(gs, ds, fs, {}, 17);

    SctBundle a = generate_sct(pc, bundle, Region::brain, 16);
    CHECK(a.ch1.shape == pc.cbct_corr.shape);
    for (float v : a.ch1.data) {
        REQUIRE(v >= -1024.0f);
        REQUIRE(v <= 3000.0f);
    }
    const ChannelWindows ctw = make_channel_windows(Region::brain, 0.0);
    for (float v : a.ch2.data) {
        REQUIRE(v >= static_cast<float>(ctw.soft.lo));
        REQUIRE(v <= static_cast<float>(ctw.soft.hi));
    }
    for (float v : a.ch3.data) {
        REQUIRE(v >= 600.0f);
        REQUIRE(v <= 3000.0f);
    }

    SctBundle b = generate_sct(pc, bundle, Region::brain, 16);
    CHECK(a.ch1.data == b.ch1.data);
    CHECK(a.fused.data == b.fused.data);

    Volume3D rec = recombine_channels(a, Region::brain);
    CHECK(rec.shape == a.ch1.shape);
    for (float v : rec.data) {
        REQUIRE(v >= -1024.0f);
        REQUIRE(v <= 3000.0f);
    }

    // odd slice size cannot pass the generator's downsampling stages
    CHECK_THROWS_AS(generate_sct(pc, bundle, Region::brain, 15), ValidationError);
}

TEST_CASE("recombination base selection") {
    CHECK(parse_recombine_base("auto") == RecombineBase::automatic);
    CHECK(parse_recombine_base("ch1") == RecombineBase::ch1);
    CHECK(parse_recombine_base("fused") == RecombineBase::fused);
    CHECK_THROWS_AS(parse_recombine_base("ch2"), ValidationError);

    // saturated ch2/ch3 leave the base untouched, exposing which one is used
    SctBundle b = flat_bundle(Region::brain, 4, 0.0f, -150.0f, 600.0f);
    for (float& v : b.ch1.data) v = 500.0f;
    for (float& v : b.fused.data) v = 900.0f;
    CHECK(recombine_channels(b, Region::brain).data[0] == 900.0f);    // auto: fused
    CHECK(recombine_channels(b, Region::pelvis).data[0] == 500.0f);   // auto: ch1
    CHECK(recombine_channels(b, Region::brain, RecombineBase::ch1).data[0] == 500.0f);
    CHECK(recombine_channels(b, Region::pelvis, RecombineBase::fused).data[0] == 900.0f);
}

TEST_CASE("soft channel inserts only when unsaturated") {
    const ChannelWindows w = make_channel_windows(Region::brain, 0.0);
    const float lo = static_cast<float>(w.soft.lo), hi = static_cast<float>(w.soft.hi);
    const float band = static_cast<float>(0.005 * w.soft.width());

    SUBCASE("midpoint inserts the soft HU") {
        SctBundle b = flat_bundle(Region::brain, 4, 700.0f, 0.0f, 600.0f);
        Volume3D rec = recombine_channels(b, Region::brain);
        for (float v : rec.data) CHECK(v == 0.0f);
    }
    SUBCASE("both saturation ends skip the insert") {
        for (float sat : {lo, hi}) {
            SctBundle b = flat_bundle(Region::brain, 4, 700.0f, sat, 600.0f);
            Volume3D rec = recombine_channels(b, Region::brain);
            for (size_t i = 0; i < rec.data.size(); ++i)
                CHECK(rec.data[i] == b.fused.data[i]);
        }
    }
    SUBCASE("values just inside the guard band still skip") {
        SctBundle just_lo = flat_bundle(Region::brain, 4, 700.0f, lo + 0.5f * band, 600.0f);
        CHECK(recombine_channels(just_lo, Region::brain).data[0] == 700.0f);
        SctBundle just_hi = flat_bundle(Region::brain, 4, 700.0f, hi - 0.5f * band, 600.0f);
        CHECK(recombine_channels(just_hi, Region::brain).data[0] == 700.0f);
        // past the band the insert happens
        SctBundle past = flat_bundle(Region::brain, 4, 700.0f, lo + 2.0f * band, 600.0f);
        CHECK(recombine_channels(past, Region::brain).data[0] == lo + 2.0f * band);
    }
}

TEST_CASE("dense channel overrides everything once active") {
    SctBundle b = flat_bundle(Region::brain, 4, -500.0f, 0.0f, 1800.0f);
    Volume3D rec = recombine_channels(b, Region::brain);
    for (float v : rec.data) CHECK(v == 1800.0f);

    // inactive dense floor leaves the soft insert in place
    SctBundle floor = flat_bundle(Region::brain, 4, -500.0f, 30.0f, 600.0f);
    CHECK(recombine_channels(floor, Region::brain).data[0] == 30.0f);

    // a metal-strength dense value keeps the output in the bone range
    SctBundle metal = flat_bundle(Region::brain, 4, -800.0f, -150.0f, 2900.0f);
    Volume3D out = recombine_channels(metal, Region::brain);
    for (float v : out.data) CHECK(v >= 600.0f);
}

TEST_CASE("recombination clamps and is idempotent") {
    Rng rng(77, 0);
    SctBundle b;
    b.windows = make_channel_windows(Region::brain, 0.0);
    auto rand_vol = [&](float lo, float hi) {
        Volume3D v(3, 8, 8);
        for (float& x : v.data) x = static_cast<float>(rng.uniform(lo, hi));
        return v;
    };
    b.ch1 = rand_vol(-1200.0f, 3200.0f);  // deliberately out of range
    b.fused = rand_vol(-1200.0f, 3200.0f);
    b.ch2 = rand_vol(-150.0f, 150.0f);
    b.ch3 = rand_vol(600.0f, 3000.0f);

    Volume3D once = recombine_channels(b, Region::brain);
    for (float v : once.data) {
        REQUIRE(v >= -1024.0f);
        REQUIRE(v <= 3000.0f);
    }

    SctBundle again = b;
    again.fused = once;
    again.ch1 = once;
    Volume3D twice = recombine_channels(again, Region::brain);
    CHECK(twice.data == once.data);

    SUBCASE("grid mismatch is rejected") {
        SctBundle bad = b;
        bad.ch3 = Volume3D(3, 8, 9);
        CHECK_THROWS_AS(recombine_channels(bad, Region::brain), ValidationError);
    }
}

TEST_CASE("saturated channels reproduce the base bitwise") {
    Rng rng(78, 0);
    SctBundle b;
    b.windows = make_channel_windows(Region::pelvis, 0.0);
    b.fused = Volume3D(2, 6, 6);
    b.ch1 = Volume3D(2, 6, 6);
    for (size_t i = 0; i < b.ch1.data.size(); ++i) {
        b.ch1.data[i] = static_cast<float>(rng.uniform(-1024.0, 3000.0));
        b.fused.data[i] = static_cast<float>(rng.uniform(-1024.0, 3000.0));
    }
    b.ch2 = Volume3D(2, 6, 6);
    b.ch3 = Volume3D(2, 6, 6);
    for (size_t i = 0; i < b.ch2.data.size(); ++i) {
        b.ch2.data[i] = (i % 2 == 0) ? -150.0f : 150.0f;
        b.ch3.data[i] = 600.0f;
    }
    Volume3D rec = recombine_channels(b, Region::pelvis);
    CHECK(rec.data == b.ch1.data);
}

TEST_CASE("final mask turns the outside to air") {
    Volume3D v(2, 4, 4);
    for (size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<float>(i);
    Volume3D mask(2, 4, 4);
    for (size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = (i % 3 == 0) ? 0.0f : 1.0f;

    Volume3D out = apply_final_mask(v, mask);
    for (size_t i = 0; i < out.data.size(); ++i) {
        if (i % 3 == 0)
            CHECK(out.data[i] == -1024.0f);
        else
            CHECK(out.data[i] == v.data[i]);
    }

    Volume3D wrong(2, 4, 5);
    CHECK_THROWS_AS(apply_final_mask(v, wrong), ValidationError);
}
