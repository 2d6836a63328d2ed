#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dart3d/synth.hpp"

using namespace dart3d;
using synth::SceneConfig;

TEST_CASE("synth_scene is deterministic per seed") {
    SceneConfig cfg;
    auto a = synth::synth_scene(cfg, 1234);
    auto b = synth::synth_scene(cfg, 1234);
    REQUIRE(a.image.data == b.image.data);
    REQUIRE(a.labels.size() == b.labels.size());
    CHECK(kitti::serialize_labels(a.labels) == kitti::serialize_labels(b.labels));

    auto c = synth::synth_scene(cfg, 1235);
    CHECK(a.image.data != c.image.data);
}

TEST_CASE("synth_scene rejects degenerate configs") {
    SceneConfig cfg;
    cfg.width = 0;
    CHECK_THROWS_AS(synth::synth_scene(cfg, 1), std::invalid_argument);
}

TEST_CASE("emitted box2d equals the clipped corner projection") {
    SceneConfig cfg;
    for (uint64_t seed = 0; seed < 30; ++seed) {
        auto fr = synth::synth_scene(cfg, seed);
        for (const auto& o : fr.labels) {
            // reconstruct the cuboid from the label and project all 8 corners
            auto corners = kitti::box_corners(o);
            double l = 1e30, t = 1e30, r = -1e30, b = -1e30;
            for (const auto& p : corners) {
                auto px = kitti::project_to_image(p[0], p[1], p[2], fr.calib);
                l = std::min(l, px.u);
                t = std::min(t, px.v);
                r = std::max(r, px.u);
                b = std::max(b, px.v);
            }
            l = std::clamp(l, 0.0, double(cfg.width));
            t = std::clamp(t, 0.0, double(cfg.height));
            r = std::clamp(r, 0.0, double(cfg.width));
            b = std::clamp(b, 0.0, double(cfg.height));
            REQUIRE_THAT(o.box2d[0], Catch::Matchers::WithinAbs(l, 1e-9));
            REQUIRE_THAT(o.box2d[1], Catch::Matchers::WithinAbs(t, 1e-9));
            REQUIRE_THAT(o.box2d[2], Catch::Matchers::WithinAbs(r, 1e-9));
            REQUIRE_THAT(o.box2d[3], Catch::Matchers::WithinAbs(b, 1e-9));
        }
    }
}

TEST_CASE("perspective: farther objects project smaller") {
    SceneConfig cfg;
    auto calib = cfg.calib();
    kitti::ObjectLabel o;
    o.class_name = "Car";
    o.dims[0] = 1.52; o.dims[1] = 1.63; o.dims[2] = 3.88;
    o.location[0] = 0.5;
    o.location[1] = cfg.cam_height;
    o.rotation_y = 0.3;
    double prev_height = 1e30;
    for (double z = 6; z < 20; z += 2) {
        o.location[2] = z;
        auto corners = kitti::box_corners(o);
        double t = 1e30, b = -1e30;
        for (const auto& p : corners) {
            auto px = kitti::project_to_image(p[0], p[1], p[2], calib);
            t = std::min(t, px.v);
            b = std::max(b, px.v);
        }
        CHECK(b - t < prev_height);
        prev_height = b - t;
    }
}

TEST_CASE("synth frames populate all difficulty buckets across a dataset") {
    SceneConfig cfg;
    int counts[4] = {0, 0, 0, 0};
    auto frames = synth::synth_dataset(cfg, 80, 99, "t");
    for (const auto& fr : frames) {
        CHECK(fr.image.max_abs() <= 255.0);
        for (const auto& o : fr.labels) {
            if (o.is_dontcare()) continue;
            counts[static_cast<int>(kitti::assign_difficulty(o))]++;
            // labels stay inside the image
            CHECK(o.box2d[0] >= 0);
            CHECK(o.box2d[1] >= 0);
            CHECK(o.box2d[2] <= cfg.width);
            CHECK(o.box2d[3] <= cfg.height);
        }
    }
    INFO("easy=" << counts[0] << " mod=" << counts[1] << " hard=" << counts[2]
                 << " ignored=" << counts[3]);
    CHECK(counts[0] > 10);
    CHECK(counts[1] > 10);
    CHECK(counts[2] > 10);
}

TEST_CASE("dataset directory round-trips through ppm + manifest") {
    namespace fs = std::filesystem;
    SceneConfig cfg;
    cfg.width = 192;
    cfg.height = 64;
    auto frames = synth::synth_dataset(cfg, 4, 7, "rt");

    auto dir = fs::temp_directory_path() / "dart3d_synth_rt";
    fs::remove_all(dir);
    synth::write_dataset(dir, frames);
    auto loaded = synth::load_dataset(dir);
    REQUIRE(loaded.size() == frames.size());
    for (size_t i = 0; i < frames.size(); ++i) {
        CHECK(loaded[i].frame_id == frames[i].frame_id);
        REQUIRE(loaded[i].image.shape == frames[i].image.shape);
        // rendered values are integral, so 8-bit storage is exact
        CHECK(loaded[i].image.data == frames[i].image.data);
        CHECK(kitti::serialize_labels(loaded[i].labels) ==
              kitti::serialize_labels(kitti::parse_label_file(
                  kitti::serialize_labels(frames[i].labels))));
    }
    fs::remove_all(dir);
}
