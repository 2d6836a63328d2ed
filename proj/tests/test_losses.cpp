#include <catch2/catch_amalgamated.hpp>

#include "dart3d/losses.hpp"
#include "dart3d/synth.hpp"
#include "test_util.hpp"

using namespace dart3d;
using nn::Tensor;
using nn::Var;

TEST_CASE("focal heatmap loss: closed forms and gradient") {
    SECTION("perfect prediction limit") {
        Tensor target({1, 4, 4});
        target.at(0, 1, 2) = 1.0;
        Tensor pred({1, 4, 4}, 1e-9);
        pred.at(0, 1, 2) = 1.0 - 1e-9;
        double v = losses::focal_heatmap_loss(nn::constant(pred), target)->value[0];
        CHECK(v < 1e-6);
        CHECK(v >= 0.0);
    }

    SECTION("single positive at 0.5 gives -(1-0.5)^2 log 0.5") {
        Tensor target({1, 3, 3});
        target.at(0, 1, 1) = 1.0;
        Tensor pred({1, 3, 3}, 0.0);
        pred.at(0, 1, 1) = 0.5;
        double v = losses::focal_heatmap_loss(nn::constant(pred), target)->value[0];
        CHECK_THAT(v, Catch::Matchers::WithinAbs(0.17328679513998632, 1e-9));
    }

    SECTION("gradient matches finite differences") {
        std::mt19937_64 rng(3);
        Tensor target({1, 5, 6});
        target.at(0, 2, 3) = 1.0;
        target.at(0, 4, 1) = 1.0;
        target.at(0, 2, 2) = 0.6;  // gaussian tail
        Tensor pred = nn::uniform_tensor({1, 5, 6}, 0.05, 0.95, rng);
        pred.at(0, 2, 3) = 0.7;

        Var pv = nn::leaf(pred);
        nn::backward(losses::focal_heatmap_loss(pv, target));
        auto f = [&](const Tensor& t) {
            return losses::focal_heatmap_loss(nn::constant(t), target)->value[0];
        };
        CHECK(testutil::fd_check(f, pred, pv->grad, 20, rng) < 1e-4);
    }
}

TEST_CASE("giou loss: hand geometry") {
    SECTION("identical boxes give zero") {
        CHECK_THAT(losses::giou_loss_value({0, 0, 2, 2}, {0, 0, 2, 2}),
                   Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
    SECTION("offset squares: IoU 1/7, enclosing 9") {
        // GIoU = 1/7 - 2/9, loss = 1 - GIoU
        double expect = 1.0 - (1.0 / 7.0 - 2.0 / 9.0);
        CHECK_THAT(losses::giou_loss_value({0, 0, 2, 2}, {1, 1, 3, 3}),
                   Catch::Matchers::WithinAbs(expect, 1e-12));
        CHECK_THAT(losses::giou_loss_value({0, 0, 2, 2}, {1, 1, 3, 3}),
                   Catch::Matchers::WithinAbs(1.07937, 1e-5));
    }
    SECTION("far-separated unit boxes approach 2") {
        double v = losses::giou_loss_value({0, 0, 1, 1}, {2000, 0, 2001, 1});
        CHECK(v > 1.995);
        CHECK(v <= 2.0);
    }
    SECTION("degenerate prediction treated as a point") {
        double v = losses::giou_loss_value({1, 1, 1, 1}, {0, 0, 2, 2});
        CHECK(v >= 1.0 - 1e-12);  // zero intersection term: loss = 1 + (C-U)/C
        CHECK(v <= 2.0);
    }
    SECTION("gradient matches finite differences") {
        std::mt19937_64 rng(5);
        Tensor gt({4, 4});
        Tensor pred({4, 4});
        for (int i = 0; i < 4; ++i) {
            double l = i, t = 2 * i;
            gt.at(i, 0) = l; gt.at(i, 1) = t; gt.at(i, 2) = l + 3; gt.at(i, 3) = t + 2;
            pred.at(i, 0) = l + 0.4; pred.at(i, 1) = t - 0.3;
            pred.at(i, 2) = l + 3.5; pred.at(i, 3) = t + 1.8;
        }
        Var pv = nn::leaf(pred);
        nn::backward(nn::mean_all(losses::giou_loss(pv, gt)));
        auto f = [&](const Tensor& t) {
            return nn::mean_all(losses::giou_loss(nn::constant(t), gt))->value[0];
        };
        CHECK(testutil::fd_check(f, pred, pv->grad, 16, rng) < 1e-4);
    }
}

TEST_CASE("multi-bin orientation loss") {
    const int K = 12;

    SECTION("confident correct bin at the bin center drives loss to zero") {
        double alpha = detector::bin_center(4, K);
        Tensor logits({1, K});
        logits.at(0, 4) = 60.0;
        Tensor res({1, K});
        double v = losses::multibin_orientation_loss(nn::constant(logits), nn::constant(res),
                                                     alpha, K)->value[0];
        CHECK(v < 1e-9);
        CHECK(v >= 0.0);
    }
    SECTION("uniform logits give log 12") {
        Tensor logits({1, K});
        Tensor res({1, K});
        double alpha = detector::bin_center(7, K);
        double v = losses::multibin_orientation_loss(nn::constant(logits), nn::constant(res),
                                                     alpha, K)->value[0];
        CHECK_THAT(v, Catch::Matchers::WithinAbs(std::log(12.0), 1e-12));
    }
    SECTION("encode/decode round-trips 1000 random angles") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> U(-kitti::kPi, kitti::kPi);
        for (int i = 0; i < 1000; ++i) {
            double alpha = U(rng);
            auto [bin, res] = detector::encode_orientation(alpha, K);
            REQUIRE(bin >= 0);
            REQUIRE(bin < K);
            // residual inside half a bin width
            REQUIRE(std::fabs(res) <= kitti::kPi / K + 1e-12);
            REQUIRE_THAT(detector::decode_orientation(bin, res, K),
                         Catch::Matchers::WithinAbs(alpha, 1e-9));
        }
    }
    SECTION("alpha outside [-pi,pi) is wrapped, not rejected") {
        auto [bin1, res1] = detector::encode_orientation(3 * kitti::kPi / 2, K);
        auto [bin2, res2] = detector::encode_orientation(-kitti::kPi / 2, K);
        CHECK(bin1 == bin2);
        CHECK_THAT(res1, Catch::Matchers::WithinAbs(res2, 1e-12));
    }
    SECTION("gradient matches finite differences") {
        std::mt19937_64 rng(11);
        Tensor logits = nn::uniform_tensor({5, K}, -1, 1, rng);
        Tensor res = nn::uniform_tensor({5, K}, -0.3, 0.3, rng);
        std::vector<int> bins = {0, 3, 7, 11, 5};
        Tensor target_res = nn::uniform_tensor({5}, -0.2, 0.2, rng);

        Var lv = nn::leaf(logits), rv = nn::leaf(res);
        nn::backward(nn::mean_all(
            losses::multibin_orientation_loss(lv, rv, bins, target_res)));
        auto fl = [&](const Tensor& t) {
            return nn::mean_all(losses::multibin_orientation_loss(nn::constant(t),
                                                                  nn::constant(res), bins,
                                                                  target_res))->value[0];
        };
        auto fr = [&](const Tensor& t) {
            return nn::mean_all(losses::multibin_orientation_loss(nn::constant(logits),
                                                                  nn::constant(t), bins,
                                                                  target_res))->value[0];
        };
        CHECK(testutil::fd_check(fl, logits, lv->grad, 16, rng) < 1e-4);
        CHECK(testutil::fd_check(fr, res, rv->grad, 16, rng) < 1e-4);
    }
}

TEST_CASE("Laplace depth loss") {
    SECTION("zero error at unit sigma gives zero") {
        CHECK_THAT(losses::depth_laplace_loss_value(12.0, 0.0, 12.0),
                   Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
    SECTION("unit error at sigma sqrt(2) gives 1 + log sqrt(2)") {
        double v = losses::depth_laplace_loss_value(13.0, 0.5 * std::log(2.0), 12.0);
        CHECK_THAT(v, Catch::Matchers::WithinAbs(1.0 + std::log(std::sqrt(2.0)), 1e-12));
        CHECK_THAT(v, Catch::Matchers::WithinAbs(1.34657, 1e-5));
    }
    SECTION("grid search confirms the stationary sigma = sqrt(2)*error") {
        for (double e : {0.3, 1.0, 2.5}) {
            double best_sigma = -1, best_v = 1e300;
            for (double s = 0.01; s < 10.0; s += 0.001) {
                double v = losses::depth_laplace_loss_value(e, std::log(s), 0.0);
                if (v < best_v) {
                    best_v = v;
                    best_sigma = s;
                }
            }
            CHECK_THAT(best_sigma, Catch::Matchers::WithinAbs(std::sqrt(2.0) * e, 2e-3));
            CHECK_THAT(best_v, Catch::Matchers::WithinAbs(1.0 + std::log(std::sqrt(2.0) * e), 1e-5));
        }
    }
    SECTION("gradient matches finite differences") {
        std::mt19937_64 rng(13);
        Tensor mean = nn::uniform_tensor({6}, 8, 16, rng);
        Tensor ls = nn::uniform_tensor({6}, -0.5, 0.5, rng);
        Tensor gt = nn::uniform_tensor({6}, 8, 16, rng);
        Var mv = nn::leaf(mean), sv = nn::leaf(ls);
        nn::backward(nn::mean_all(losses::depth_laplace_loss(mv, sv, gt)));
        auto fm = [&](const Tensor& t) {
            return nn::mean_all(losses::depth_laplace_loss(nn::constant(t), nn::constant(ls), gt))
                ->value[0];
        };
        auto fs = [&](const Tensor& t) {
            return nn::mean_all(losses::depth_laplace_loss(nn::constant(mean), nn::constant(t), gt))
                ->value[0];
        };
        CHECK(testutil::fd_check(fm, mean, mv->grad, 12, rng) < 1e-4);
        CHECK(testutil::fd_check(fs, ls, sv->grad, 12, rng) < 1e-4);
    }
}

namespace {

/// idealized outputs whose decode reproduces the targets exactly
detector::DetectorOutputs ideal_outputs(const detector::TrainTargets& t, int num_bins) {
    detector::DetectorOutputs out;
    int n = t.num_objects();
    Tensor hm({1, t.fh, t.fw}, 1e-9);
    Tensor off2d({2, t.fh, t.fw}), size2d({2, t.fh, t.fw});
    for (int i = 0; i < n; ++i) {
        auto [cy, cx] = t.cells[i];
        hm.at(0, cy, cx) = 1.0 - 1e-9;
        off2d.at(0, cy, cx) = t.off2d.at(i, 0);
        off2d.at(1, cy, cx) = t.off2d.at(i, 1);
        size2d.at(0, cy, cx) = t.size2d.at(i, 0);
        size2d.at(1, cy, cx) = t.size2d.at(i, 1);
    }
    out.heatmap = nn::constant(hm);
    out.offset2d = nn::constant(off2d);
    out.size2d = nn::constant(size2d);
    out.rois = t.rois;
    out.roi_cells = t.cells;
    if (n > 0) {
        Tensor logits({n, num_bins}), residual({n, num_bins});
        for (int i = 0; i < n; ++i) {
            logits.at(i, t.bin_idx[i]) = 40.0;
            residual.at(i, t.bin_idx[i]) = t.bin_residual[i];
        }
        out.off3d = nn::constant(t.off3d);
        out.size3d = nn::constant(t.size3d);
        out.orient_logits = nn::constant(logits);
        out.orient_residual = nn::constant(residual);
        out.depth_mean = nn::constant(t.depth);
        out.depth_log_sigma = nn::constant(Tensor({n}));
    }
    return out;
}

}  // namespace

TEST_CASE("composite loss: perfect predictions zero the object terms") {
    synth::SceneConfig scfg;
    detector::ModelConfig mcfg;
    auto frame = synth::synth_scene(scfg, 77);
    auto targets = detector::build_targets(frame, mcfg);
    REQUIRE(targets.num_objects() > 0);

    auto out = ideal_outputs(targets, mcfg.num_bins);
    auto L = losses::composite_detection_loss(out, targets);
    CHECK_THAT(L.off2d_l1->value[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(L.giou2d->value[0], Catch::Matchers::WithinAbs(0.0, 1e-9));
    CHECK_THAT(L.off3d_l1->value[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(L.size3d_l1->value[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(L.depth->value[0], Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK(L.orient->value[0] < 1e-9);
    CHECK(L.heatmap->value[0] < 1e-6);
}

TEST_CASE("composite loss: total equals the sum of its parts") {
    synth::SceneConfig scfg;
    detector::ModelConfig mcfg;
    std::mt19937_64 rng(21);
    for (uint64_t seed : {5ull, 6ull, 7ull}) {
        auto frame = synth::synth_scene(scfg, seed);
        auto targets = detector::build_targets(frame, mcfg);
        auto out = ideal_outputs(targets, mcfg.num_bins);
        int n = targets.num_objects();
        // perturb the ideal outputs so every term is active
        auto jitter = [&](const nn::Var& v, double amp) {
            Tensor t = v->value;
            std::uniform_real_distribution<double> U(-amp, amp);
            for (auto& x : t.data) x += U(rng);
            return nn::constant(t);
        };
        out.offset2d = jitter(out.offset2d, 0.2);
        out.size2d = jitter(out.size2d, 0.5);
        if (n > 0) {
            out.off3d = jitter(out.off3d, 0.3);
            out.size3d = jitter(out.size3d, 0.2);
            out.orient_logits = jitter(out.orient_logits, 2.0);
            out.orient_residual = jitter(out.orient_residual, 0.1);
            out.depth_mean = jitter(out.depth_mean, 1.0);
            out.depth_log_sigma = jitter(out.depth_log_sigma, 0.4);
        }
        auto L = losses::composite_detection_loss(out, targets);

        double l2d = L.heatmap->value[0] + L.off2d_l1->value[0] + L.giou2d->value[0];
        double l3d = L.off3d_l1->value[0] + L.size3d_l1->value[0] + L.orient->value[0];
        CHECK_THAT(L.l2d->value[0], Catch::Matchers::WithinAbs(l2d, 1e-12));
        CHECK_THAT(L.l3d->value[0], Catch::Matchers::WithinAbs(l3d, 1e-12));
        CHECK_THAT(L.total->value[0],
                   Catch::Matchers::WithinAbs(l2d + l3d + L.depth->value[0], 1e-12));
        // every term nonnegative except depth
        CHECK(L.heatmap->value[0] >= 0);
        CHECK(L.off2d_l1->value[0] >= 0);
        CHECK(L.giou2d->value[0] >= 0);
        CHECK(L.off3d_l1->value[0] >= 0);
        CHECK(L.size3d_l1->value[0] >= 0);
        CHECK(L.orient->value[0] >= 0);
    }
}

TEST_CASE("composite loss: zero valid objects leaves only the heatmap term") {
    detector::ModelConfig mcfg;
    kitti::Frame frame;
    frame.image = Tensor({3, 32, 32});
    frame.calib = kitti::CameraCalibration::from_intrinsics(100, 16, 16);
    auto targets = detector::build_targets(frame, mcfg);
    REQUIRE(targets.num_objects() == 0);

    Tensor hm({1, 8, 8}, 0.3);
    detector::DetectorOutputs out;
    out.heatmap = nn::constant(hm);
    out.offset2d = nn::constant(Tensor({2, 8, 8}));
    out.size2d = nn::constant(Tensor({2, 8, 8}));
    auto L = losses::composite_detection_loss(out, targets);
    CHECK(L.total->value[0] == L.heatmap->value[0]);
    CHECK(L.l3d->value[0] == 0.0);
    CHECK(L.depth->value[0] == 0.0);
}
