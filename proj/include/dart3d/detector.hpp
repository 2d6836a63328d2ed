#pragma once

#include <fstream>
#include <map>

#include "dart3d/autodiff.hpp"
#include "dart3d/kitti.hpp"

namespace dart3d::detector {

constexpr int kStride = 4;

struct ModelConfig {
    int stem_channels = 16;
    int mid_channels = 32;
    int feat_channels = 48;
    int head_channels = 32;
    int fc_dim = 128;
    int num_bins = 12;
    int roi_size = 7;
    int top_k = 8;
    double score_threshold = 0.25;
    double dims_prior[3] = {1.52, 1.63, 3.88};  // h, w, l (car mean)
    double norm_scale = 128.0;

    std::string canonical_string() const {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "arch=v1;stem=%d;mid=%d;feat=%d;head=%d;fc=%d;bins=%d;roi=%d;topk=%d;"
                      "thr=%.6g;prior=%.4g,%.4g,%.4g;norm=%.6g",
                      stem_channels, mid_channels, feat_channels, head_channels, fc_dim, num_bins,
                      roi_size, top_k, score_threshold, dims_prior[0], dims_prior[1],
                      dims_prior[2], norm_scale);
        return buf;
    }
};

struct ParamPair {
    nn::Tensor w, b;
};

struct DetectorWeights {
    ModelConfig cfg;
    double input_mean[3] = {127.0, 127.0, 127.0};
    ParamPair stem, c2, c3, c4;          // backbone convs (stride 2,2,1,1)
    ParamPair trunk2d;                   // shared 3x3 before the dense heads
    ParamPair hm, off2d, size2d;         // 1x1 heads
    ParamPair fc1;                       // roi mlp
    ParamPair off3d, size3d, orient, depth;  // linear heads

    std::vector<std::pair<std::string, nn::Tensor*>> params() {
        return {{"stem.w", &stem.w},       {"stem.b", &stem.b},
                {"c2.w", &c2.w},           {"c2.b", &c2.b},
                {"c3.w", &c3.w},           {"c3.b", &c3.b},
                {"c4.w", &c4.w},           {"c4.b", &c4.b},
                {"trunk2d.w", &trunk2d.w}, {"trunk2d.b", &trunk2d.b},
                {"hm.w", &hm.w},           {"hm.b", &hm.b},
                {"off2d.w", &off2d.w},     {"off2d.b", &off2d.b},
                {"size2d.w", &size2d.w},   {"size2d.b", &size2d.b},
                {"fc1.w", &fc1.w},         {"fc1.b", &fc1.b},
                {"off3d.w", &off3d.w},     {"off3d.b", &off3d.b},
                {"size3d.w", &size3d.w},   {"size3d.b", &size3d.b},
                {"orient.w", &orient.w},   {"orient.b", &orient.b},
                {"depth.w", &depth.w},     {"depth.b", &depth.b}};
    }
};

namespace detail {

inline nn::Tensor he_conv(int cout, int cin, int k, std::mt19937_64& rng) {
    double std = std::sqrt(2.0 / (cin * k * k));
    return nn::normal_tensor({cout, cin, k, k}, 0.0, std, rng);
}

inline nn::Tensor he_linear(int m, int k, std::mt19937_64& rng) {
    double std = std::sqrt(2.0 / k);
    return nn::normal_tensor({m, k}, 0.0, std, rng);
}

}  // namespace detail

inline DetectorWeights init_detector(const ModelConfig& cfg, uint64_t seed) {
    std::mt19937_64 rng(nn::mix_seed(seed, 0xde7ull));
    DetectorWeights w;
    w.cfg = cfg;
    int S = cfg.stem_channels, M = cfg.mid_channels, F = cfg.feat_channels,
        H = cfg.head_channels;
    w.stem = {detail::he_conv(S, 3, 3, rng), nn::Tensor({S})};
    w.c2 = {detail::he_conv(M, S, 3, rng), nn::Tensor({M})};
    w.c3 = {detail::he_conv(F, M, 3, rng), nn::Tensor({F})};
    w.c4 = {detail::he_conv(F, F, 3, rng), nn::Tensor({F})};
    w.trunk2d = {detail::he_conv(H, F, 3, rng), nn::Tensor({H})};
    w.hm = {detail::he_conv(1, H, 1, rng), nn::Tensor({1}, -2.19)};  // prior ~0.1
    w.off2d = {detail::he_conv(2, H, 1, rng), nn::Tensor({2})};
    w.size2d = {detail::he_conv(2, H, 1, rng), nn::Tensor({2})};
    int fc_in = F * cfg.roi_size * cfg.roi_size;
    w.fc1 = {detail::he_linear(cfg.fc_dim, fc_in, rng), nn::Tensor({cfg.fc_dim})};
    w.off3d = {detail::he_linear(2, cfg.fc_dim, rng), nn::Tensor({2})};
    w.size3d = {detail::he_linear(3, cfg.fc_dim, rng), nn::Tensor({3})};
    w.orient = {detail::he_linear(2 * cfg.num_bins, cfg.fc_dim, rng),
                nn::Tensor({2 * cfg.num_bins})};
    w.depth = {detail::he_linear(2, cfg.fc_dim, rng), nn::Tensor({2})};
    // depth bias: start near the middle of the working range, log-sigma at 0
    w.depth.b[0] = 10.0;
    return w;
}

struct VarPair {
    nn::Var w, b;
};

struct DetectorVars {
    ModelConfig cfg;
    double input_mean[3];
    VarPair stem, c2, c3, c4, trunk2d, hm, off2d, size2d, fc1, off3d, size3d, orient, depth;

    std::vector<nn::Var> ordered() const {
        return {stem.w,    stem.b,    c2.w,     c2.b,     c3.w,     c3.b,     c4.w,
                c4.b,      trunk2d.w, trunk2d.b, hm.w,    hm.b,     off2d.w,  off2d.b,
                size2d.w,  size2d.b,  fc1.w,    fc1.b,    off3d.w,  off3d.b,  size3d.w,
                size3d.b,  orient.w,  orient.b, depth.w,  depth.b};
    }
};

inline DetectorVars make_vars(const DetectorWeights& w, bool requires_grad) {
    auto L = [requires_grad](const nn::Tensor& t) { return nn::leaf(t, requires_grad); };
    DetectorVars v;
    v.cfg = w.cfg;
    for (int i = 0; i < 3; ++i) v.input_mean[i] = w.input_mean[i];
    v.stem = {L(w.stem.w), L(w.stem.b)};
    v.c2 = {L(w.c2.w), L(w.c2.b)};
    v.c3 = {L(w.c3.w), L(w.c3.b)};
    v.c4 = {L(w.c4.w), L(w.c4.b)};
    v.trunk2d = {L(w.trunk2d.w), L(w.trunk2d.b)};
    v.hm = {L(w.hm.w), L(w.hm.b)};
    v.off2d = {L(w.off2d.w), L(w.off2d.b)};
    v.size2d = {L(w.size2d.w), L(w.size2d.b)};
    v.fc1 = {L(w.fc1.w), L(w.fc1.b)};
    v.off3d = {L(w.off3d.w), L(w.off3d.b)};
    v.size3d = {L(w.size3d.w), L(w.size3d.b)};
    v.orient = {L(w.orient.w), L(w.orient.b)};
    v.depth = {L(w.depth.w), L(w.depth.b)};
    return v;
}

// ---- outputs ----

struct DetectorOutputs {
    nn::Var heatmap;   // [1, H/4, W/4], post-sigmoid
    nn::Var offset2d;  // [2, H/4, W/4]
    nn::Var size2d;    // [2, H/4, W/4]
    // per-RoI heads; null when no rois
    std::vector<nn::RoiRect> rois;             // feature coordinates
    std::vector<std::pair<int, int>> roi_cells;  // anchor cell (y, x) per roi
    nn::Var off3d;           // [N,2]
    nn::Var size3d;          // [N,3]
    nn::Var orient_logits;   // [N,bins]
    nn::Var orient_residual; // [N,bins]
    nn::Var depth_mean;      // [N]
    nn::Var depth_log_sigma; // [N]

    int num_rois() const { return static_cast<int>(rois.size()); }
};

struct Peak {
    int y = 0, x = 0;
    double score = 0;
};

/// 3x3 local maxima above threshold, strongest first, at most k_max
inline std::vector<Peak> find_peaks(const nn::Tensor& hm, double threshold, int k_max) {
    int h = hm.dim(1), w = hm.dim(2);
    std::vector<Peak> peaks;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = hm.at(0, y, x);
            if (!(v > threshold)) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dy && !dx) continue;
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    if (hm.at(0, yy, xx) > v) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) peaks.push_back({y, x, v});
        }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        if (a.score != b.score) return a.score > b.score;
        return std::pair(a.y, a.x) < std::pair(b.y, b.x);
    });
    if (static_cast<int>(peaks.size()) > k_max) peaks.resize(static_cast<size_t>(k_max));
    return peaks;
}

/// Forward pass. If rois is null, RoIs are derived from the top-k heatmap
/// peaks using the predicted 2D boxes. Differentiable in image and weights.
inline DetectorOutputs forward(const nn::Var& image, const DetectorVars& v,
                               const std::vector<nn::RoiRect>* rois = nullptr,
                               const std::vector<std::pair<int, int>>* cells = nullptr) {
    using namespace nn;
    const auto& cfg = v.cfg;
    if (image->value.ndim() != 3 || image->value.dim(0) != 3)
        throw std::invalid_argument("forward: image must be [3,H,W]");
    int H = image->value.dim(1), W = image->value.dim(2);
    if (H % kStride || W % kStride)
        throw std::invalid_argument("forward: image dims must be divisible by 4");

    Var x = channel_affine(image, {v.input_mean[0], v.input_mean[1], v.input_mean[2]},
                           {1.0 / cfg.norm_scale, 1.0 / cfg.norm_scale, 1.0 / cfg.norm_scale});
    Var f = relu_(conv2d(x, v.stem.w, v.stem.b, 2, 1));
    f = relu_(conv2d(f, v.c2.w, v.c2.b, 2, 1));
    f = relu_(conv2d(f, v.c3.w, v.c3.b, 1, 1));
    f = relu_(conv2d(f, v.c4.w, v.c4.b, 1, 1));
    Var t2 = relu_(conv2d(f, v.trunk2d.w, v.trunk2d.b, 1, 1));

    DetectorOutputs out;
    out.heatmap = sigmoid_(conv2d(t2, v.hm.w, v.hm.b, 1, 0));
    out.offset2d = conv2d(t2, v.off2d.w, v.off2d.b, 1, 0);
    out.size2d = conv2d(t2, v.size2d.w, v.size2d.b, 1, 0);

    if (rois) {
        out.rois = *rois;
        if (cells) out.roi_cells = *cells;
    } else {
        auto peaks = find_peaks(out.heatmap->value, cfg.score_threshold, cfg.top_k);
        for (const auto& p : peaks) {
            double cxf = p.x + out.offset2d->value.at(0, p.y, p.x);
            double cyf = p.y + out.offset2d->value.at(1, p.y, p.x);
            double bw = std::max(1.0, out.size2d->value.at(0, p.y, p.x));
            double bh = std::max(1.0, out.size2d->value.at(1, p.y, p.x));
            out.rois.push_back({cxf - bw / 2, cyf - bh / 2, cxf + bw / 2, cyf + bh / 2});
            out.roi_cells.emplace_back(p.y, p.x);
        }
    }

    if (!out.rois.empty()) {
        int n = out.num_rois();
        Var ra = roi_align(f, out.rois, cfg.roi_size);
        Var flat = reshape(ra, {n, cfg.feat_channels * cfg.roi_size * cfg.roi_size});
        Var h1 = relu_(linear(flat, v.fc1.w, v.fc1.b));
        out.off3d = linear(h1, v.off3d.w, v.off3d.b);
        out.size3d = linear(h1, v.size3d.w, v.size3d.b);
        Var ori = linear(h1, v.orient.w, v.orient.b);
        out.orient_logits = slice_cols(ori, 0, cfg.num_bins);
        out.orient_residual = slice_cols(ori, cfg.num_bins, 2 * cfg.num_bins);
        Var dp = linear(h1, v.depth.w, v.depth.b);
        out.depth_mean = slice_col(dp, 0);
        out.depth_log_sigma = slice_col(dp, 1);
    }
    return out;
}

// ---- orientation encoding ----

inline double bin_center(int i, int num_bins) {
    return -kitti::kPi + 2.0 * kitti::kPi * i / num_bins;
}

/// nearest bin (ties toward the lower index) and in-bin residual
inline std::pair<int, double> encode_orientation(double alpha, int num_bins) {
    alpha = kitti::wrap_angle(alpha);
    int best = 0;
    double best_dist = 1e30;
    for (int i = 0; i < num_bins; ++i) {
        double d = std::fabs(kitti::wrap_angle(alpha - bin_center(i, num_bins)));
        if (d < best_dist - 1e-15) {
            best_dist = d;
            best = i;
        }
    }
    return {best, kitti::wrap_angle(alpha - bin_center(best, num_bins))};
}

inline double decode_orientation(int bin, double residual, int num_bins) {
    return kitti::wrap_angle(bin_center(bin, num_bins) + residual);
}

// ---- training targets ----

struct TrainTargets {
    int fh = 0, fw = 0;
    nn::Tensor heatmap;         // [1,fh,fw]
    nn::Tensor heatmap_weight;  // [1,fh,fw]
    std::vector<std::pair<int, int>> cells;
    nn::Tensor off2d;      // [N,2]
    nn::Tensor size2d;     // [N,2]
    nn::Tensor box2d_feat; // [N,4]
    nn::Tensor off3d;      // [N,2]
    nn::Tensor size3d;     // [N,3]
    std::vector<int> bin_idx;
    nn::Tensor bin_residual;  // [N]
    nn::Tensor depth;         // [N]
    std::vector<nn::RoiRect> rois;
    std::vector<kitti::ObjectLabel> objects;

    int num_objects() const { return static_cast<int>(cells.size()); }
};

namespace detail {

// CenterNet gaussian radius for a target overlap of 0.7
inline double gaussian_radius(double h, double w, double min_overlap = 0.7) {
    double a1 = 1, b1 = h + w, c1 = w * h * (1 - min_overlap) / (1 + min_overlap);
    double r1 = (b1 - std::sqrt(std::max(0.0, b1 * b1 - 4 * a1 * c1))) / 2;
    double a2 = 4, b2 = 2 * (h + w), c2 = (1 - min_overlap) * w * h;
    double r2 = (b2 - std::sqrt(std::max(0.0, b2 * b2 - 4 * a2 * c2))) / (2 * a2);
    double a3 = 4 * min_overlap, b3 = -2 * min_overlap * (h + w),
           c3 = (min_overlap - 1) * w * h;
    double r3 = (b3 + std::sqrt(std::max(0.0, b3 * b3 - 4 * a3 * c3))) / (2 * a3);
    return std::min({r1, r2, r3});
}

inline void splat_gaussian(nn::Tensor& hm, int cy, int cx, int radius) {
    double sigma = (2.0 * radius + 1.0) / 6.0;
    int h = hm.dim(1), w = hm.dim(2);
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            int y = cy + dy, x = cx + dx;
            if (y < 0 || y >= h || x < 0 || x >= w) continue;
            double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            hm.at(0, y, x) = std::max(hm.at(0, y, x), g);
        }
}

}  // namespace detail

inline TrainTargets build_targets(const kitti::Frame& frame, const ModelConfig& cfg) {
    TrainTargets t;
    t.fh = frame.height() / kStride;
    t.fw = frame.width() / kStride;
    t.heatmap = nn::Tensor({1, t.fh, t.fw});
    t.heatmap_weight = nn::Tensor({1, t.fh, t.fw}, 1.0);

    struct Enc {
        std::pair<int, int> cell;
        double off2d[2], size2d[2], box[4], off3d[2], size3d[3];
        int bin;
        double residual, depth;
        kitti::ObjectLabel label;
    };
    std::vector<Enc> encs;

    for (const auto& o : frame.labels) {
        if (o.is_dontcare()) {
            // mask heatmap supervision inside DontCare regions
            int x0 = std::max(0, static_cast<int>(o.box2d[0] / kStride));
            int y0 = std::max(0, static_cast<int>(o.box2d[1] / kStride));
            int x1 = std::min(t.fw - 1, static_cast<int>(o.box2d[2] / kStride));
            int y1 = std::min(t.fh - 1, static_cast<int>(o.box2d[3] / kStride));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) t.heatmap_weight.at(0, y, x) = 0.0;
            continue;
        }
        if (o.class_name != "Car") continue;
        if (o.location[2] <= 1.0) continue;
        double cxf = 0.5 * (o.box2d[0] + o.box2d[2]) / kStride;
        double cyf = 0.5 * (o.box2d[1] + o.box2d[3]) / kStride;
        int cx = static_cast<int>(std::floor(cxf));
        int cy = static_cast<int>(std::floor(cyf));
        if (cx < 0 || cx >= t.fw || cy < 0 || cy >= t.fh) continue;
        double wf = (o.box2d[2] - o.box2d[0]) / kStride;
        double hf = (o.box2d[3] - o.box2d[1]) / kStride;
        if (wf <= 0.25 || hf <= 0.25) continue;

        // one object per anchor cell: on collision keep the nearer one
        int collide = -1;
        for (size_t k = 0; k < encs.size(); ++k)
            if (encs[k].cell == std::pair{cy, cx}) collide = static_cast<int>(k);
        if (collide >= 0 && encs[collide].label.location[2] <= o.location[2]) continue;

        Enc e;
        e.cell = {cy, cx};
        e.off2d[0] = cxf - cx;
        e.off2d[1] = cyf - cy;
        e.size2d[0] = wf;
        e.size2d[1] = hf;
        for (int i = 0; i < 4; ++i) e.box[i] = o.box2d[i] / kStride;
        double yc = o.location[1] - o.dims[0] / 2.0;  // cuboid centroid
        auto px = kitti::project_to_image(o.location[0], yc, o.location[2], frame.calib);
        e.off3d[0] = px.u / kStride - cx;
        e.off3d[1] = px.v / kStride - cy;
        for (int i = 0; i < 3; ++i) e.size3d[i] = o.dims[i] - cfg.dims_prior[i];
        auto [bin, res] = encode_orientation(o.alpha, cfg.num_bins);
        e.bin = bin;
        e.residual = res;
        e.depth = o.location[2];
        e.label = o;
        if (collide >= 0)
            encs[static_cast<size_t>(collide)] = e;
        else
            encs.push_back(e);

        int radius = std::max(1, static_cast<int>(detail::gaussian_radius(hf, wf)));
        detail::splat_gaussian(t.heatmap, cy, cx, radius);
    }

    // gaussian peaks stay supervised even inside masked regions
    for (int y = 0; y < t.fh; ++y)
        for (int x = 0; x < t.fw; ++x)
            if (t.heatmap.at(0, y, x) >= 0.999) t.heatmap_weight.at(0, y, x) = 1.0;

    int n = static_cast<int>(encs.size());
    t.off2d = nn::Tensor({n, 2});
    t.size2d = nn::Tensor({n, 2});
    t.box2d_feat = nn::Tensor({n, 4});
    t.off3d = nn::Tensor({n, 2});
    t.size3d = nn::Tensor({n, 3});
    t.bin_residual = nn::Tensor({n});
    t.depth = nn::Tensor({n});
    for (int i = 0; i < n; ++i) {
        const Enc& e = encs[i];
        t.cells.push_back(e.cell);
        for (int j = 0; j < 2; ++j) {
            t.off2d.at(i, j) = e.off2d[j];
            t.size2d.at(i, j) = e.size2d[j];
            t.off3d.at(i, j) = e.off3d[j];
        }
        for (int j = 0; j < 4; ++j) t.box2d_feat.at(i, j) = e.box[j];
        for (int j = 0; j < 3; ++j) t.size3d.at(i, j) = e.size3d[j];
        t.bin_idx.push_back(e.bin);
        t.bin_residual[i] = e.residual;
        t.depth[i] = e.depth;
        t.rois.push_back({e.box[0], e.box[1], e.box[2], e.box[3]});
        t.objects.push_back(e.label);
    }
    return t;
}

// ---- decoding ----

using Detection = kitti::ObjectLabel;  // with score set

inline std::vector<Detection> decode_detections(const DetectorOutputs& out,
                                                const kitti::CameraCalibration& calib,
                                                const ModelConfig& cfg, int k_max,
                                                double threshold) {
    std::vector<Detection> dets;
    if (!out.heatmap || out.num_rois() == 0) return dets;
    int n = out.num_rois();
    for (int i = 0; i < n && static_cast<int>(dets.size()) < k_max; ++i) {
        auto [cy, cx] = out.roi_cells[i];
        double score = out.heatmap->value.at(0, cy, cx);
        if (!(score > threshold)) continue;

        Detection d;
        d.class_name = "Car";
        d.score = score;

        double cxf = cx + out.offset2d->value.at(0, cy, cx);
        double cyf = cy + out.offset2d->value.at(1, cy, cx);
        double bw = std::max(0.0, out.size2d->value.at(0, cy, cx));
        double bh = std::max(0.0, out.size2d->value.at(1, cy, cx));
        d.box2d[0] = (cxf - bw / 2) * kStride;
        d.box2d[1] = (cyf - bh / 2) * kStride;
        d.box2d[2] = (cxf + bw / 2) * kStride;
        d.box2d[3] = (cyf + bh / 2) * kStride;

        for (int j = 0; j < 3; ++j)
            d.dims[j] = std::max(0.01, cfg.dims_prior[j] + out.size3d->value.at(i, j));

        double u3 = (cx + out.off3d->value.at(i, 0)) * kStride;
        double v3 = (cy + out.off3d->value.at(i, 1)) * kStride;
        double z = std::max(0.5, out.depth_mean->value[i]);
        double x3, y3;
        kitti::back_project(u3, v3, z, calib, x3, y3);
        d.location[0] = x3;
        d.location[1] = y3 + d.dims[0] / 2.0;  // centroid back to bottom center
        d.location[2] = z;

        int nb = out.orient_logits->value.dim(1);
        int best_bin = 0;
        double best_logit = -1e300;
        for (int b = 0; b < nb; ++b)
            if (out.orient_logits->value.at(i, b) > best_logit) {
                best_logit = out.orient_logits->value.at(i, b);
                best_bin = b;
            }
        double alpha =
            decode_orientation(best_bin, out.orient_residual->value.at(i, best_bin), nb);
        d.alpha = alpha;
        d.rotation_y = kitti::rotation_y_from_alpha(alpha, x3, z);
        dets.push_back(d);
    }
    return dets;
}

// ---- checkpoint io ----

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

constexpr char kCheckpointMagic[] = "D3CK1";

inline void save_params(std::ofstream& out,
                        const std::vector<std::pair<std::string, const nn::Tensor*>>& params) {
    uint32_t count = static_cast<uint32_t>(params.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [name, t] : params) {
        uint32_t nlen = static_cast<uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&nlen), sizeof(nlen));
        out.write(name.data(), nlen);
        uint32_t nd = static_cast<uint32_t>(t->shape.size());
        out.write(reinterpret_cast<const char*>(&nd), sizeof(nd));
        for (int d : t->shape) {
            int32_t dd = d;
            out.write(reinterpret_cast<const char*>(&dd), sizeof(dd));
        }
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    }
}

inline std::map<std::string, nn::Tensor> load_params(std::ifstream& in) {
    uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    std::map<std::string, nn::Tensor> out;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t nlen = 0;
        in.read(reinterpret_cast<char*>(&nlen), sizeof(nlen));
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        uint32_t nd = 0;
        in.read(reinterpret_cast<char*>(&nd), sizeof(nd));
        std::vector<int> shape(nd);
        for (auto& d : shape) {
            int32_t dd = 0;
            in.read(reinterpret_cast<char*>(&dd), sizeof(dd));
            d = dd;
        }
        nn::Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        out.emplace(std::move(name), std::move(t));
    }
    if (!in) throw std::runtime_error("checkpoint: truncated parameter block");
    return out;
}

/// single-file archive of named arrays guarded by a config fingerprint
inline void save_checkpoint(const std::string& path, const std::string& fingerprint,
                            const std::vector<std::pair<std::string, const nn::Tensor*>>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << kCheckpointMagic << "\n" << fingerprint << "\n";
    save_params(out, params);
}

inline std::map<std::string, nn::Tensor> load_checkpoint(const std::string& path,
                                                         const std::string& expected_fingerprint) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    std::string magic, fp;
    std::getline(in, magic);
    std::getline(in, fp);
    if (magic != kCheckpointMagic) throw std::runtime_error("not a checkpoint file: " + path);
    if (fp != expected_fingerprint)
        throw std::runtime_error("checkpoint fingerprint mismatch: " + path + " has " + fp +
                                 ", expected " + expected_fingerprint);
    return load_params(in);
}

inline std::string read_checkpoint_fingerprint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    std::string magic, fp;
    std::getline(in, magic);
    std::getline(in, fp);
    if (magic != kCheckpointMagic) throw std::runtime_error("not a checkpoint file: " + path);
    return fp;
}

}  // namespace dart3d::detector
