#pragma once

#include "dart3d/detector.hpp"

namespace dart3d::losses {

using nn::Var;

/// CenterNet penalty-reduced focal loss, exponents 2/4, normalized by the
/// positive count. target in [0,1] with 1 exactly at object centers; weight
/// zeroes out unsupervised (DontCare) cells.
inline Var focal_heatmap_loss(const Var& pred, const nn::Tensor& target,
                              const nn::Tensor* weight = nullptr) {
    if (!pred->value.same_shape(target))
        throw std::invalid_argument("focal_heatmap_loss: shape mismatch");
    if (!pred->value.all_finite()) throw std::runtime_error("focal_heatmap_loss: non-finite pred");

    int64_t n = target.numel();
    nn::Tensor w_pos(target.shape), w_neg(target.shape);
    double num_pos = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double wi = weight ? weight->data[static_cast<size_t>(i)] : 1.0;
        if (target[i] >= 1.0) {
            w_pos[i] = wi;
            num_pos += wi;
        } else {
            double q = 1.0 - target[i];
            w_neg[i] = wi * q * q * q * q;
        }
    }
    double norm = std::max(1.0, num_pos);

    Var lp = nn::log_(nn::clamp_(pred, 1e-12, 1.0 - 1e-12));
    Var lq = nn::log_(nn::affine(nn::clamp_(pred, 1e-12, 1.0 - 1e-12), -1.0, 1.0));
    Var one_minus_p = nn::affine(pred, -1.0, 1.0);
    Var pos_map = nn::mul(nn::mul(one_minus_p, one_minus_p), lp);
    Var neg_map = nn::mul(nn::mul(pred, pred), lq);
    Var s = nn::add(nn::weighted_sum(pos_map, w_pos), nn::weighted_sum(neg_map, w_neg));
    return nn::affine(s, -1.0 / norm, 0.0);
}

/// 1 - GIoU for predicted box columns (l,t,r,b) against constant gt [N,4].
inline Var giou_loss_cols(const Var& l1, const Var& t1, const Var& r1, const Var& b1,
                          const nn::Tensor& gt) {
    int n = gt.dim(0);
    nn::Tensor gl({n}), gt_({n}), gr({n}), gb({n});
    for (int i = 0; i < n; ++i) {
        gl[i] = gt.at(i, 0);
        gt_[i] = gt.at(i, 1);
        gr[i] = gt.at(i, 2);
        gb[i] = gt.at(i, 3);
    }
    Var l2 = nn::constant(gl), t2 = nn::constant(gt_), r2 = nn::constant(gr),
        b2 = nn::constant(gb);
    Var iw = nn::relu_(nn::sub(nn::minimum(r1, r2), nn::maximum(l1, l2)));
    Var ih = nn::relu_(nn::sub(nn::minimum(b1, b2), nn::maximum(t1, t2)));
    Var inter = nn::mul(iw, ih);
    Var a1 = nn::mul(nn::relu_(nn::sub(r1, l1)), nn::relu_(nn::sub(b1, t1)));
    Var a2 = nn::mul(nn::sub(r2, l2), nn::sub(b2, t2));
    Var uni = nn::sub(nn::add(a1, a2), inter);
    Var cw = nn::sub(nn::maximum(r1, r2), nn::minimum(l1, l2));
    Var ch = nn::sub(nn::maximum(b1, b2), nn::minimum(t1, t2));
    Var cbox = nn::mul(cw, ch);
    Var giou = nn::sub(nn::div(inter, uni), nn::div(nn::sub(cbox, uni), cbox));
    return nn::affine(giou, -1.0, 1.0);  // [N], each in [0,2]
}

/// 1 - GIoU of predicted boxes [N,4] (l,t,r,b) vs ground truth [N,4]
inline Var giou_loss(const Var& pred, const nn::Tensor& gt) {
    return giou_loss_cols(nn::slice_col(pred, 0), nn::slice_col(pred, 1),
                          nn::slice_col(pred, 2), nn::slice_col(pred, 3), gt);
}

inline double giou_loss_value(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    nn::Tensor pt({1, 4}), gt({1, 4});
    for (int i = 0; i < 4; ++i) {
        pt.at(0, i) = a[i];
        gt.at(0, i) = b[i];
    }
    return giou_loss(nn::constant(pt), gt)->value[0];
}

/// multi-bin orientation loss: cross-entropy over bins plus L1 on the
/// residual of the target bin only. Returns per-object losses [N].
inline Var multibin_orientation_loss(const Var& logits, const Var& residuals,
                                     const std::vector<int>& bin_idx,
                                     const nn::Tensor& bin_residual) {
    Var lsm = nn::log_softmax(logits);
    Var ce = nn::affine(nn::gather_index(lsm, bin_idx), -1.0, 0.0);
    Var res = nn::abs_(nn::sub(nn::gather_index(residuals, bin_idx), nn::constant(bin_residual)));
    return nn::add(ce, res);
}

/// scalar convenience for one object with a raw alpha target
inline Var multibin_orientation_loss(const Var& logits, const Var& residuals, double alpha_gt,
                                     int num_bins) {
    auto [bin, res] = detector::encode_orientation(alpha_gt, num_bins);
    nn::Tensor r({1});
    r[0] = res;
    return nn::mean_all(multibin_orientation_loss(logits, residuals, {bin}, r));
}

/// Laplace negative log-likelihood of instance depth (per object, [N]):
/// sqrt(2)/sigma * |mean - gt| + log(sigma) with sigma = exp(log_sigma)
inline Var depth_laplace_loss(const Var& depth_mean, const Var& depth_log_sigma,
                              const nn::Tensor& d_gt) {
    Var err = nn::abs_(nn::sub(depth_mean, nn::constant(d_gt)));
    Var inv_sigma = nn::exp_(nn::affine(depth_log_sigma, -1.0, 0.0));
    return nn::add(nn::mul(nn::affine(inv_sigma, std::sqrt(2.0), 0.0), err), depth_log_sigma);
}

inline double depth_laplace_loss_value(double mean, double log_sigma, double d_gt) {
    nn::Tensor m({1}), s({1}), d({1});
    m[0] = mean;
    s[0] = log_sigma;
    d[0] = d_gt;
    return depth_laplace_loss(nn::constant(m), nn::constant(s), d)->value[0];
}

struct DetectionLoss {
    Var heatmap;     // focal
    Var off2d_l1;    // 2D center offset L1
    Var giou2d;      // 2D box GIoU
    Var l2d;         // heatmap + off2d + giou
    Var off3d_l1;    // projected 3D centroid offset L1
    Var size3d_l1;   // dimension residual L1
    Var orient;      // multi-bin
    Var l3d;         // off3d + size3d + orient
    Var depth;       // Laplace
    Var total;       // l2d + l3d + depth (unit weights)
};

/// mean over objects of the component-sum L1 distance
inline Var l1_mean(const Var& pred, const nn::Tensor& gt) {
    Var d = nn::sum_all(nn::abs_(nn::sub(pred, nn::constant(gt))));
    return nn::affine(d, 1.0 / gt.dim(0), 0.0);
}

inline DetectionLoss composite_detection_loss(const detector::DetectorOutputs& out,
                                              const detector::TrainTargets& t) {
    DetectionLoss L;
    L.heatmap = focal_heatmap_loss(out.heatmap, t.heatmap, &t.heatmap_weight);

    int n = t.num_objects();
    if (n > 0 && out.num_rois() == n) {
        Var po = nn::gather_cells(out.offset2d, t.cells);  // [N,2]
        Var ps = nn::gather_cells(out.size2d, t.cells);    // [N,2]
        L.off2d_l1 = l1_mean(po, t.off2d);

        // predicted box in feature coords from the anchor cell
        nn::Tensor cellx({n}), celly({n});
        for (int i = 0; i < n; ++i) {
            cellx[i] = t.cells[i].second;
            celly[i] = t.cells[i].first;
        }
        Var cx = nn::add(nn::slice_col(po, 0), nn::constant(cellx));
        Var cy = nn::add(nn::slice_col(po, 1), nn::constant(celly));
        Var hw = nn::affine(nn::relu_(nn::slice_col(ps, 0)), 0.5, 0.0);
        Var hh = nn::affine(nn::relu_(nn::slice_col(ps, 1)), 0.5, 0.0);
        Var giou_terms = giou_loss_cols(nn::sub(cx, hw), nn::sub(cy, hh), nn::add(cx, hw),
                                        nn::add(cy, hh), t.box2d_feat);
        L.giou2d = nn::mean_all(giou_terms);

        L.off3d_l1 = l1_mean(out.off3d, t.off3d);
        L.size3d_l1 = l1_mean(out.size3d, t.size3d);
        L.orient = nn::mean_all(multibin_orientation_loss(out.orient_logits, out.orient_residual,
                                                          t.bin_idx, t.bin_residual));
        L.depth =
            nn::mean_all(depth_laplace_loss(out.depth_mean, out.depth_log_sigma, t.depth));
    } else {
        auto zero = [] { return nn::constant(nn::Tensor::scalar(0.0)); };
        L.off2d_l1 = zero();
        L.giou2d = zero();
        L.off3d_l1 = zero();
        L.size3d_l1 = zero();
        L.orient = zero();
        L.depth = zero();
    }
    L.l2d = nn::add(nn::add(L.heatmap, L.off2d_l1), L.giou2d);
    L.l3d = nn::add(nn::add(L.off3d_l1, L.size3d_l1), L.orient);
    L.total = nn::add(nn::add(L.l2d, L.l3d), L.depth);
    if (!L.total->value.all_finite()) throw std::runtime_error("composite loss: non-finite");
    return L;
}

}  // namespace dart3d::losses
