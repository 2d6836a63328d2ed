#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "dart3d/kitti.hpp"

namespace dart3d::synth {

using kitti::CameraCalibration;
using kitti::Frame;
using kitti::ObjectLabel;

/// parameters of the pinhole-camera cuboid scene generator
struct SceneConfig {
    int width = 384;
    int height = 128;
    double focal_rel = 0.5625;  // focal length = focal_rel * width
    double cam_height = 1.15;   // meters above the ground plane
    int min_objects = 1;
    int max_objects = 6;
    double z_near = 5.0;
    double z_far = 16.0;
    double dims_mean[3] = {1.52, 1.63, 3.88};  // h, w, l
    double dims_jitter = 0.04;
    double road_yaw_frac = 0.7;
    double occluder_prob = 0.35;
    double edge_prob = 0.22;
    double distractor_prob = 0.3;  // far car emitted as DontCare
    double distractor_z = 24.0;

    double focal() const { return focal_rel * width; }
    CameraCalibration calib() const {
        return CameraCalibration::from_intrinsics(focal(), width / 2.0, height / 2.0);
    }
};

namespace detail {

inline double hash_noise(uint64_t seed, int x, int y) {
    uint64_t h = nn::mix_seed(seed, (static_cast<uint64_t>(x) << 20) ^ static_cast<uint64_t>(y));
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
}

struct Rect {
    double l = 0, t = 0, r = 0, b = 0;
    double area() const { return std::max(0.0, r - l) * std::max(0.0, b - t); }
};

inline Rect projected_rect(const ObjectLabel& o, const CameraCalibration& c) {
    auto corners = kitti::box_corners(o);
    Rect rc{1e30, 1e30, -1e30, -1e30};
    for (const auto& p : corners) {
        auto px = kitti::project_to_image(p[0], p[1], p[2], c);
        rc.l = std::min(rc.l, px.u);
        rc.t = std::min(rc.t, px.v);
        rc.r = std::max(rc.r, px.u);
        rc.b = std::max(rc.b, px.v);
    }
    return rc;
}

inline Rect clip_rect(const Rect& rc, int w, int h) {
    return {std::clamp(rc.l, 0.0, double(w)), std::clamp(rc.t, 0.0, double(h)),
            std::clamp(rc.r, 0.0, double(w)), std::clamp(rc.b, 0.0, double(h))};
}

// scanline fill of a convex quad with flat color scaled by per-pixel noise
inline void fill_quad(nn::Tensor& img, const std::array<kitti::Pixel, 4>& poly,
                      const double rgb[3], uint64_t tex_seed) {
    int hgt = img.dim(1), wid = img.dim(2);
    double vmin = 1e30, vmax = -1e30;
    for (const auto& p : poly) {
        vmin = std::min(vmin, p.v);
        vmax = std::max(vmax, p.v);
    }
    int y0 = std::max(0, static_cast<int>(std::ceil(vmin)));
    int y1 = std::min(hgt - 1, static_cast<int>(std::floor(vmax)));
    for (int y = y0; y <= y1; ++y) {
        double yc = y + 0.5;
        double xl = 1e30, xr = -1e30;
        for (int e = 0; e < 4; ++e) {
            const auto& a = poly[e];
            const auto& b = poly[(e + 1) % 4];
            if ((a.v <= yc && b.v > yc) || (b.v <= yc && a.v > yc)) {
                double t = (yc - a.v) / (b.v - a.v);
                double x = a.u + t * (b.u - a.u);
                xl = std::min(xl, x);
                xr = std::max(xr, x);
            }
        }
        if (xl > xr) continue;
        int x0 = std::max(0, static_cast<int>(std::ceil(xl - 0.5)));
        int x1 = std::min(wid - 1, static_cast<int>(std::floor(xr - 0.5)));
        for (int x = x0; x <= x1; ++x) {
            double n = 0.92 + 0.16 * hash_noise(tex_seed, x, y);
            for (int ch = 0; ch < 3; ++ch)
                img.at(ch, y, x) = std::clamp(rgb[ch] * n, 0.0, 255.0);
        }
    }
}

inline void render_cuboid(nn::Tensor& img, const ObjectLabel& o, const CameraCalibration& c,
                          const double albedo[3], uint64_t tex_seed) {
    auto corners = kitti::box_corners(o);
    // corner order from box_corners: (bottom/top) x (+l/-l) x (+w/-w)
    // faces as corner index quads with outward normals implied by geometry
    static const int faces[6][4] = {
        {0, 1, 3, 2},  // bottom (y = loc.y)
        {4, 5, 7, 6},  // top
        {0, 1, 5, 4},  // +l end
        {2, 3, 7, 6},  // -l end
        {0, 2, 6, 4},  // +w side
        {1, 3, 7, 5},  // -w side
    };
    static const double shade[6] = {0.25, 1.0, 0.78, 0.78, 0.55, 0.55};
    double atten = 1.0 / (1.0 + o.location[2] / 35.0);
    for (int f = 0; f < 6; ++f) {
        // backface cull: visible iff face centroid normal points toward camera.
        double cx = 0, cy = 0, cz = 0;
        for (int k = 0; k < 4; ++k) {
            cx += corners[faces[f][k]][0];
            cy += corners[faces[f][k]][1];
            cz += corners[faces[f][k]][2];
        }
        cx /= 4; cy /= 4; cz /= 4;
        // outward normal = centroid minus box center
        double bx = o.location[0], by = o.location[1] - o.dims[0] / 2, bz = o.location[2];
        double nx = cx - bx, ny = cy - by, nz = cz - bz;
        if (nx * cx + ny * cy + nz * cz >= 0) continue;  // facing away
        std::array<kitti::Pixel, 4> poly;
        bool ok = true;
        for (int k = 0; k < 4; ++k) {
            const auto& p = corners[faces[f][k]];
            if (p[2] <= 0.1) { ok = false; break; }
            poly[k] = kitti::project_to_image(p[0], p[1], p[2], c);
        }
        if (!ok) continue;
        double rgb[3];
        for (int ch = 0; ch < 3; ++ch)
            rgb[ch] = std::clamp(albedo[ch] * shade[f] * (0.45 + 0.55 * atten) * 1.6, 0.0, 255.0);
        fill_quad(img, poly, rgb, tex_seed + static_cast<uint64_t>(f) * 7919);
    }
}

}  // namespace detail

/// Render one synthetic frame. Deterministic given (config, seed).
inline Frame synth_scene(const SceneConfig& cfg, uint64_t seed) {
    if (cfg.width <= 0 || cfg.height <= 0)
        throw std::invalid_argument("synth_scene: image size must be positive");
    if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects)
        throw std::invalid_argument("synth_scene: bad object count range");

    std::mt19937_64 rng(nn::mix_seed(seed, 0xdadaull));
    auto uni = [&](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };

    Frame fr;
    fr.calib = cfg.calib();
    const int W = cfg.width, H = cfg.height;
    const double f = cfg.focal(), cx = W / 2.0, cy = H / 2.0;
    fr.image = nn::Tensor({3, H, W});

    // background: sky gradient above the horizon, textured ground below
    uint64_t tex = nn::mix_seed(seed, 0xbeefull);
    int horizon = static_cast<int>(cy);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double n = detail::hash_noise(tex, x, y);
            if (y < horizon) {
                double t = double(y) / std::max(1, horizon);
                fr.image.at(0, y, x) = 138 - 26 * t + 6 * n;
                fr.image.at(1, y, x) = 152 - 24 * t + 6 * n;
                fr.image.at(2, y, x) = 176 - 18 * t + 6 * n;
            } else {
                double depth_fade = double(y - horizon) / std::max(1, H - horizon);
                double base = 74 + 26 * depth_fade;
                double tex_amp = 20 + 12 * depth_fade;
                fr.image.at(0, y, x) = base + tex_amp * n;
                fr.image.at(1, y, x) = base * 0.96 + tex_amp * n;
                fr.image.at(2, y, x) = base * 0.88 + tex_amp * n;
            }
        }

    // sample cars
    struct Obj {
        ObjectLabel label;
        double albedo[3];
        bool dontcare = false;
    };
    std::vector<Obj> objs;
    int n_target = std::uniform_int_distribution<int>(cfg.min_objects, cfg.max_objects)(rng);
    auto sample_car = [&](double z_lo, double z_hi, bool edge) {
        Obj o;
        double z = uni(z_lo, z_hi);
        double x_max = 0.82 * z * (W / 2.0) / f;
        double x;
        if (edge) {
            double side = (uni(0, 1) < 0.5) ? -1.0 : 1.0;
            x = side * uni(0.95, 1.25) * z * (W / 2.0) / f;
        } else {
            x = uni(-x_max, x_max);
        }
        o.label.class_name = "Car";
        o.label.location[0] = x;
        o.label.location[1] = cfg.cam_height;
        o.label.location[2] = z;
        for (int i = 0; i < 3; ++i)
            o.label.dims[i] = cfg.dims_mean[i] * (1.0 + uni(-cfg.dims_jitter, cfg.dims_jitter));
        if (uni(0, 1) < cfg.road_yaw_frac) {
            double half = (uni(0, 1) < 0.5) ? kitti::kPi / 2 : -kitti::kPi / 2;
            o.label.rotation_y = kitti::wrap_angle(half + uni(-0.3, 0.3));
        } else {
            o.label.rotation_y = uni(-kitti::kPi, kitti::kPi);
        }
        for (int ch = 0; ch < 3; ++ch) o.albedo[ch] = uni(60, 215);
        return o;
    };

    for (int i = 0; i < n_target; ++i) {
        bool edge = uni(0, 1) < cfg.edge_prob;
        Obj o = sample_car(cfg.z_near, cfg.z_far, edge);
        objs.push_back(o);
        if (!edge && uni(0, 1) < cfg.occluder_prob &&
            static_cast<int>(objs.size()) < cfg.max_objects && o.label.location[2] > cfg.z_near + 2.5) {
            // place a partially covering car in front of the previous one
            Obj front = sample_car(o.label.location[2] - 3.5, o.label.location[2] - 1.5, false);
            front.label.location[0] = o.label.location[0] + uni(-1.2, 1.2);
            objs.push_back(front);
            ++i;
        }
    }
    if (static_cast<int>(objs.size()) < cfg.max_objects && uni(0, 1) < cfg.distractor_prob) {
        Obj d = sample_car(cfg.distractor_z, cfg.distractor_z * 1.5, false);
        d.dontcare = true;
        objs.push_back(d);
    }

    // drop objects that project entirely outside the image
    std::vector<Obj> kept;
    for (auto& o : objs) {
        auto rc = detail::projected_rect(o.label, fr.calib);
        auto cl = detail::clip_rect(rc, W, H);
        if (cl.area() <= 0.0 || rc.area() <= 0.0) continue;
        kept.push_back(o);
    }

    // painter's algorithm: far to near
    std::stable_sort(kept.begin(), kept.end(), [](const Obj& a, const Obj& b) {
        return a.label.location[2] > b.label.location[2];
    });
    for (size_t i = 0; i < kept.size(); ++i)
        detail::render_cuboid(fr.image, kept[i].label, fr.calib, kept[i].albedo,
                              nn::mix_seed(seed, 0xca8 + i));

    // quantize so lossless 8-bit storage round-trips exactly
    for (auto& v : fr.image.data) v = std::round(std::clamp(v, 0.0, 255.0));

    // finalize labels: box2d from clipped corner projection, truncation from
    // clipped area, occlusion from coverage by nearer boxes
    for (size_t i = 0; i < kept.size(); ++i) {
        auto& o = kept[i].label;
        auto rc = detail::projected_rect(o, fr.calib);
        auto cl = detail::clip_rect(rc, W, H);
        o.box2d[0] = cl.l;
        o.box2d[1] = cl.t;
        o.box2d[2] = cl.r;
        o.box2d[3] = cl.b;
        o.truncation = std::clamp(1.0 - cl.area() / rc.area(), 0.0, 1.0);
        // coverage of own visible rect by strictly nearer objects, 16x16 grid
        int covered = 0;
        const int G = 16;
        for (int gy = 0; gy < G; ++gy)
            for (int gx = 0; gx < G; ++gx) {
                double px = cl.l + (gx + 0.5) * (cl.r - cl.l) / G;
                double py = cl.t + (gy + 0.5) * (cl.b - cl.t) / G;
                for (size_t j = i + 1; j < kept.size(); ++j) {
                    auto rj = detail::clip_rect(detail::projected_rect(kept[j].label, fr.calib), W, H);
                    if (px >= rj.l && px <= rj.r && py >= rj.t && py <= rj.b) {
                        ++covered;
                        break;
                    }
                }
            }
        double cov = double(covered) / (G * G);
        o.occlusion = cov < 0.15 ? 0 : (cov < 0.45 ? 1 : (cov < 0.80 ? 2 : 3));
        o.alpha = kitti::alpha_from_rotation_y(o.rotation_y, o.location[0], o.location[2]);
    }

    // Cars first, DontCare rows last (KITTI file convention)
    for (const auto& o : kept)
        if (!o.dontcare) fr.labels.push_back(o.label);
    for (const auto& o : kept)
        if (o.dontcare) {
            ObjectLabel d = o.label;
            d.class_name = "DontCare";
            fr.labels.push_back(d);
        }
    return fr;
}

inline std::vector<Frame> synth_dataset(const SceneConfig& cfg, int count, uint64_t base_seed,
                                        const std::string& id_prefix) {
    std::vector<Frame> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        Frame f = synth_scene(cfg, nn::mix_seed(base_seed, static_cast<uint64_t>(i)));
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s%06d", id_prefix.c_str(), i);
        f.frame_id = buf;
        out.push_back(std::move(f));
    }
    return out;
}

// ---- dataset directory IO ----

inline void write_ppm(const std::filesystem::path& path, const nn::Tensor& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    int h = img.dim(1), w = img.dim(2);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::clamp(img.at(c, y, x), 0.0, 255.0));
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

inline nn::Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    in >> magic >> w >> h >> maxv;
    if (magic != "P6" || maxv != 255) throw std::runtime_error("unsupported ppm: " + path.string());
    in.get();  // single whitespace after header
    nn::Tensor img({3, h, w});
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<double>(row[static_cast<size_t>(x) * 3 + c]);
    }
    return img;
}

inline void write_dataset(const std::filesystem::path& dir, const std::vector<Frame>& frames) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "labels");
    fs::create_directories(dir / "calib");
    std::ofstream manifest(dir / "manifest.txt");
    for (const auto& f : frames) {
        manifest << f.frame_id << "\n";
        write_ppm(dir / "images" / (f.frame_id + ".ppm"), f.image);
        std::ofstream(dir / "labels" / (f.frame_id + ".txt")) << kitti::serialize_labels(f.labels);
        std::ofstream(dir / "calib" / (f.frame_id + ".txt")) << kitti::serialize_calib(f.calib);
    }
}

inline std::vector<Frame> load_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("missing manifest: " + (dir / "manifest.txt").string());
    std::vector<Frame> frames;
    std::string id;
    while (std::getline(manifest, id)) {
        if (id.empty()) continue;
        Frame f;
        f.frame_id = id;
        f.image = read_ppm(dir / "images" / (id + ".ppm"));
        auto read_text = [](const std::filesystem::path& p) {
            std::ifstream in(p);
            if (!in) throw std::runtime_error("cannot read " + p.string());
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        f.labels = kitti::parse_label_file(read_text(dir / "labels" / (id + ".txt")));
        f.calib = kitti::parse_calib(read_text(dir / "calib" / (id + ".txt")));
        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace dart3d::synth
