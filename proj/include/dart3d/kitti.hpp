#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dart3d/tensor.hpp"

namespace dart3d::kitti {

constexpr double kPi = 3.14159265358979323846;

/// wrap an angle to [-pi, pi)
inline double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0) a += 2.0 * kPi;
    return a - kPi;
}

struct ParseError : std::runtime_error {
    int line;
    ParseError(int line_no, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};

/// camera-2 projection matrix (3x4, pixels)
struct CameraCalibration {
    std::array<std::array<double, 4>, 3> p2{};

    static CameraCalibration from_intrinsics(double f, double cx, double cy) {
        CameraCalibration c;
        c.p2 = {{{f, 0, cx, 0}, {0, f, cy, 0}, {0, 0, 1, 0}}};
        return c;
    }
};

struct ObjectLabel {
    std::string class_name;
    double truncation = 0.0;
    int occlusion = 0;
    double alpha = 0.0;
    double box2d[4] = {0, 0, 0, 0};  // left, top, right, bottom
    double dims[3] = {0, 0, 0};      // h, w, l
    double location[3] = {0, 0, 0};  // x, y, z (camera frame, y down; bottom center)
    double rotation_y = 0.0;
    std::optional<double> score;

    double box_height() const { return box2d[3] - box2d[1]; }
    bool is_dontcare() const { return class_name == "DontCare"; }
};

enum class DifficultyLevel { Easy, Moderate, Hard, Ignored };

inline const char* difficulty_name(DifficultyLevel d) {
    switch (d) {
        case DifficultyLevel::Easy: return "easy";
        case DifficultyLevel::Moderate: return "moderate";
        case DifficultyLevel::Hard: return "hard";
        default: return "ignored";
    }
}

struct Frame {
    nn::Tensor image;  // [3, H, W], values in [0, 255]
    CameraCalibration calib;
    std::vector<ObjectLabel> labels;
    std::string frame_id;

    int height() const { return image.dim(1); }
    int width() const { return image.dim(2); }
};

// ---- label file parsing / serialization ----

namespace detail {

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

inline double parse_real(const std::string& tok, int line_no) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
        throw ParseError(line_no, "invalid number '" + tok + "'");
    return v;
}

}  // namespace detail

inline std::vector<ObjectLabel> parse_label_file(const std::string& text) {
    std::vector<ObjectLabel> labels;
    std::istringstream iss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(iss, line)) {
        ++line_no;
        auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks.size() != 15 && toks.size() != 16)
            throw ParseError(line_no, "expected 15 or 16 fields, got " +
                                          std::to_string(toks.size()));
        ObjectLabel o;
        o.class_name = toks[0];
        o.truncation = detail::parse_real(toks[1], line_no);
        o.occlusion = static_cast<int>(detail::parse_real(toks[2], line_no));
        o.alpha = detail::parse_real(toks[3], line_no);
        for (int i = 0; i < 4; ++i) o.box2d[i] = detail::parse_real(toks[4 + i], line_no);
        for (int i = 0; i < 3; ++i) o.dims[i] = detail::parse_real(toks[8 + i], line_no);
        for (int i = 0; i < 3; ++i) o.location[i] = detail::parse_real(toks[11 + i], line_no);
        o.rotation_y = detail::parse_real(toks[14], line_no);
        if (toks.size() == 16) o.score = detail::parse_real(toks[15], line_no);
        labels.push_back(std::move(o));
    }
    return labels;
}

inline std::string serialize_label(const ObjectLabel& o) {
    char buf[512];
    int n = std::snprintf(buf, sizeof(buf),
                          "%s %.2f %d %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f",
                          o.class_name.c_str(), o.truncation, o.occlusion, o.alpha, o.box2d[0],
                          o.box2d[1], o.box2d[2], o.box2d[3], o.dims[0], o.dims[1], o.dims[2],
                          o.location[0], o.location[1], o.location[2], o.rotation_y);
    std::string s(buf, static_cast<size_t>(n));
    if (o.score) {
        std::snprintf(buf, sizeof(buf), " %.2f", *o.score);
        s += buf;
    }
    return s;
}

inline std::string serialize_labels(const std::vector<ObjectLabel>& labels) {
    std::string out;
    for (const auto& o : labels) {
        out += serialize_label(o);
        out += '\n';
    }
    return out;
}

// ---- calibration ----

inline CameraCalibration parse_calib(const std::string& text) {
    std::istringstream iss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(iss, line)) {
        ++line_no;
        auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks[0] == "P2:") {
            if (toks.size() != 13)
                throw ParseError(line_no, "P2 expects 12 values, got " +
                                              std::to_string(toks.size() - 1));
            CameraCalibration c;
            for (int i = 0; i < 12; ++i)
                c.p2[i / 4][i % 4] = detail::parse_real(toks[1 + i], line_no);
            return c;
        }
    }
    throw ParseError(line_no, "missing P2 line");
}

inline std::string serialize_calib(const CameraCalibration& c) {
    char buf[64];
    std::string s = "P2:";
    for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 4; ++k) {
            std::snprintf(buf, sizeof(buf), " %.12g", c.p2[r][k]);
            s += buf;
        }
    s += '\n';
    return s;
}

// ---- projection ----

struct Pixel {
    double u = 0, v = 0;
};

inline Pixel project_to_image(double x, double y, double z, const CameraCalibration& c) {
    if (z <= 0.0) throw std::domain_error("project_to_image: point behind camera (z <= 0)");
    const auto& p = c.p2;
    double w = p[2][0] * x + p[2][1] * y + p[2][2] * z + p[2][3];
    double u = p[0][0] * x + p[0][1] * y + p[0][2] * z + p[0][3];
    double v = p[1][0] * x + p[1][1] * y + p[1][2] * z + p[1][3];
    return {u / w, v / w};
}

/// invert the projection at known depth z; assumes p2 row 2 = [0,0,p22,p23]
inline void back_project(double u, double v, double z, const CameraCalibration& c, double& x,
                         double& y) {
    const auto& p = c.p2;
    double w = p[2][2] * z + p[2][3];
    // solve [p00 p01; p10 p11] [x y]^T = [u*w - p02 z - p03; v*w - p12 z - p13]
    double r0 = u * w - p[0][2] * z - p[0][3];
    double r1 = v * w - p[1][2] * z - p[1][3];
    double det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    x = (r0 * p[1][1] - p[0][1] * r1) / det;
    y = (p[0][0] * r1 - r0 * p[1][0]) / det;
}

// ---- difficulty ----

inline DifficultyLevel assign_difficulty(const ObjectLabel& o) {
    if (o.is_dontcare()) return DifficultyLevel::Ignored;
    double h = o.box_height();
    if (h >= 40.0 && o.occlusion <= 0 && o.truncation <= 0.15) return DifficultyLevel::Easy;
    if (h >= 25.0 && o.occlusion <= 1 && o.truncation <= 0.30) return DifficultyLevel::Moderate;
    if (h >= 25.0 && o.occlusion <= 2 && o.truncation <= 0.50) return DifficultyLevel::Hard;
    return DifficultyLevel::Ignored;
}

// ---- 3D box geometry ----

/// the 8 corners of a label's cuboid in camera coordinates.
/// location is the bottom-face center; x axis = length, z axis = width at yaw 0.
inline std::array<std::array<double, 3>, 8> box_corners(const ObjectLabel& o) {
    double h = o.dims[0], w = o.dims[1], l = o.dims[2];
    double c = std::cos(o.rotation_y), s = std::sin(o.rotation_y);
    std::array<std::array<double, 3>, 8> out;
    int idx = 0;
    for (double dy : {0.0, -h})
        for (double dx : {l / 2, -l / 2})
            for (double dz : {w / 2, -w / 2}) {
                double rx = c * dx + s * dz;
                double rz = -s * dx + c * dz;
                out[idx++] = {o.location[0] + rx, o.location[1] + dy, o.location[2] + rz};
            }
    return out;
}

inline double alpha_from_rotation_y(double rotation_y, double x, double z) {
    return wrap_angle(rotation_y - std::atan2(x, z));
}

inline double rotation_y_from_alpha(double alpha, double x, double z) {
    return wrap_angle(alpha + std::atan2(x, z));
}

}  // namespace dart3d::kitti
