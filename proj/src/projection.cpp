#include "cobotar/projection.hpp"

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

namespace cobotar::projection {

bool CameraIntrinsics::valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx <= width && cy >= 0.0 &&
           cy <= height;
}

Eigen::Vector2d camera_project(const CameraIntrinsics& intr, const kin::RigidTransform& cam_pose,
                               const Eigen::Vector3d& world_pt) {
    if (!intr.valid()) throw ProjectionError("invalid camera intrinsics");
    const Eigen::Vector3d pc = cam_pose.rotation.transpose() * (world_pt - cam_pose.translation);
    if (!(pc.z() > 0.0)) throw BehindCamera("point has non-positive depth " + std::to_string(pc.z()));
    return {intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy};
}

Homography::Homography(const Eigen::Matrix3d& m) : m_(m) {
    if (!m_.allFinite()) throw ProjectionError("homography has non-finite entries");
    if (m_(2, 2) != 0.0) m_ /= m_(2, 2);
    // relative to the entry scale, so that a uniformly small matrix is not flagged
    const double scale = m_.cwiseAbs().maxCoeff();
    if (scale == 0.0 || std::abs(m_.determinant()) <= 1e-12 * scale * scale * scale) {
        throw DegenerateConfiguration("homography is singular");
    }
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

namespace {

// Hartley: centroid to the origin, mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(std::span<const PointPair> pairs, bool use_src) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& p : pairs) mean += use_src ? p.src : p.dst;
    mean /= static_cast<double>(pairs.size());
    double dist = 0.0;
    for (const auto& p : pairs) dist += ((use_src ? p.src : p.dst) - mean).norm();
    dist /= static_cast<double>(pairs.size());
    if (dist <= 0.0) throw DegenerateConfiguration("all points coincide");
    const double s = std::sqrt(2.0) / dist;
    Eigen::Matrix3d T;
    T << s, 0, -s * mean.x(),
         0, s, -s * mean.y(),
         0, 0, 1;
    return T;
}

bool collinear(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const Eigen::Vector2d u = b - a, v = c - a;
    const double cross = u.x() * v.y() - u.y() * v.x();
    return std::abs(cross) <= 1e-10 * u.norm() * v.norm();
}

}  // namespace

Homography estimate_homography(std::span<const PointPair> pairs) {
    if (pairs.size() < 4) throw DegenerateConfiguration("homography needs at least 4 correspondences");
    if (pairs.size() == 4) {
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = i + 1; j < 4; ++j) {
                for (std::size_t k = j + 1; k < 4; ++k) {
                    if (collinear(pairs[i].src, pairs[j].src, pairs[k].src) ||
                        collinear(pairs[i].dst, pairs[j].dst, pairs[k].dst)) {
                        throw DegenerateConfiguration("three of the four points are collinear");
                    }
                }
            }
        }
    }

    const Eigen::Matrix3d Ts = normalizing_transform(pairs, true);
    const Eigen::Matrix3d Td = normalizing_transform(pairs, false);

    const auto rows = static_cast<Eigen::Index>(2 * pairs.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(rows, 9), 9);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Eigen::Vector3d s = Ts * pairs[i].src.homogeneous();
        const Eigen::Vector3d d = Td * pairs[i].dst.homogeneous();
        const auto r = static_cast<Eigen::Index>(2 * i);
        A.row(r) << 0, 0, 0, -s.x(), -s.y(), -1, d.y() * s.x(), d.y() * s.y(), d.y();
        A.row(r + 1) << s.x(), s.y(), 1, 0, 0, 0, -d.x() * s.x(), -d.x() * s.y(), -d.x();
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(7) <= 1e-10 * sv(0)) throw DegenerateConfiguration("correspondences do not determine a homography");

    const Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d Hn;
    Hn << h(0), h(1), h(2),
          h(3), h(4), h(5),
          h(6), h(7), h(8);
    return Homography(Td.inverse() * Hn * Ts);
}

Eigen::Vector2d apply_homography(const Homography& H, const Eigen::Vector2d& p) {
    const Eigen::Vector3d r = H.matrix() * p.homogeneous();
    const double scale = H.matrix().row(2).cwiseAbs().sum() * (1.0 + p.cwiseAbs().maxCoeff());
    if (std::abs(r.z()) <= 1e-15 * scale) throw PointAtInfinity("point maps to infinity");
    return r.hnormalized();
}

std::string_view to_string(Action a) {
    switch (a) {
        case Action::PosX: return "+x";
        case Action::NegX: return "-x";
        case Action::PosY: return "+y";
        case Action::NegY: return "-y";
    }
    return "?";
}

Action action_from_string(std::string_view s) {
    if (s == "+x") return Action::PosX;
    if (s == "-x") return Action::NegX;
    if (s == "+y") return Action::PosY;
    if (s == "-y") return Action::NegY;
    throw ProjectionError("unknown action \"" + std::string(s) + "\"");
}

Eigen::Vector2d action_direction(Action a) {
    switch (a) {
        case Action::PosX: return {1.0, 0.0};
        case Action::NegX: return {-1.0, 0.0};
        case Action::PosY: return {0.0, 1.0};
        case Action::NegY: return {0.0, -1.0};
    }
    return Eigen::Vector2d::Zero();
}

GuiLayout::GuiLayout(std::vector<ButtonRegion> buttons, Eigen::Vector2d extent)
    : buttons_(std::move(buttons)), extent_(std::move(extent)) {
    if (buttons_.size() != 4) throw ProjectionError("GUI layout must have exactly four buttons");
    if (!(extent_.x() > 0.0 && extent_.y() > 0.0)) throw ProjectionError("GUI plane extent must be positive");
    std::set<int> ids;
    std::set<Action> actions;
    for (const auto& b : buttons_) {
        if (!(b.rect.w > 0.0 && b.rect.h > 0.0)) throw ProjectionError("button rectangles must have positive size");
        ids.insert(b.id.value);
        actions.insert(b.action);
    }
    if (ids.size() != 4) throw ProjectionError("button ids must be unique");
    if (actions.size() != 4) throw ProjectionError("layout needs exactly one button per action");
    for (std::size_t i = 0; i < buttons_.size(); ++i) {
        for (std::size_t j = i + 1; j < buttons_.size(); ++j) {
            const Rect& a = buttons_[i].rect;
            const Rect& b = buttons_[j].rect;
            // closed rectangles: touching edges count as overlap
            const bool apart = a.x + a.w < b.x || b.x + b.w < a.x || a.y + a.h < b.y || b.y + b.h < a.y;
            if (!apart) throw ProjectionError("button rectangles overlap");
        }
    }
}

GuiLayout GuiLayout::standard() {
    return GuiLayout(
        {
            {ButtonId{1}, Rect{35.0, -20.0, 40.0, 40.0}, Action::PosX},
            {ButtonId{2}, Rect{-75.0, -20.0, 40.0, 40.0}, Action::NegX},
            {ButtonId{3}, Rect{-20.0, 15.0, 40.0, 40.0}, Action::PosY},
            {ButtonId{4}, Rect{-20.0, -55.0, 40.0, 40.0}, Action::NegY},
        },
        Eigen::Vector2d(160.0, 120.0));
}

GuiLayout GuiLayout::from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("buttons")) throw ProjectionError("layout needs a \"buttons\" array");
    std::vector<ButtonRegion> buttons;
    for (const auto& b : doc.at("buttons")) {
        const auto& r = b.at("rect");
        if (!r.is_array() || r.size() != 4) throw ProjectionError("button rect must be [x, y, w, h]");
        buttons.push_back({ButtonId{b.at("id").get<int>()},
                           Rect{r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()},
                           action_from_string(b.at("action").get<std::string>())});
    }
    Eigen::Vector2d extent(160.0, 120.0);
    if (doc.contains("extent")) extent = {doc["extent"].at(0).get<double>(), doc["extent"].at(1).get<double>()};
    return GuiLayout(std::move(buttons), extent);
}

nlohmann::json GuiLayout::to_json() const {
    nlohmann::json buttons = nlohmann::json::array();
    for (const auto& b : buttons_) {
        buttons.push_back({{"id", b.id.value},
                           {"rect", {b.rect.x, b.rect.y, b.rect.w, b.rect.h}},
                           {"action", std::string(to_string(b.action))}});
    }
    return {{"buttons", buttons}, {"extent", {extent_.x(), extent_.y()}}};
}

const ButtonRegion& GuiLayout::button(ButtonId id) const {
    for (const auto& b : buttons_) {
        if (b.id == id) return b;
    }
    throw ProjectionError("no button with id " + std::to_string(id.value));
}

const ButtonRegion& GuiLayout::button_for(Action a) const {
    for (const auto& b : buttons_) {
        if (b.action == a) return b;
    }
    throw ProjectionError("no button for action " + std::string(to_string(a)));
}

std::array<Eigen::Vector2d, 4> GuiLayout::plane_corners() const {
    const double hw = extent_.x() / 2.0, hh = extent_.y() / 2.0;
    return {Eigen::Vector2d(-hw, -hh), Eigen::Vector2d(hw, -hh), Eigen::Vector2d(hw, hh), Eigen::Vector2d(-hw, hh)};
}

std::optional<ButtonId> hit_test(const GuiLayout& layout, const Eigen::Vector2d& gui_pt) {
    for (const auto& b : layout.buttons()) {
        if (b.rect.contains(gui_pt)) return b.id;
    }
    return std::nullopt;
}

Eigen::Vector3d gui_to_world(const kin::RigidTransform& target, const Eigen::Vector2d& gui_mm) {
    return target * Eigen::Vector3d(gui_mm.x() / 1000.0, gui_mm.y() / 1000.0, 0.0);
}

std::vector<WorldRect> gui_world_pose(const kin::RigidTransform& target, const GuiLayout& layout) {
    std::vector<WorldRect> out;
    out.reserve(layout.buttons().size());
    for (const auto& b : layout.buttons()) {
        const Rect& r = b.rect;
        out.push_back({b.id, b.action,
                       {gui_to_world(target, {r.x, r.y}), gui_to_world(target, {r.x + r.w, r.y}),
                        gui_to_world(target, {r.x + r.w, r.y + r.h}), gui_to_world(target, {r.x, r.y + r.h})}});
    }
    return out;
}

Eigen::Vector2d gui_to_image(const CameraIntrinsics& intr, const kin::RigidTransform& cam_pose,
                             const kin::RigidTransform& target, const Eigen::Vector2d& gui_mm) {
    const Eigen::Vector2d px = camera_project(intr, cam_pose, gui_to_world(target, gui_mm));
    return {px.x() / intr.width, px.y() / intr.height};
}

Homography camera_to_gui(const CameraIntrinsics& intr, const kin::RigidTransform& cam_pose,
                         const kin::RigidTransform& target, const GuiLayout& layout) {
    std::array<PointPair, 4> pairs;
    const auto corners = layout.plane_corners();
    for (std::size_t i = 0; i < 4; ++i) {
        pairs[i] = {gui_to_image(intr, cam_pose, target, corners[i]), corners[i]};
    }
    return estimate_homography(pairs);
}

}  // namespace cobotar::projection
