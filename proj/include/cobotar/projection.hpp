#pragma once

#include "cobotar/kinematics.hpp"

#include <Eigen/Dense>

#include <array>
#include <compare>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cobotar::projection {

class ProjectionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BehindCamera : public ProjectionError {
public:
    using ProjectionError::ProjectionError;
};

class DegenerateConfiguration : public ProjectionError {
public:
    using ProjectionError::ProjectionError;
};

class PointAtInfinity : public ProjectionError {
public:
    using ProjectionError::ProjectionError;
};

struct CameraIntrinsics {
    double fx = 1000.0;
    double fy = 1000.0;
    double cx = 640.0;
    double cy = 360.0;
    int width = 1280;
    int height = 720;

    bool valid() const;
};

/**
 * Pinhole projection. `cam_pose` is the camera frame expressed in world
 * coordinates, optical axis along its local +z.
 */
Eigen::Vector2d camera_project(const CameraIntrinsics& intr, const kin::RigidTransform& cam_pose,
                               const Eigen::Vector3d& world_pt);

/// Planar projective map, stored with h33 = 1 whenever h33 != 0.
class Homography {
public:
    Homography() = default;
    explicit Homography(const Eigen::Matrix3d& m);

    static Homography identity() { return Homography(); }

    const Eigen::Matrix3d& matrix() const { return m_; }
    Homography inverse() const;
    Homography operator*(const Homography& rhs) const { return Homography(m_ * rhs.m_); }

private:
    Eigen::Matrix3d m_ = Eigen::Matrix3d::Identity();
};

struct PointPair {
    Eigen::Vector2d src;
    Eigen::Vector2d dst;
};

/// Normalized DLT. Exact for four pairs, algebraic least squares beyond that.
Homography estimate_homography(std::span<const PointPair> pairs);

Eigen::Vector2d apply_homography(const Homography& H, const Eigen::Vector2d& p);

struct ButtonId {
    int value = 0;
    auto operator<=>(const ButtonId&) const = default;
};

enum class Action { PosX, NegX, PosY, NegY };

std::string_view to_string(Action a);
Action action_from_string(std::string_view s);
/// Unit direction in the TCP's XY plane.
Eigen::Vector2d action_direction(Action a);

/// Axis-aligned rectangle in GUI-plane millimeters, min corner plus size.
struct Rect {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool contains(const Eigen::Vector2d& p) const {
        return p.x() >= x && p.x() <= x + w && p.y() >= y && p.y() <= y + h;
    }
    Eigen::Vector2d center() const { return {x + w / 2.0, y + h / 2.0}; }
};

struct ButtonRegion {
    ButtonId id;
    Rect rect;
    Action action = Action::PosX;
};

/**
 * Projected GUI: four buttons on a plane centred on the projection target.
 * GUI-plane axes coincide with the target frame's x and y, in millimeters.
 */
class GuiLayout {
public:
    GuiLayout(std::vector<ButtonRegion> buttons, Eigen::Vector2d extent);

    /// Four 40 mm buttons on a 160 x 120 mm plane, arranged as a cross.
    static GuiLayout standard();
    static GuiLayout from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;

    const std::vector<ButtonRegion>& buttons() const { return buttons_; }
    const Eigen::Vector2d& extent() const { return extent_; }
    const ButtonRegion& button(ButtonId id) const;
    const ButtonRegion& button_for(Action a) const;
    /// Plane corners, counter-clockwise from (-w/2, -h/2).
    std::array<Eigen::Vector2d, 4> plane_corners() const;

private:
    std::vector<ButtonRegion> buttons_;
    Eigen::Vector2d extent_;
};

std::optional<ButtonId> hit_test(const GuiLayout& layout, const Eigen::Vector2d& gui_pt);

/// GUI-plane millimeters to world meters for a plane attached to `target`.
Eigen::Vector3d gui_to_world(const kin::RigidTransform& target, const Eigen::Vector2d& gui_mm);

struct WorldRect {
    ButtonId id;
    Action action = Action::PosX;
    std::array<Eigen::Vector3d, 4> corners;  // counter-clockwise from the min corner
};

std::vector<WorldRect> gui_world_pose(const kin::RigidTransform& target, const GuiLayout& layout);

/**
 * Homography from normalized camera image coordinates ([0,1]^2) to GUI-plane
 * millimeters, from the four plane corners as seen by the camera.
 */
Homography camera_to_gui(const CameraIntrinsics& intr, const kin::RigidTransform& cam_pose,
                         const kin::RigidTransform& target, const GuiLayout& layout);

/// Where a GUI-plane point shows up in the normalized camera image.
Eigen::Vector2d gui_to_image(const CameraIntrinsics& intr, const kin::RigidTransform& cam_pose,
                             const kin::RigidTransform& target, const Eigen::Vector2d& gui_mm);

}  // namespace cobotar::projection
