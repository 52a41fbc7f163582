#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cobotar::kin {

using JointVector = Eigen::VectorXd;

/// One joint of a standard Denavit-Hartenberg chain. Angles in radians, lengths in meters.
struct DHRow {
    double theta_offset = 0.0;
    double a = 0.0;
    double d = 0.0;
    double alpha = 0.0;
};

/**
 * Ordered list of DH rows, base to tip.
 *
 * Uses the standard (distal) convention: each row contributes
 * Rz(theta_offset + q) * Tz(d) * Tx(a) * Rx(alpha).
 */
class DHChain {
public:
    DHChain() = default;
    explicit DHChain(std::vector<DHRow> rows);

    /// UR3 arm, six joints.
    static DHChain ur3();
    /// Two-joint chain from the UR3 base to the midpoint of the projected link.
    static DHChain projection_target();

    static DHChain from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;

    const std::vector<DHRow>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

    /// Concatenation, used to check composition of partial chains.
    DHChain operator+(const DHChain& tail) const;

private:
    std::vector<DHRow> rows_;
};

struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static RigidTransform identity() { return {}; }
    static RigidTransform rot_x(double angle);
    static RigidTransform rot_y(double angle);
    static RigidTransform rot_z(double angle);
    static RigidTransform translate(const Eigen::Vector3d& t);

    RigidTransform operator*(const RigidTransform& rhs) const;
    Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation * p + translation; }
    RigidTransform inverse() const;
    Eigen::Matrix4d matrix() const;

    /// RᵀR = I and det R = +1 within `tol`.
    bool is_rigid(double tol = 1e-9) const;
};

/// ZYX Euler pose: R = Rz(alpha) * Ry(beta) * Rx(gamma).
struct PoseEuler {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;

    Eigen::Matrix3d rotation() const;
};

struct JointLimits {
    double lower = -2.0 * 3.14159265358979323846;
    double upper = 2.0 * 3.14159265358979323846;
};

struct IkOptions {
    double position_tolerance = 1e-4;     // m
    double orientation_tolerance = 1e-3;  // rad
    double damping = 0.05;
    double jacobian_step = 1e-6;          // rad, central differences
    int max_iterations = 300;
    JointLimits limits{};
};

class KinematicsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotConverged : public KinematicsError {
public:
    NotConverged(int iterations, double position_error, double orientation_error);

    int iterations;
    double position_error;
    double orientation_error;
};

RigidTransform dh_transform(const DHRow& row, double theta);

/// Cumulative frame of every joint; the last entry is the end frame.
std::vector<RigidTransform> forward_kinematics(const DHChain& chain, const JointVector& q);

/// End frame only.
RigidTransform end_frame(const DHChain& chain, const JointVector& q);

/**
 * ZYX Euler extraction.
 *
 * When |cos(beta)| < 1e-8 the decomposition is not unique; gamma is then set
 * to zero and the remaining rotation about z is reported in alpha.
 */
PoseEuler extract_pose(const RigidTransform& T);

/// Position and orientation residual between two frames: (|Δp| in m, rotation angle in rad).
std::pair<double, double> pose_error(const RigidTransform& target, const RigidTransform& actual);

/**
 * Damped least squares on the 6-D pose error twist with a central-difference
 * Jacobian. Throws NotConverged if the tolerances are not met within
 * opts.max_iterations.
 */
JointVector inverse_kinematics(const DHChain& chain, const RigidTransform& target,
                               const JointVector& seed, const IkOptions& opts = {});

/// Pose of the projection surface midpoint; only q[0] and q[1] are used.
RigidTransform projection_target_pose(const JointVector& q_ur3,
                                      const DHChain& chain = DHChain::projection_target());

/**
 * Camera-projector pose that keeps `target` in view.
 *
 * Sits `standoff` meters along the target's local +z (surface normal) and
 * looks back at the target: its local +z points at the target position.
 */
RigidTransform follower_pose(const RigidTransform& target, double standoff);

}  // namespace cobotar::kin
