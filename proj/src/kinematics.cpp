#include "cobotar/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cobotar::kin {

namespace {

Eigen::Vector3d rotation_log(const Eigen::Matrix3d& R) {
    Eigen::Quaterniond quat(R);
    if (quat.w() < 0.0) quat.coeffs() = -quat.coeffs();
    const Eigen::Vector3d v = quat.vec();
    const double n = v.norm();
    if (n < 1e-300) return Eigen::Vector3d::Zero();
    return (2.0 * std::atan2(n, quat.w()) / n) * v;
}

using Twist = Eigen::Matrix<double, 6, 1>;

Twist pose_twist(const RigidTransform& target, const RigidTransform& actual) {
    Twist e;
    e.head<3>() = target.translation - actual.translation;
    e.tail<3>() = rotation_log(target.rotation * actual.rotation.transpose());
    return e;
}

void require_finite(const DHRow& row) {
    if (!std::isfinite(row.theta_offset) || !std::isfinite(row.a) || !std::isfinite(row.d) ||
        !std::isfinite(row.alpha)) {
        throw KinematicsError("DH row has non-finite parameters");
    }
}

}  // namespace

DHChain::DHChain(std::vector<DHRow> rows) : rows_(std::move(rows)) {
    if (rows_.empty()) throw KinematicsError("DH chain needs at least one row");
    for (const auto& r : rows_) require_finite(r);
}

DHChain DHChain::ur3() {
    constexpr double half_pi = std::numbers::pi / 2.0;
    return DHChain({
        {0.0, 0.0, 0.15185, half_pi},
        {0.0, -0.24355, 0.0, 0.0},
        {0.0, -0.2132, 0.0, 0.0},
        {0.0, 0.0, 0.13105, half_pi},
        {0.0, 0.0, 0.08535, -half_pi},
        {0.0, 0.0, 0.0921, 0.0},
    });
}

DHChain DHChain::projection_target() {
    return DHChain({
        {0.0, 0.0, 0.15185, std::numbers::pi / 2.0},
        {0.0, -0.12176, 0.40, 0.0},
    });
}

DHChain DHChain::from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("rows") || !doc.at("rows").is_array()) {
        throw KinematicsError("chain document must be an object with a \"rows\" array");
    }
    std::vector<DHRow> rows;
    for (const auto& r : doc.at("rows")) {
        DHRow row;
        row.theta_offset = r.value("theta_offset", 0.0);
        row.a = r.at("a").get<double>();
        row.d = r.at("d").get<double>();
        row.alpha = r.at("alpha").get<double>();
        rows.push_back(row);
    }
    return DHChain(std::move(rows));
}

nlohmann::json DHChain::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rows_) {
        rows.push_back({{"theta_offset", r.theta_offset}, {"a", r.a}, {"d", r.d}, {"alpha", r.alpha}});
    }
    return {{"rows", rows}};
}

DHChain DHChain::operator+(const DHChain& tail) const {
    std::vector<DHRow> rows = rows_;
    rows.insert(rows.end(), tail.rows_.begin(), tail.rows_.end());
    return DHChain(std::move(rows));
}

RigidTransform RigidTransform::rot_x(double angle) {
    RigidTransform T;
    T.rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitX()).toRotationMatrix();
    return T;
}

RigidTransform RigidTransform::rot_y(double angle) {
    RigidTransform T;
    T.rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitY()).toRotationMatrix();
    return T;
}

RigidTransform RigidTransform::rot_z(double angle) {
    RigidTransform T;
    T.rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    return T;
}

RigidTransform RigidTransform::translate(const Eigen::Vector3d& t) {
    RigidTransform T;
    T.translation = t;
    return T;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
    RigidTransform out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
}

Eigen::Matrix4d RigidTransform::matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

bool RigidTransform::is_rigid(double tol) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Eigen::Matrix3d PoseEuler::rotation() const {
    return (Eigen::AngleAxisd(alpha, Eigen::Vector3d::UnitZ()) *
            Eigen::AngleAxisd(beta, Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(gamma, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

NotConverged::NotConverged(int iters, double pos_err, double ori_err)
    : KinematicsError([&] {
          std::ostringstream os;
          os << "IK did not converge after " << iters << " iterations (position error " << pos_err
             << " m, orientation error " << ori_err << " rad)";
          return os.str();
      }()),
      iterations(iters),
      position_error(pos_err),
      orientation_error(ori_err) {}

RigidTransform dh_transform(const DHRow& row, double theta) {
    const double th = row.theta_offset + theta;
    const double ct = std::cos(th), st = std::sin(th);
    const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
    RigidTransform T;
    T.rotation << ct, -st * ca, st * sa,
                  st, ct * ca, -ct * sa,
                  0.0, sa, ca;
    T.translation << row.a * ct, row.a * st, row.d;
    return T;
}

std::vector<RigidTransform> forward_kinematics(const DHChain& chain, const JointVector& q) {
    if (static_cast<std::size_t>(q.size()) != chain.size()) {
        throw KinematicsError("joint vector length " + std::to_string(q.size()) +
                              " does not match chain length " + std::to_string(chain.size()));
    }
    std::vector<RigidTransform> frames;
    frames.reserve(chain.size());
    RigidTransform acc;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        acc = acc * dh_transform(chain.rows()[i], q[static_cast<Eigen::Index>(i)]);
        frames.push_back(acc);
    }
    return frames;
}

RigidTransform end_frame(const DHChain& chain, const JointVector& q) {
    if (static_cast<std::size_t>(q.size()) != chain.size()) {
        throw KinematicsError("joint vector length " + std::to_string(q.size()) +
                              " does not match chain length " + std::to_string(chain.size()));
    }
    RigidTransform acc;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        acc = acc * dh_transform(chain.rows()[i], q[static_cast<Eigen::Index>(i)]);
    }
    return acc;
}

PoseEuler extract_pose(const RigidTransform& T) {
    const auto& r = T.rotation;
    PoseEuler pose;
    pose.position = T.translation;
    const double cb = std::hypot(r(0, 0), r(1, 0));
    pose.beta = std::atan2(-r(2, 0), cb);
    if (cb < 1e-8) {
        // gimbal lock: only alpha - gamma (or alpha + gamma) is observable
        pose.beta = r(2, 0) < 0.0 ? std::numbers::pi / 2.0 : -std::numbers::pi / 2.0;
        pose.gamma = 0.0;
        pose.alpha = std::atan2(-r(0, 1), r(1, 1));
    } else {
        pose.alpha = std::atan2(r(1, 0), r(0, 0));
        pose.gamma = std::atan2(r(2, 1), r(2, 2));
    }
    return pose;
}

std::pair<double, double> pose_error(const RigidTransform& target, const RigidTransform& actual) {
    const Twist e = pose_twist(target, actual);
    return {e.head<3>().norm(), e.tail<3>().norm()};
}

JointVector inverse_kinematics(const DHChain& chain, const RigidTransform& target, const JointVector& seed,
                               const IkOptions& opts) {
    if (static_cast<std::size_t>(seed.size()) != chain.size()) {
        throw KinematicsError("IK seed length does not match chain length");
    }
    if (!target.is_rigid(1e-6)) throw KinematicsError("IK target is not a rigid transform");

    const Eigen::Index n = seed.size();
    JointVector q = seed;
    // Levenberg-Marquardt style: the damping starts at opts.damping, shrinks after
    // a step that lowers the residual and grows after one that does not.
    double lambda = opts.damping;
    const double h = opts.jacobian_step;
    Eigen::Matrix<double, 6, Eigen::Dynamic> J(6, n);

    Twist err = pose_twist(target, end_frame(chain, q));
    bool fresh_jacobian = false;
    for (int iter = 0;; ++iter) {
        const double pos_err = err.head<3>().norm();
        const double ori_err = err.tail<3>().norm();
        if (pos_err <= opts.position_tolerance && ori_err <= opts.orientation_tolerance) return q;
        if (iter >= opts.max_iterations) throw NotConverged(iter, pos_err, ori_err);

        if (!fresh_jacobian) {
            for (Eigen::Index j = 0; j < n; ++j) {
                JointVector qp = q, qm = q;
                qp[j] += h;
                qm[j] -= h;
                const RigidTransform Tp = end_frame(chain, qp);
                const RigidTransform Tm = end_frame(chain, qm);
                J.block<3, 1>(0, j) = (Tp.translation - Tm.translation) / (2.0 * h);
                J.block<3, 1>(3, j) = rotation_log(Tp.rotation * Tm.rotation.transpose()) / (2.0 * h);
            }
            fresh_jacobian = true;
        }

        const Eigen::Matrix<double, 6, 6> JJt =
            J * J.transpose() + lambda * lambda * Eigen::Matrix<double, 6, 6>::Identity();
        JointVector next = q + J.transpose() * JJt.ldlt().solve(err);
        for (Eigen::Index j = 0; j < n; ++j) next[j] = std::clamp(next[j], opts.limits.lower, opts.limits.upper);
        const Twist next_err = pose_twist(target, end_frame(chain, next));
        if (next_err.squaredNorm() < err.squaredNorm()) {
            q = std::move(next);
            err = next_err;
            lambda = std::max(lambda * 0.5, 1e-6);
            fresh_jacobian = false;
        } else {
            lambda = std::min(lambda * 4.0, 1e3);
        }
    }
}

RigidTransform projection_target_pose(const JointVector& q_ur3, const DHChain& chain) {
    if (q_ur3.size() < static_cast<Eigen::Index>(chain.size())) {
        throw KinematicsError("projection target needs the first " + std::to_string(chain.size()) +
                              " UR3 joints");
    }
    return end_frame(chain, q_ur3.head(static_cast<Eigen::Index>(chain.size())));
}

RigidTransform follower_pose(const RigidTransform& target, double standoff) {
    if (!(standoff > 0.0)) throw KinematicsError("follower standoff must be positive");
    RigidTransform out;
    const Eigen::Vector3d normal = target.rotation.col(2);
    out.translation = target.translation + standoff * normal;
    // Rx(pi) flips y and z exactly, so the result stays orthonormal to the bit.
    out.rotation.col(0) = target.rotation.col(0);
    out.rotation.col(1) = -target.rotation.col(1);
    out.rotation.col(2) = -normal;
    return out;
}

}  // namespace cobotar::kin
