#pragma once

#include "cobotar/gesture.hpp"
#include "cobotar/kinematics.hpp"
#include "cobotar/metrics.hpp"
#include "cobotar/projection.hpp"
#include "cobotar/session_log.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

namespace cobotar::sim {

enum class Mode { CobotAR, Gamepad, Pendant };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

class SimError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IllegalCommandForMode : public SimError {
public:
    using SimError::SimError;
};

class IkFailure : public SimError {
public:
    using SimError::SimError;
};

/// Operator-model knobs that have no counterpart in the measured study.
struct AgentTuning {
    double reaction_jitter_s = 0.1;     // sd of the half-normal delay on each human decision
    double correction_interval_s = 0.25;  // stick re-aim period
    double lookahead_mm = 30.0;           // stick aim point ahead on the current side
};

struct SimConfig {
    double sim_rate_hz = 50.0;
    double sample_rate_hz = 50.0;
    double camera_rate_hz = 30.0;

    double speed_mm_s = 25.0;          // button and pendant jog speed
    double gamepad_vmax_mm_s = 25.0;
    double gamepad_deadzone = 0.1;
    double pendant_latency_s = 0.3;

    double standoff_m = 0.6;
    Eigen::Vector2d workspace_mm{400.0, 400.0};

    kin::DHChain ur3 = kin::DHChain::ur3();
    kin::DHChain target_chain = kin::DHChain::projection_target();
    kin::JointVector home_q = default_home();
    kin::IkOptions ik = tight_ik();

    projection::GuiLayout layout = projection::GuiLayout::standard();
    projection::CameraIntrinsics camera{};
    gesture::PressDetectorConfig detector{};

    double task_side_mm = 150.0;
    std::optional<Eigen::Vector2d> task_center_mm;  // default: centred on the home TCP

    AgentTuning agent{};
    int max_faults = 50;

    double dt() const { return 1.0 / sim_rate_hz; }
    static kin::JointVector default_home();
    static kin::IkOptions tight_ik();
};

/// Square centred on the home TCP unless a center is configured.
metrics::SquareTask resolve_task(const SimConfig& cfg);

struct NoCommand {
    bool operator==(const NoCommand&) const = default;
};
struct ButtonHeld {
    projection::ButtonId button;
    bool operator==(const ButtonHeld&) const = default;
};
struct Stick {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Stick&) const = default;
};
struct PendantHeld {
    projection::Action action = projection::Action::PosX;
    bool operator==(const PendantHeld&) const = default;
};

using Command = std::variant<NoCommand, ButtonHeld, Stick, PendantHeld>;

/// Planar TCP velocity in mm/s for `cmd` under `mode`.
Eigen::Vector2d interpret_command(Mode mode, const Command& cmd, const SimConfig& cfg);

/// Pendant presses reach the controller after a fixed latency.
struct PendantChannel {
    std::optional<projection::Action> raw;
    std::optional<projection::Action> effective;
    std::deque<std::pair<double, std::optional<projection::Action>>> pending;
};

struct WorldState {
    double t = 0.0;
    Mode mode = Mode::CobotAR;

    kin::JointVector ur3_q;
    kin::RigidTransform ur3_tcp;        // FK(ur3_q)
    kin::RigidTransform tcp_reference;  // frozen orientation and height
    Eigen::Vector2d setpoint_mm = Eigen::Vector2d::Zero();
    Eigen::Vector2d velocity_mm_s = Eigen::Vector2d::Zero();
    Eigen::Vector2d workspace_center_mm = Eigen::Vector2d::Zero();

    kin::RigidTransform projection_target;
    kin::RigidTransform follower;
    std::vector<projection::WorldRect> gui_world;
    projection::Homography cam_to_gui;

    gesture::PressDetectorState detector;
    PendantChannel pendant;
    std::optional<projection::ButtonId> explicit_button;  // last ButtonHeld seen in CobotAR mode

    Eigen::Vector2d tcp_mm() const { return ur3_tcp.translation.head<2>() * 1000.0; }
    /// Button currently driving the robot, if any.
    std::optional<projection::ButtonId> active_button(const SimConfig& cfg) const;
};

WorldState make_world(const SimConfig& cfg, Mode mode);

/// Moves the TCP to `xy_mm` through IK, as when the arm is sent to its start position.
WorldState place_tcp(const WorldState& world, const Eigen::Vector2d& xy_mm, const SimConfig& cfg);

struct StepInput {
    Command cmd = NoCommand{};
    std::vector<gesture::GestureObservation> hands;  // camera frames inside this step
};

struct StepOutcome {
    WorldState world;
    std::vector<gesture::PressEvent> presses;
};

/**
 * Advances the world by dt in (0, 0.1] s.
 *
 * Throws IkFailure if the new setpoint cannot be reached; the input world is
 * never modified, so the caller can hold it.
 */
StepOutcome step(const WorldState& world, const StepInput& input, double dt, const SimConfig& cfg);

/// Reject-and-hold: time advances, nothing else changes.
WorldState hold(const WorldState& world, double dt);

/// Checks FK consistency, rigidity, follower standoff and pointing. Returns an empty string if valid.
std::string check_invariants(const WorldState& w, const SimConfig& cfg, double tol = 1e-9);

struct AgentSpec {
    enum class Kind { Perfect, Noisy };
    Kind kind = Kind::Perfect;
    std::uint64_t seed = 0;
    double sigma = 0.0;  // heading error sd, rad
    Mode mode = Mode::CobotAR;
    double speed_mm_s = 25.0;
    double switch_latency_s = 0.5;

    /// "perfect" or "noisy:SEED:SIGMA"
    static AgentSpec parse(std::string_view text, Mode mode);
    std::string describe() const;
};

/// Session header record.
Record session_header(const SimConfig& cfg, Mode mode, const metrics::SquareTask& task, const std::string& agent,
                      long participant);
Record sample_record(const WorldState& w);

/**
 * Runs a scripted operator around the square (+x, +y, -x, -y from the min
 * corner) and returns the full session log. Task markers bracket the
 * robot's motion. Faults are logged; the run aborts once cfg.max_faults is
 * exceeded.
 */
SessionLog run_scripted_agent(const AgentSpec& spec, const metrics::SquareTask& task, const SimConfig& cfg);

/// Fault records in a log.
std::size_t fault_count(const SessionLog& log);

}  // namespace cobotar::sim
