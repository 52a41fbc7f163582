#include "cobotar/simcore.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

namespace cobotar::sim {

std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::CobotAR: return "cobotar";
        case Mode::Gamepad: return "gamepad";
        case Mode::Pendant: return "pendant";
    }
    return "?";
}

Mode mode_from_string(std::string_view s) {
    if (s == "cobotar") return Mode::CobotAR;
    if (s == "gamepad") return Mode::Gamepad;
    if (s == "pendant") return Mode::Pendant;
    throw SimError("unknown mode \"" + std::string(s) + "\" (expected cobotar, gamepad or pendant)");
}

kin::JointVector SimConfig::default_home() {
    constexpr double half_pi = std::numbers::pi / 2.0;
    kin::JointVector q(6);
    // Tool pointing straight down about 0.3 m in front of the base, clear of
    // the shoulder and wrist singularities over the whole default square.
    const double q1 = -0.28, q2 = -1.64, q3 = 1.89;
    q << q1, q2, q3, -half_pi - (q2 + q3), -half_pi, q1;
    return q;
}

kin::IkOptions SimConfig::tight_ik() {
    kin::IkOptions opts;
    opts.position_tolerance = 1e-8;
    opts.orientation_tolerance = 1e-8;
    return opts;
}

metrics::SquareTask resolve_task(const SimConfig& cfg) {
    metrics::SquareTask task;
    task.side = cfg.task_side_mm;
    if (!(task.side > 0.0)) throw SimError("task side must be positive");
    if (cfg.task_center_mm) {
        task.center = *cfg.task_center_mm;
    } else {
        task.center = kin::end_frame(cfg.ur3, cfg.home_q).translation.head<2>() * 1000.0;
    }
    return task;
}

Eigen::Vector2d interpret_command(Mode mode, const Command& cmd, const SimConfig& cfg) {
    return std::visit(
        [&](const auto& c) -> Eigen::Vector2d {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, NoCommand>) {
                return Eigen::Vector2d::Zero();
            } else if constexpr (std::is_same_v<T, ButtonHeld>) {
                if (mode != Mode::CobotAR) throw IllegalCommandForMode("projected buttons are only used in cobotar mode");
                return cfg.speed_mm_s * projection::action_direction(cfg.layout.button(c.button).action);
            } else if constexpr (std::is_same_v<T, PendantHeld>) {
                if (mode != Mode::Pendant) throw IllegalCommandForMode("pendant input outside pendant mode");
                return cfg.speed_mm_s * projection::action_direction(c.action);
            } else {
                if (mode != Mode::Gamepad) throw IllegalCommandForMode("stick input outside gamepad mode");
                const Eigen::Vector2d s(std::clamp(c.x, -1.0, 1.0), std::clamp(c.y, -1.0, 1.0));
                if (s.norm() < cfg.gamepad_deadzone) return Eigen::Vector2d::Zero();
                return cfg.gamepad_vmax_mm_s * s;
            }
        },
        cmd);
}

std::optional<projection::ButtonId> WorldState::active_button(const SimConfig& cfg) const {
    switch (mode) {
        case Mode::CobotAR:
            return detector.active_button ? detector.active_button : explicit_button;
        case Mode::Pendant:
            if (pendant.effective) return cfg.layout.button_for(*pendant.effective).id;
            return std::nullopt;
        case Mode::Gamepad:
            return std::nullopt;
    }
    return std::nullopt;
}

namespace {

void refresh_derived(WorldState& w, const SimConfig& cfg) {
    w.ur3_tcp = kin::end_frame(cfg.ur3, w.ur3_q);
    w.projection_target = kin::projection_target_pose(w.ur3_q, cfg.target_chain);
    w.follower = kin::follower_pose(w.projection_target, cfg.standoff_m);
    w.gui_world = projection::gui_world_pose(w.projection_target, cfg.layout);
    w.cam_to_gui = projection::camera_to_gui(cfg.camera, w.follower, w.projection_target, cfg.layout);
}

double next_tick(double t, double dt) { return std::round((t + dt) * 1e9) / 1e9; }

}  // namespace

WorldState make_world(const SimConfig& cfg, Mode mode) {
    if (static_cast<std::size_t>(cfg.home_q.size()) != cfg.ur3.size()) {
        throw SimError("home configuration length does not match the arm chain");
    }
    WorldState w;
    w.mode = mode;
    w.ur3_q = cfg.home_q;
    refresh_derived(w, cfg);
    w.tcp_reference = w.ur3_tcp;
    w.setpoint_mm = w.tcp_mm();
    w.workspace_center_mm = resolve_task(cfg).center;
    return w;
}

WorldState place_tcp(const WorldState& world, const Eigen::Vector2d& xy_mm, const SimConfig& cfg) {
    WorldState w = world;
    kin::RigidTransform target = w.tcp_reference;
    target.translation.head<2>() = xy_mm / 1000.0;
    try {
        w.ur3_q = kin::inverse_kinematics(cfg.ur3, target, w.ur3_q, cfg.ik);
    } catch (const kin::NotConverged& e) {
        throw IkFailure(std::string("cannot reach start position: ") + e.what());
    }
    w.setpoint_mm = xy_mm;
    refresh_derived(w, cfg);
    return w;
}

StepOutcome step(const WorldState& world, const StepInput& input, double dt, const SimConfig& cfg) {
    if (!(dt > 0.0 && dt <= 0.1)) throw SimError("step dt must be in (0, 0.1] s");
    interpret_command(world.mode, input.cmd, cfg);  // legality check only

    StepOutcome out{world, {}};
    WorldState& w = out.world;
    Command effective = input.cmd;

    switch (w.mode) {
        case Mode::CobotAR: {
            for (const auto& obs : input.hands) {
                auto upd = gesture::update_press_detector(w.detector, obs, cfg.layout, w.cam_to_gui, cfg.detector);
                w.detector = std::move(upd.state);
                out.presses.insert(out.presses.end(), upd.events.begin(), upd.events.end());
            }
            if (const auto* held = std::get_if<ButtonHeld>(&input.cmd)) {
                w.explicit_button = held->button;
            } else {
                w.explicit_button.reset();
            }
            if (w.detector.active_button) effective = ButtonHeld{*w.detector.active_button};
            break;
        }
        case Mode::Pendant: {
            std::optional<projection::Action> raw;
            if (const auto* held = std::get_if<PendantHeld>(&input.cmd)) raw = held->action;
            if (raw != w.pendant.raw) {
                w.pendant.pending.emplace_back(w.t + cfg.pendant_latency_s, raw);
                w.pendant.raw = raw;
            }
            while (!w.pendant.pending.empty() && w.pendant.pending.front().first <= w.t + 1e-9) {
                w.pendant.effective = w.pendant.pending.front().second;
                w.pendant.pending.pop_front();
            }
            effective = w.pendant.effective ? Command{PendantHeld{*w.pendant.effective}} : Command{NoCommand{}};
            break;
        }
        case Mode::Gamepad:
            break;
    }

    w.velocity_mm_s = interpret_command(w.mode, effective, cfg);
    const Eigen::Vector2d half = cfg.workspace_mm / 2.0;
    const Eigen::Vector2d lo = w.workspace_center_mm - half, hi = w.workspace_center_mm + half;
    const Eigen::Vector2d next = (w.setpoint_mm + w.velocity_mm_s * dt).cwiseMax(lo).cwiseMin(hi);
    w.velocity_mm_s = (next - w.setpoint_mm) / dt;  // zero along a clamped axis

    if (next != w.setpoint_mm) {
        kin::RigidTransform target = w.tcp_reference;
        target.translation.head<2>() = next / 1000.0;
        try {
            w.ur3_q = kin::inverse_kinematics(cfg.ur3, target, w.ur3_q, cfg.ik);
        } catch (const kin::NotConverged& e) {
            std::ostringstream os;
            os << "IK failure at setpoint (" << next.x() << ", " << next.y() << ") mm: " << e.what();
            throw IkFailure(os.str());
        }
        w.setpoint_mm = next;
        refresh_derived(w, cfg);
    }
    w.t = next_tick(w.t, dt);
    return out;
}

WorldState hold(const WorldState& world, double dt) {
    WorldState w = world;
    w.velocity_mm_s.setZero();
    w.t = next_tick(w.t, dt);
    return w;
}

std::string check_invariants(const WorldState& w, const SimConfig& cfg, double tol) {
    std::ostringstream err;
    const kin::RigidTransform fk = kin::end_frame(cfg.ur3, w.ur3_q);
    if ((fk.translation - w.ur3_tcp.translation).norm() > tol || (fk.rotation - w.ur3_tcp.rotation).norm() > tol) {
        err << "TCP differs from FK(q); ";
    }
    if (!w.ur3_tcp.is_rigid(tol)) err << "TCP not rigid; ";
    if (!w.projection_target.is_rigid(tol)) err << "projection target not rigid; ";
    if (!w.follower.is_rigid(tol)) err << "follower not rigid; ";
    const Eigen::Vector3d to_target = w.projection_target.translation - w.follower.translation;
    if (std::abs(to_target.norm() - cfg.standoff_m) > tol) err << "standoff off by " << to_target.norm() - cfg.standoff_m << "; ";
    const Eigen::Vector3d axis = w.follower.rotation.col(2);
    const double along = to_target.dot(axis);
    const double miss = (to_target - along * axis).norm();
    if (along <= 0.0 || miss > tol) err << "optical axis misses target by " << miss << " m; ";
    for (const auto& q : w.ur3_q) {
        if (q < cfg.ik.limits.lower || q > cfg.ik.limits.upper) err << "joint outside limits; ";
    }
    return err.str();
}

AgentSpec AgentSpec::parse(std::string_view text, Mode mode) {
    AgentSpec spec;
    spec.mode = mode;
    if (text == "perfect") return spec;
    if (text.starts_with("noisy:")) {
        std::string rest(text.substr(6));
        const auto colon = rest.find(':');
        if (colon == std::string::npos) throw SimError("noisy agent must be noisy:SEED:SIGMA");
        try {
            std::size_t used = 0;
            spec.seed = std::stoull(rest.substr(0, colon), &used);
            if (used != colon) throw SimError("bad seed");
            const std::string sig = rest.substr(colon + 1);
            spec.sigma = std::stod(sig, &used);
            if (used != sig.size()) throw SimError("bad sigma");
        } catch (const std::logic_error&) {
            throw SimError("noisy agent must be noisy:SEED:SIGMA, got \"" + std::string(text) + "\"");
        } catch (const SimError&) {
            throw SimError("noisy agent must be noisy:SEED:SIGMA, got \"" + std::string(text) + "\"");
        }
        if (!(spec.sigma >= 0.0)) throw SimError("agent sigma must be non-negative");
        spec.kind = Kind::Noisy;
        return spec;
    }
    throw SimError("unknown agent \"" + std::string(text) + "\" (expected perfect or noisy:SEED:SIGMA)");
}

std::string AgentSpec::describe() const {
    if (kind == Kind::Perfect) return "perfect";
    std::ostringstream os;
    os << "noisy:" << seed << ':' << sigma;
    return os.str();
}

Record session_header(const SimConfig& cfg, Mode mode, const metrics::SquareTask& task, const std::string& agent,
                      long participant) {
    Record r;
    r["kind"] = "session";
    r["v"] = 1;
    r["mode"] = std::string(to_string(mode));
    r["agent"] = agent;
    r["participant"] = participant;
    r["task"] = {{"kind", "square"}, {"center", {task.center.x(), task.center.y()}}, {"side", task.side}};
    r["sim_rate_hz"] = cfg.sim_rate_hz;
    r["sample_rate_hz"] = cfg.sample_rate_hz;
    return r;
}

Record sample_record(const WorldState& w) {
    Record r;
    r["kind"] = "sample";
    r["t"] = w.t;
    Record q = Record::array();
    for (const auto& v : w.ur3_q) q.push_back(v);
    r["q"] = q;
    const auto& p = w.ur3_tcp.translation;
    r["tcp"] = {p.x(), p.y(), p.z()};
    r["mode"] = std::string(to_string(w.mode));
    return r;
}

std::size_t fault_count(const SessionLog& log) {
    std::size_t n = 0;
    for (const auto& r : log.records()) n += r.value("kind", "") == "fault" ? 1 : 0;
    return n;
}

}  // namespace cobotar::sim
