#include "cobotar/simcore.hpp"

#include <cmath>
#include <memory>
#include <random>

namespace cobotar::sim {

namespace {

constexpr double kEps = 1e-9;

struct Leg {
    Eigen::Vector2d from;
    Eigen::Vector2d to;
    projection::Action action;
    Eigen::Vector2d dir() const { return projection::action_direction(action); }
};

std::array<Leg, 4> square_legs(const metrics::SquareTask& task) {
    const auto c = task.corners();
    using projection::Action;
    return {Leg{c[0], c[1], Action::PosX}, Leg{c[1], c[2], Action::PosY}, Leg{c[2], c[3], Action::NegX},
            Leg{c[3], c[0], Action::NegY}};
}

Eigen::Vector2d rest_point(const projection::GuiLayout& layout) {
    if (!projection::hit_test(layout, Eigen::Vector2d::Zero())) return Eigen::Vector2d::Zero();
    for (const auto& corner : layout.plane_corners()) {
        const Eigen::Vector2d p = 0.95 * corner;
        if (!projection::hit_test(layout, p)) return p;
    }
    throw SimError("GUI layout leaves no free spot to rest the hand");
}

/// Camera frames with timestamps in [t, t + dt), by frame index.
class FrameClock {
public:
    explicit FrameClock(double rate) : rate_(rate) {}

    template <typename Fn>
    void frames_in(double t, double dt, Fn&& fn) {
        while (static_cast<double>(next_) / rate_ < t + dt - kEps) {
            if (static_cast<double>(next_) / rate_ >= t - kEps) fn(next_, static_cast<double>(next_) / rate_);
            ++next_;
        }
    }

private:
    double rate_;
    long next_ = 0;
};

class Operator {
public:
    virtual ~Operator() = default;
    /// Input for the step starting at w.t.
    virtual StepInput act(const WorldState& w, double dt) = 0;
    /// Called with the world after each accepted or held step.
    virtual void observe(const WorldState& /*w*/, double /*step_start*/) {}
    /// True once the final release has been issued.
    virtual bool finished() const = 0;
};

struct Scene {
    const SimConfig& cfg;
    std::array<Leg, 4> legs;
    Eigen::Vector2d rest;

    gesture::GestureObservation hand(const WorldState& w, double ts, gesture::GestureLabel g,
                                     const Eigen::Vector2d& gui_mm) const {
        return {ts, g, projection::gui_to_image(cfg.camera, w.follower, w.projection_target, gui_mm)};
    }
    Eigen::Vector2d button_center(int leg) const { return cfg.layout.button_for(legs[leg].action).rect.center(); }
};

// Robot-level schedule is exact: every side takes side/speed seconds and
// every corner pause is switch_latency. Interface latencies are compensated
// by issuing inputs early.
class PerfectOperator : public Operator {
public:
    PerfectOperator(const AgentSpec& spec, const Scene& scene)
        : spec_(spec), scene_(scene), clock_(scene.cfg.camera_rate_hz) {
        const double side_time = scene.legs[0].from.isApprox(scene.legs[0].to) ? 0.0
                                                                                 : (scene.legs[0].to - scene.legs[0].from).norm() / spec.speed_mm_s;
        const double t0 = 1.0 + std::ceil(scene.cfg.pendant_latency_s);
        const double cam = scene.cfg.camera_rate_hz;
        const int n = std::max(1, scene.cfg.detector.debounce_frames);
        for (int i = 0; i < 4; ++i) {
            onset_[i] = t0 + i * (side_time + spec.switch_latency_s);
            stop_[i] = onset_[i] + side_time;
            act_frame_[i] = static_cast<long>(std::ceil(onset_[i] * cam - kEps));
            rel_frame_[i] = static_cast<long>(std::ceil(stop_[i] * cam - kEps));
        }
        // Palm has to settle before One can trigger.
        act_frame_[0] = std::max<long>(act_frame_[0], 2 * n - 1);
        for (int i = 1; i < 4; ++i) {
            act_frame_[i] = std::max<long>(act_frame_[i], rel_frame_[i - 1] + 2 * n - 1);
            rel_frame_[i] = std::max(rel_frame_[i], act_frame_[i] + 1);
        }
        n_ = n;
    }

    StepInput act(const WorldState& w, double dt) override {
        StepInput in;
        const double t = w.t;
        switch (spec_.mode) {
            case Mode::Gamepad:
                for (int i = 0; i < 4; ++i) {
                    if (t >= onset_[i] - kEps && t < stop_[i] - kEps) {
                        const Eigen::Vector2d d = scene_.legs[i].dir();
                        in.cmd = Stick{d.x(), d.y()};
                    }
                }
                break;
            case Mode::Pendant: {
                const double lat = scene_.cfg.pendant_latency_s;
                for (int i = 0; i < 4; ++i) {
                    if (t >= onset_[i] - lat - kEps && t < stop_[i] - lat - kEps) {
                        in.cmd = PendantHeld{scene_.legs[i].action};
                    }
                }
                break;
            }
            case Mode::CobotAR:
                clock_.frames_in(t, dt, [&](long k, double ts) { in.hands.push_back(frame(w, k, ts)); });
                break;
        }
        return in;
    }

    void observe(const WorldState& w, double) override { last_t_ = w.t; }

    bool finished() const override {
        switch (spec_.mode) {
            case Mode::Gamepad: return last_t_ >= stop_[3] - kEps;
            case Mode::Pendant: return last_t_ >= stop_[3] - scene_.cfg.pendant_latency_s - kEps;
            case Mode::CobotAR: return last_frame_ >= rel_frame_[3];
        }
        return false;
    }

private:
    gesture::GestureObservation frame(const WorldState& w, long k, double ts) {
        using gesture::GestureLabel;
        last_frame_ = k;
        const long lead = n_ - 1;
        if (k < act_frame_[0] - lead) return scene_.hand(w, ts, GestureLabel::Palm, scene_.button_center(0));
        for (int i = 0; i < 4; ++i) {
            if (k >= act_frame_[i] - lead && k < rel_frame_[i]) {
                return scene_.hand(w, ts, GestureLabel::One, scene_.button_center(i));
            }
            const long next_start = i < 3 ? act_frame_[i + 1] - lead : std::numeric_limits<long>::max();
            if (k >= rel_frame_[i] && k < next_start) {
                return i < 3 ? scene_.hand(w, ts, GestureLabel::Palm, scene_.button_center(i + 1))
                             : scene_.hand(w, ts, GestureLabel::Palm, scene_.rest);
            }
        }
        return scene_.hand(w, ts, GestureLabel::Palm, scene_.rest);
    }

    AgentSpec spec_;
    const Scene& scene_;
    FrameClock clock_;
    std::array<double, 4> onset_{}, stop_{};
    std::array<long, 4> act_frame_{}, rel_frame_{};
    long n_ = 3;
    long last_frame_ = -1;
    double last_t_ = 0.0;
};

// Closed-loop operator: waits for the robot to stop, pauses, drives until it
// sees the TCP cross the next corner, then releases after a reaction delay.
// Interface latency is not anticipated. Heading error only shows on the
// stick; buttons can only move along one axis.
class NoisyOperator : public Operator {
public:
    NoisyOperator(const AgentSpec& spec, const Scene& scene)
        : spec_(spec), scene_(scene), clock_(scene.cfg.camera_rate_hz), rng_(spec.seed) {
        decide_at_ = 1.0 + std::ceil(scene.cfg.pendant_latency_s) + reaction();
    }

    StepInput act(const WorldState& w, double dt) override {
        const double t = w.t;
        const Leg& leg = scene_.legs[leg_];

        if (phase_ == Phase::Pause && t >= decide_at_ - kEps) {
            phase_ = Phase::Drive;
            next_aim_ = t;
        }
        if (phase_ == Phase::Drive && (leg.to - w.tcp_mm()).dot(leg.dir()) <= 0.0) {
            phase_ = Phase::Releasing;
            release_at_ = t + reaction();
        }
        if (phase_ == Phase::Releasing && t >= release_at_ - kEps) phase_ = Phase::WaitStop;

        const bool driving = phase_ == Phase::Drive || phase_ == Phase::Releasing;
        StepInput in;
        switch (spec_.mode) {
            case Mode::Gamepad:
                if (driving) {
                    if (t >= next_aim_ - kEps) {
                        aim(w, leg);
                        next_aim_ = t + scene_.cfg.agent.correction_interval_s;
                    }
                    in.cmd = stick_;
                }
                break;
            case Mode::Pendant:
                if (driving) in.cmd = PendantHeld{leg.action};
                break;
            case Mode::CobotAR:
                clock_.frames_in(t, dt, [&](long, double ts) { in.hands.push_back(frame(w, ts, driving)); });
                break;
        }
        return in;
    }

    void observe(const WorldState& w, double step_start) override {
        if (phase_ != Phase::WaitStop) return;
        if (w.velocity_mm_s.isZero()) {
            if (leg_ == 3) {
                phase_ = Phase::Done;
                return;
            }
            ++leg_;
            phase_ = Phase::Pause;
            decide_at_ = step_start + spec_.switch_latency_s + reaction();
        }
    }

    bool finished() const override { return (phase_ == Phase::WaitStop && leg_ == 3) || phase_ == Phase::Done; }

private:
    enum class Phase { Pause, Drive, Releasing, WaitStop, Done };

    double reaction() { return std::abs(scene_.cfg.agent.reaction_jitter_s * unit_(rng_)); }

    void aim(const WorldState& w, const Leg& leg) {
        const Eigen::Vector2d tcp = w.tcp_mm();
        const double along = (tcp - leg.from).dot(leg.dir());
        const Eigen::Vector2d target = leg.from + (along + scene_.cfg.agent.lookahead_mm) * leg.dir();
        Eigen::Vector2d d = target - tcp;
        d.normalize();
        const double err = spec_.sigma * unit_(rng_);
        const Eigen::Vector2d r(std::cos(err) * d.x() - std::sin(err) * d.y(), std::sin(err) * d.x() + std::cos(err) * d.y());
        stick_ = Stick{r.x(), r.y()};
    }

    gesture::GestureObservation frame(const WorldState& w, double ts, bool driving) {
        using gesture::GestureLabel;
        const Eigen::Vector2d here = scene_.button_center(leg_);
        if (!driving) {
            if (phase_ == Phase::Done || (phase_ == Phase::WaitStop && leg_ == 3)) {
                return scene_.hand(w, ts, GestureLabel::Palm, scene_.rest);
            }
            const int next = phase_ == Phase::WaitStop ? leg_ + 1 : leg_;
            return scene_.hand(w, ts, GestureLabel::Palm, scene_.button_center(next));
        }
        // Retry when One was shown before Palm had settled.
        const auto& det = w.detector;
        if (det.stable_gesture == GestureLabel::One && !det.active_button) retry_ = true;
        if (retry_ && det.stable_gesture == GestureLabel::Palm) retry_ = false;
        return scene_.hand(w, ts, retry_ ? GestureLabel::Palm : GestureLabel::One, here);
    }

    AgentSpec spec_;
    const Scene& scene_;
    FrameClock clock_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> unit_{0.0, 1.0};

    Phase phase_ = Phase::Pause;
    int leg_ = 0;
    double decide_at_ = 0.0;
    double release_at_ = 0.0;
    double next_aim_ = 0.0;
    Stick stick_{};
    bool retry_ = false;
};

Record input_record(double t, const Command& cmd) {
    Record r;
    r["kind"] = "input";
    r["t"] = t;
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, NoCommand>) {
                r["input"] = "none";
            } else if constexpr (std::is_same_v<T, ButtonHeld>) {
                r["input"] = "button";
                r["button"] = c.button.value;
            } else if constexpr (std::is_same_v<T, Stick>) {
                r["input"] = "stick";
                r["x"] = c.x;
                r["y"] = c.y;
            } else {
                r["input"] = "pendant";
                r["action"] = std::string(projection::to_string(c.action));
                r["pressed"] = true;
            }
        },
        cmd);
    return r;
}

Record hand_record(const gesture::GestureObservation& obs) {
    Record r;
    r["kind"] = "input";
    r["t"] = obs.timestamp;
    r["input"] = "hand";
    r["gesture"] = std::string(gesture::to_string(obs.label));
    r["tip"] = {obs.fingertip.x(), obs.fingertip.y()};
    return r;
}

Record marker_record(double t, const char* event) {
    Record r;
    r["kind"] = "input";
    r["t"] = t;
    r["input"] = "task";
    r["event"] = event;
    return r;
}

Record press_record(const gesture::PressEvent& e, const SimConfig& cfg) {
    Record r;
    r["kind"] = "press";
    r["t"] = e.timestamp;
    r["button"] = e.button.value;
    r["action"] = std::string(projection::to_string(cfg.layout.button(e.button).action));
    r["event"] = std::string(gesture::to_string(e.kind));
    return r;
}

Record fault_record(double t, const std::string& message) {
    Record r;
    r["kind"] = "fault";
    r["t"] = t;
    r["message"] = message;
    return r;
}

}  // namespace

SessionLog run_scripted_agent(const AgentSpec& spec, const metrics::SquareTask& task, const SimConfig& base) {
    if (!(spec.speed_mm_s > 0.0)) throw SimError("agent speed must be positive");
    if (!(spec.sigma >= 0.0)) throw SimError("agent sigma must be non-negative");
    if (!(spec.switch_latency_s >= 0.0)) throw SimError("agent switch latency must be non-negative");

    SimConfig cfg = base;
    cfg.speed_mm_s = spec.speed_mm_s;
    cfg.gamepad_vmax_mm_s = spec.speed_mm_s;
    cfg.task_center_mm = task.center;
    cfg.task_side_mm = task.side;
    const double dt = cfg.dt();

    const Scene scene{cfg, square_legs(task), rest_point(cfg.layout)};
    std::unique_ptr<Operator> op;
    if (spec.kind == AgentSpec::Kind::Perfect) {
        op = std::make_unique<PerfectOperator>(spec, scene);
    } else {
        op = std::make_unique<NoisyOperator>(spec, scene);
    }

    SessionLog log;
    const long participant = spec.kind == AgentSpec::Kind::Noisy ? static_cast<long>(spec.seed) : 0;
    log.append(session_header(cfg, spec.mode, task, spec.describe(), participant));

    WorldState world = place_tcp(make_world(cfg, spec.mode), task.corners()[0], cfg);
    log.append(sample_record(world));

    const double nominal = 4.0 * task.side / spec.speed_mm_s + 3.0 * spec.switch_latency_s;
    const long max_steps = static_cast<long>(std::ceil((3.0 * nominal + 30.0) * cfg.sim_rate_hz));
    const double sample_period = 1.0 / cfg.sample_rate_hz;
    long samples_taken = 1;
    int faults = 0;
    bool started = false;
    Command last_cmd = NoCommand{};

    for (long k = 0; k < max_steps; ++k) {
        const double t = world.t;
        const StepInput in = op->act(world, dt);

        std::vector<gesture::PressEvent> presses;
        bool moved = false;
        std::optional<std::string> fault;
        try {
            StepOutcome out = step(world, in, dt, cfg);
            moved = !out.world.velocity_mm_s.isZero();
            presses = std::move(out.presses);
            world = std::move(out.world);
        } catch (const IkFailure& e) {
            fault = e.what();
            world = hold(world, dt);
        }
        op->observe(world, t);

        if (!started && moved) {
            log.append(marker_record(t, "start"));
            started = true;
        }
        const bool done = started && !moved && op->finished();
        if (done) log.append(marker_record(t, "end"));

        if (!(in.cmd == last_cmd)) {
            log.append(input_record(t, in.cmd));
            last_cmd = in.cmd;
        }
        for (const auto& h : in.hands) log.append(hand_record(h));
        for (const auto& p : presses) log.append(press_record(p, cfg));
        if (fault) {
            log.append(fault_record(t, *fault));
            if (++faults > cfg.max_faults) break;
        }
        if (world.t >= static_cast<double>(samples_taken) * sample_period - kEps) {
            log.append(sample_record(world));
            ++samples_taken;
        }
        if (done) break;
    }
    return log;
}

}  // namespace cobotar::sim
