#include "cobotar/gateway/protocol.hpp"

#include <algorithm>

#include <cmath>

namespace cobotar::gateway {

namespace {

constexpr double kEps = 1e-9;

struct Violation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const Record& field(const Record& body, const char* key) {
    if (!body.contains(key)) throw Violation(std::string("missing field \"") + key + "\"");
    return body[key];
}

double finite(const Record& body, const char* key) {
    const Record& v = field(body, key);
    if (!v.is_number() || !std::isfinite(v.get<double>())) throw Violation(std::string("\"") + key + "\" must be a number");
    return v.get<double>();
}

Record vec(const Eigen::Vector3d& v) { return Record::array({v.x(), v.y(), v.z()}); }

}  // namespace

ProtocolSession::ProtocolSession(SessionConfig cfg, long participant)
    : cfg_(std::move(cfg)), participant_(participant), mode_(cfg_.mode), world_(sim::make_world(cfg_.sim, mode_)) {
    trace_.push_back(world_.tcp_mm());
}

std::string ProtocolSession::frame(const std::string& type, Record body) {
    Record msg;
    msg["v"] = 1;
    msg["seq"] = ++seq_;
    msg["type"] = type;
    for (auto& [key, value] : body.items()) msg[key] = std::move(value);
    return msg.dump();
}

std::string ProtocolSession::error_frame(const std::string& message) {
    Record body;
    body["message"] = message;
    return frame("error", std::move(body));
}

std::string ProtocolSession::hello() {
    const auto task = cfg_.task();
    Record body;
    body["mode"] = std::string(sim::to_string(mode_));
    body["sim_rate_hz"] = cfg_.sim.sim_rate_hz;
    body["camera_rate_hz"] = cfg_.sim.camera_rate_hz;
    body["layout"] = Record::parse(cfg_.sim.layout.to_json().dump());
    body["task"] = {{"kind", "square"}, {"center", {task.center.x(), task.center.y()}}, {"side", task.side}};
    return frame("session", std::move(body));
}

Reply ProtocolSession::on_message(std::string_view text) {
    Reply out;
    try {
        Record msg;
        try {
            msg = Record::parse(text);
        } catch (const nlohmann::json::parse_error&) {
            throw Violation("malformed JSON");
        }
        if (!msg.is_object()) throw Violation("frame must be a JSON object");
        if (!msg.contains("v") || msg["v"] != 1) throw Violation("unsupported protocol version");
        if (!msg.contains("seq") || !msg["seq"].is_number_integer()) throw Violation("missing integer \"seq\"");
        const long seq = msg["seq"].get<long>();
        if (seq <= last_client_seq_) {
            throw Violation("sequence number " + std::to_string(seq) + " does not follow " + std::to_string(last_client_seq_));
        }
        if (!msg.contains("type") || !msg["type"].is_string()) throw Violation("missing \"type\"");
        const std::string type = msg["type"].get<std::string>();

        if (type == "hand_update") {
            if (msg.contains("lm")) {
                Record doc{{"t", msg.value("t", world_.t)}, {"lm", msg["lm"]}};
                try {
                    (void)gesture::HandFrame::from_json(nlohmann::json::parse(doc.dump()));
                } catch (const std::exception& e) {
                    throw Violation(std::string("bad hand frame: ") + e.what());
                }
            } else {
                const Record& tip = field(msg, "fingertip");
                if (!tip.is_array() || tip.size() != 2 || !tip[0].is_number() || !tip[1].is_number()) {
                    throw Violation("\"fingertip\" must be [u, v]");
                }
                const Record& g = field(msg, "gesture");
                try {
                    (void)gesture::gesture_from_string(g.is_string() ? g.get<std::string>() : std::string());
                } catch (const std::exception& e) {
                    throw Violation(e.what());
                }
            }
        } else if (type == "stick") {
            (void)finite(msg, "x");
            (void)finite(msg, "y");
        } else if (type == "pendant") {
            const Record& a = field(msg, "action");
            try {
                (void)projection::action_from_string(a.is_string() ? a.get<std::string>() : std::string());
            } catch (const std::exception& e) {
                throw Violation(e.what());
            }
            if (!field(msg, "pressed").is_boolean()) throw Violation("\"pressed\" must be a boolean");
        } else if (type == "set_mode") {
            const Record& m = field(msg, "mode");
            try {
                (void)sim::mode_from_string(m.is_string() ? m.get<std::string>() : std::string());
            } catch (const std::exception& e) {
                throw Violation(e.what());
            }
        } else if (type == "task") {
            const Record& e = field(msg, "event");
            if (e != "start" && e != "end") throw Violation("task \"event\" must be start or end");
        } else {
            throw Violation("unknown message type \"" + type + "\"");
        }
        last_client_seq_ = seq;
        queue_.push_back({type, std::move(msg)});
    } catch (const Violation& v) {
        out.frames.push_back(error_frame(v.what()));
        out.close = true;
    }
    return out;
}

void ProtocolSession::log(Record r) {
    if (log_) log_->append(std::move(r));
}

void ProtocolSession::apply(const Inbound& in, Reply& out) {
    const Record& m = in.body;
    const double t = world_.t;
    auto fault = [&](const std::string& message) {
        Record body{{"t", t}, {"message", message}};
        log(Record{{"kind", "fault"}, {"t", t}, {"message", message}});
        out.frames.push_back(frame("fault", std::move(body)));
    };
    auto input = [&](Record fields) {
        Record r{{"kind", "input"}, {"t", t}};
        for (auto& [key, value] : fields.items()) r[key] = std::move(value);
        log(std::move(r));
    };

    if (in.type == "hand_update") {
        if (mode_ != sim::Mode::CobotAR) return;  // the camera is only watched in CobotAR mode
        gesture::GestureObservation obs;
        if (m.contains("lm")) {
            const auto h = gesture::HandFrame::from_json(nlohmann::json{{"t", t}, {"lm", nlohmann::json::parse(m["lm"].dump())}});
            obs = gesture::observe(h, cfg_.sim.detector.classifier);
        } else {
            obs.label = gesture::gesture_from_string(m["gesture"].get<std::string>());
            obs.fingertip = {m["fingertip"][0].get<double>(), m["fingertip"][1].get<double>()};
        }
        obs.timestamp = t;
        input({{"input", "hand"}, {"gesture", std::string(gesture::to_string(obs.label))},
               {"tip", {obs.fingertip.x(), obs.fingertip.y()}}});
        hands_.push_back(obs);
    } else if (in.type == "stick") {
        if (mode_ != sim::Mode::Gamepad) return fault("stick input is not accepted in " + std::string(sim::to_string(mode_)) + " mode");
        held_ = sim::Stick{m["x"].get<double>(), m["y"].get<double>()};
        input({{"input", "stick"}, {"x", m["x"]}, {"y", m["y"]}});
    } else if (in.type == "pendant") {
        if (mode_ != sim::Mode::Pendant) return fault("pendant input is not accepted in " + std::string(sim::to_string(mode_)) + " mode");
        const auto action = projection::action_from_string(m["action"].get<std::string>());
        const bool pressed = m["pressed"].get<bool>();
        if (pressed) {
            held_ = sim::PendantHeld{action};
        } else if (held_ == sim::Command{sim::PendantHeld{action}}) {
            held_ = sim::NoCommand{};
        }
        input({{"input", "pendant"}, {"action", m["action"]}, {"pressed", pressed}});
    } else if (in.type == "set_mode") {
        const auto mode = sim::mode_from_string(m["mode"].get<std::string>());
        if (log_) return fault("mode cannot change during a task");
        if (mode == mode_) return;
        // Keep the arm where it is; interface state starts fresh.
        mode_ = mode;
        world_.mode = mode;
        world_.detector = {};
        world_.pendant = {};
        world_.explicit_button.reset();
        world_.velocity_mm_s.setZero();
        held_ = sim::NoCommand{};
        hands_.clear();
    } else if (in.type == "task") {
        Record body{{"t", t}, {"event", m["event"]}};
        if (m["event"] == "start") {
            if (log_) return fault("task already running");
            auto task = cfg_.task();
            log_.emplace();
            log_->append(sim::session_header(cfg_.sim, mode_, task, "live", participant_));
            log_->append(sim::sample_record(world_));
            input({{"input", "task"}, {"event", "start"}});
            samples_taken_ = static_cast<long>(std::floor(t * cfg_.sim.sample_rate_hz + kEps)) + 1;
        } else {
            if (!log_) return fault("no task running");
            input({{"input", "task"}, {"event", "end"}});
            // close the trajectory at the end marker unless a tick already sampled this instant
            const auto& recs = log_->records();
            const auto last = std::find_if(recs.rbegin(), recs.rend(),
                                           [](const Record& r) { return r.value("kind", "") == "sample"; });
            if (last == recs.rend() || (*last)["t"].get<double>() < world_.t) {
                log_->append(sim::sample_record(world_));
            }
            finished_.push_back(std::move(*log_));
            log_.reset();
        }
        out.frames.push_back(frame("task", std::move(body)));
    }
}

Reply ProtocolSession::tick() {
    Reply out;
    while (!queue_.empty()) {
        apply(queue_.front(), out);
        queue_.pop_front();
    }

    const double t = world_.t;
    sim::StepInput in{held_, std::move(hands_)};
    hands_.clear();
    try {
        auto step = sim::step(world_, in, cfg_.sim.dt(), cfg_.sim);
        world_ = std::move(step.world);
        for (const auto& e : step.presses) {
            const auto& b = cfg_.sim.layout.button(e.button);
            Record body{{"t", e.timestamp},
                        {"button", e.button.value},
                        {"action", std::string(projection::to_string(b.action))},
                        {"event", std::string(gesture::to_string(e.kind))}};
            Record r{{"kind", "press"}};
            for (const auto& [key, value] : body.items()) r[key] = value;
            log(std::move(r));
            out.frames.push_back(frame("press_event", std::move(body)));
        }
    } catch (const sim::SimError& e) {
        world_ = sim::hold(world_, cfg_.sim.dt());
        log(Record{{"kind", "fault"}, {"t", t}, {"message", e.what()}});
        out.frames.push_back(frame("fault", Record{{"t", t}, {"message", e.what()}}));
    }

    if (log_ && world_.t >= static_cast<double>(samples_taken_) / cfg_.sim.sample_rate_hz - kEps) {
        log_->append(sim::sample_record(world_));
        ++samples_taken_;
    }
    trace_.push_back(world_.tcp_mm());
    while (trace_.size() > std::max<std::size_t>(cfg_.server.trace_tail, 1)) trace_.pop_front();

    out.frames.push_back(frame("state", state_body()));
    return out;
}

Record ProtocolSession::state_body() const {
    Record s;
    s["t"] = world_.t;
    s["mode"] = std::string(sim::to_string(mode_));
    s["q"] = Record::array();
    for (Eigen::Index i = 0; i < world_.ur3_q.size(); ++i) s["q"].push_back(world_.ur3_q[i]);
    s["tcp"] = vec(world_.ur3_tcp.translation);
    s["follower"] = {{"position", vec(world_.follower.translation)}, {"axis", vec(world_.follower.rotation.col(2))}};
    s["projection_target"] = vec(world_.projection_target.translation);
    s["gui_buttons"] = Record::array();
    for (const auto& r : world_.gui_world) {
        Record b{{"id", r.id.value}, {"action", std::string(projection::to_string(r.action))}, {"corners", Record::array()}};
        for (const auto& c : r.corners) b["corners"].push_back(vec(c));
        s["gui_buttons"].push_back(std::move(b));
    }
    const auto active = world_.active_button(cfg_.sim);
    s["active_button"] = active ? Record(active->value) : Record(nullptr);
    s["trace_tail"] = Record::array();
    for (const auto& p : trace_) s["trace_tail"].push_back({p.x(), p.y()});
    const auto task = cfg_.task();
    s["task"] = {{"running", log_.has_value()}, {"center", {task.center.x(), task.center.y()}}, {"side", task.side}};
    return s;
}

void ProtocolSession::close() {
    if (log_) {
        finished_.push_back(std::move(*log_));
        log_.reset();
    }
}

}  // namespace cobotar::gateway
