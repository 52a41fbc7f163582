#include "cobotar/gateway/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

#include <nlohmann/json.hpp>

namespace cobotar::gateway {

namespace {

using nlohmann::json;

void only_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) throw ConfigError("unknown key \"" + key + "\" in " + std::string(where));
    }
}

double number(const json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) throw ConfigError(std::string("\"") + key + "\" must be a number");
    return obj[key].get<double>();
}

double rate(const json& obj, const char* key, double fallback) {
    const double r = number(obj, key, fallback);
    if (!(r >= 10.0 && r <= 240.0)) throw ConfigError(std::string("\"") + key + "\" must be within [10, 240] Hz");
    return r;
}

double positive(const json& obj, const char* key, double fallback) {
    const double v = number(obj, key, fallback);
    if (!(v > 0.0)) throw ConfigError(std::string("\"") + key + "\" must be positive");
    return v;
}

double non_negative(const json& obj, const char* key, double fallback) {
    const double v = number(obj, key, fallback);
    if (!(v >= 0.0)) throw ConfigError(std::string("\"") + key + "\" must be non-negative");
    return v;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// A reference is either a file name or the object inline.
json resolve(const json& ref, const std::filesystem::path& base_dir, std::filesystem::path& origin) {
    if (ref.is_string()) {
        origin = base_dir / ref.get<std::string>();
        return read_json_file(origin);
    }
    origin.clear();
    return ref;
}

template <typename Fn>
auto with_origin(const std::filesystem::path& origin, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(origin.empty() ? std::string(e.what()) : origin.string() + ": " + e.what());
    }
}

Eigen::Vector2d vec2(const json& v, const char* what) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw ConfigError(std::string("\"") + what + "\" must be [x, y]");
    }
    return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

SessionConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    only_keys(doc, "config",
              {"mode", "seed", "rates", "speed_mm_s", "gamepad", "pendant", "standoff_m", "workspace_mm", "chains",
               "layout", "camera", "detector", "task", "agent", "home_q", "max_faults", "server"});
    SessionConfig out;
    sim::SimConfig& s = out.sim;

    if (doc.contains("mode")) {
        if (!doc["mode"].is_string()) throw ConfigError("\"mode\" must be a string");
        try {
            out.mode = sim::mode_from_string(doc["mode"].get<std::string>());
        } catch (const sim::SimError& e) {
            throw ConfigError(e.what());
        }
    }
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned()) throw ConfigError("\"seed\" must be a non-negative integer");
        out.seed = doc["seed"].get<std::uint64_t>();
    }
    if (doc.contains("rates")) {
        const json& r = doc["rates"];
        only_keys(r, "rates", {"sim_hz", "sample_hz", "camera_hz"});
        s.sim_rate_hz = rate(r, "sim_hz", s.sim_rate_hz);
        s.sample_rate_hz = rate(r, "sample_hz", s.sample_rate_hz);
        s.camera_rate_hz = rate(r, "camera_hz", s.camera_rate_hz);
    }
    s.speed_mm_s = positive(doc, "speed_mm_s", s.speed_mm_s);
    s.gamepad_vmax_mm_s = s.speed_mm_s;
    if (doc.contains("gamepad")) {
        const json& g = doc["gamepad"];
        only_keys(g, "gamepad", {"vmax_mm_s", "deadzone"});
        s.gamepad_vmax_mm_s = positive(g, "vmax_mm_s", s.gamepad_vmax_mm_s);
        s.gamepad_deadzone = non_negative(g, "deadzone", s.gamepad_deadzone);
        if (s.gamepad_deadzone >= 1.0) throw ConfigError("\"deadzone\" must be below 1");
    }
    if (doc.contains("pendant")) {
        const json& p = doc["pendant"];
        only_keys(p, "pendant", {"latency_s"});
        s.pendant_latency_s = non_negative(p, "latency_s", s.pendant_latency_s);
    }
    s.standoff_m = positive(doc, "standoff_m", s.standoff_m);
    if (doc.contains("workspace_mm")) {
        s.workspace_mm = vec2(doc["workspace_mm"], "workspace_mm");
        if (!(s.workspace_mm.minCoeff() > 0.0)) throw ConfigError("\"workspace_mm\" must be positive");
    }
    if (doc.contains("chains")) {
        const json& c = doc["chains"];
        only_keys(c, "chains", {"ur3", "projection_target"});
        std::filesystem::path origin;
        if (c.contains("ur3")) {
            const json j = resolve(c["ur3"], base_dir, origin);
            s.ur3 = with_origin(origin, [&] { return kin::DHChain::from_json(j); });
            if (s.ur3.size() != 6) throw ConfigError("the UR3 chain must have six joints");
        }
        if (c.contains("projection_target")) {
            const json j = resolve(c["projection_target"], base_dir, origin);
            s.target_chain = with_origin(origin, [&] { return kin::DHChain::from_json(j); });
            if (s.target_chain.size() > s.ur3.size()) throw ConfigError("projection-target chain is longer than the UR3 chain");
        }
    }
    if (doc.contains("layout")) {
        std::filesystem::path origin;
        const json j = resolve(doc["layout"], base_dir, origin);
        s.layout = with_origin(origin, [&] { return projection::GuiLayout::from_json(j); });
    }
    if (doc.contains("camera")) {
        const json& c = doc["camera"];
        only_keys(c, "camera", {"fx", "fy", "cx", "cy", "width", "height"});
        s.camera.fx = number(c, "fx", s.camera.fx);
        s.camera.fy = number(c, "fy", s.camera.fy);
        s.camera.cx = number(c, "cx", s.camera.cx);
        s.camera.cy = number(c, "cy", s.camera.cy);
        s.camera.width = static_cast<int>(number(c, "width", s.camera.width));
        s.camera.height = static_cast<int>(number(c, "height", s.camera.height));
        if (!s.camera.valid()) throw ConfigError("invalid camera intrinsics");
    }
    if (doc.contains("detector")) {
        const json& d = doc["detector"];
        only_keys(d, "detector", {"debounce_frames", "extension_ratio"});
        const double n = number(d, "debounce_frames", s.detector.debounce_frames);
        if (n < 1.0 || n != std::floor(n)) throw ConfigError("\"debounce_frames\" must be a positive integer");
        s.detector.debounce_frames = static_cast<int>(n);
        s.detector.classifier.extension_ratio = positive(d, "extension_ratio", s.detector.classifier.extension_ratio);
        if (s.detector.classifier.extension_ratio <= 1.0) throw ConfigError("\"extension_ratio\" must exceed 1");
    }
    if (doc.contains("home_q")) {
        const json& q = doc["home_q"];
        if (!q.is_array() || q.size() != s.ur3.size()) throw ConfigError("\"home_q\" must list one angle per UR3 joint");
        s.home_q.resize(static_cast<Eigen::Index>(q.size()));
        for (std::size_t i = 0; i < q.size(); ++i) {
            if (!q[i].is_number()) throw ConfigError("\"home_q\" entries must be numbers");
            s.home_q[static_cast<Eigen::Index>(i)] = q[i].get<double>();
        }
    }
    if (doc.contains("task")) {
        const json& t = doc["task"];
        only_keys(t, "task", {"kind", "side_mm", "center_mm"});
        if (t.contains("kind") && t["kind"] != "square") throw ConfigError("only the \"square\" task is supported");
        s.task_side_mm = positive(t, "side_mm", s.task_side_mm);
        if (t.contains("center_mm")) s.task_center_mm = vec2(t["center_mm"], "center_mm");
    }
    if (doc.contains("agent")) {
        const json& a = doc["agent"];
        only_keys(a, "agent", {"switch_latency_s", "reaction_jitter_s", "correction_interval_s", "lookahead_mm"});
        out.switch_latency_s = non_negative(a, "switch_latency_s", out.switch_latency_s);
        s.agent.reaction_jitter_s = non_negative(a, "reaction_jitter_s", s.agent.reaction_jitter_s);
        s.agent.correction_interval_s = positive(a, "correction_interval_s", s.agent.correction_interval_s);
        s.agent.lookahead_mm = positive(a, "lookahead_mm", s.agent.lookahead_mm);
    }
    if (doc.contains("max_faults")) {
        if (!doc["max_faults"].is_number_unsigned()) throw ConfigError("\"max_faults\" must be a non-negative integer");
        s.max_faults = doc["max_faults"].get<int>();
    }
    if (doc.contains("server")) {
        const json& sv = doc["server"];
        only_keys(sv, "server", {"port", "log_dir", "trace_tail"});
        if (sv.contains("port")) {
            if (!sv["port"].is_number_unsigned() || sv["port"].get<unsigned>() > 65535) {
                throw ConfigError("\"port\" must be within [0, 65535]");
            }
            out.server.port = static_cast<unsigned short>(sv["port"].get<unsigned>());
        }
        if (sv.contains("log_dir")) {
            if (!sv["log_dir"].is_string()) throw ConfigError("\"log_dir\" must be a path");
            out.server.log_dir = base_dir / sv["log_dir"].get<std::string>();
        }
        if (sv.contains("trace_tail")) {
            if (!sv["trace_tail"].is_number_unsigned()) throw ConfigError("\"trace_tail\" must be a non-negative integer");
            out.server.trace_tail = sv["trace_tail"].get<std::size_t>();
        }
    }

    // Surfaces an unreachable home pose or a bad chain now rather than mid-run.
    try {
        (void)sim::make_world(s, out.mode);
        (void)sim::resolve_task(s);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config does not yield a valid world: ") + e.what());
    }
    return out;
}

SessionConfig load_config(const std::filesystem::path& path) {
    const json doc = read_json_file(path);
    try {
        return parse_config(doc, path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace cobotar::gateway
