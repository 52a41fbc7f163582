// Command-line entry points: simulate, metrics, serve, replay.

#include "cobotar/gateway/config.hpp"
#include "cobotar/gateway/report.hpp"
#include "cobotar/gateway/server.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace cobotar;

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFaults = 3;

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("cobotar");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("COBOTAR_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(env));
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

gateway::SessionConfig config_or_default(const std::string& path) {
    if (path.empty()) return gateway::parse_config(nlohmann::json::object(), ".");
    return gateway::load_config(path);
}

int simulate(const std::string& config_path, const std::string& agent, const std::string& mode_name,
             const std::string& out_path) {
    gateway::SessionConfig cfg;
    sim::AgentSpec spec;
    try {
        cfg = config_or_default(config_path);
        const sim::Mode mode = mode_name.empty() ? cfg.mode : sim::mode_from_string(mode_name);
        spec = sim::AgentSpec::parse(agent, mode);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    spec.speed_mm_s = cfg.sim.speed_mm_s;
    spec.switch_latency_s = cfg.switch_latency_s;

    const auto task = cfg.task();
    const SessionLog log = sim::run_scripted_agent(spec, task, cfg.sim);
    log.save(out_path);
    spdlog::info("wrote {} records to {}", log.size(), out_path);

    const std::size_t faults = sim::fault_count(log);
    if (faults > static_cast<std::size_t>(cfg.sim.max_faults)) {
        std::cerr << "aborted after " << faults << " IK faults (limit " << cfg.sim.max_faults << ")\n";
        return kExitFaults;
    }
    try {
        const auto m = gateway::session_metrics(log, out_path);
        std::cout << "mode=" << m.mode << " time_s=" << m.time_s << " error_mm=" << m.error_mm << " faults=" << faults
                  << '\n';
    } catch (const std::exception& e) {
        std::cerr << "session incomplete: " << e.what() << '\n';
        return kExitError;
    }
    return 0;
}

int metrics_cmd(const std::string& task_kind, const std::vector<std::string>& logs, const std::string& json_path,
                const std::string& csv_path, const std::string& tlx_path) {
    if (task_kind != "square") {
        std::cerr << "unsupported task \"" << task_kind << "\"\n";
        return kExitConfig;
    }
    std::vector<gateway::TlxEntry> tlx;
    if (!tlx_path.empty()) {
        try {
            tlx = gateway::parse_tlx(slurp(tlx_path));
        } catch (const std::exception& e) {
            std::cerr << tlx_path << ": " << e.what() << '\n';
            return kExitConfig;
        }
    }
    std::vector<gateway::LogSource> sources;
    gateway::MetricsReport unreadable;
    for (const auto& path : logs) {
        try {
            sources.push_back({path, slurp(path)});
        } catch (const std::exception& e) {
            unreadable.errors.push_back({path, std::nullopt, e.what()});
        }
    }
    auto report = gateway::build_report(sources, tlx);
    report.errors.insert(report.errors.begin(), unreadable.errors.begin(), unreadable.errors.end());

    const std::string doc = report.to_json().dump(2) + "\n";
    if (json_path.empty()) {
        std::cout << doc;
    } else {
        std::ofstream(json_path, std::ios::binary) << doc;
        for (const auto& s : report.sessions) {
            std::cout << s.source << ": mode=" << s.mode << " time_s=" << s.time_s << " error_mm=" << s.error_mm << '\n';
        }
    }
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::binary);
        report.write_csv(csv);
    }
    for (const auto& e : report.errors) {
        std::cerr << e.source << (e.line ? ":" + std::to_string(*e.line) : std::string()) << ": " << e.message << '\n';
    }
    return report.sessions.empty() ? kExitError : 0;
}

int serve(const std::string& config_path, int port) {
    gateway::SessionConfig cfg;
    try {
        cfg = config_or_default(config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    if (port >= 0) cfg.server.port = static_cast<unsigned short>(port);
    try {
        gateway::Server server(cfg);
        std::cout << "listening on ws://127.0.0.1:" << server.port() << std::endl;
        server.run();
    } catch (const std::system_error& e) {
        std::cerr << "cannot listen on port " << cfg.server.port << ": " << e.what() << '\n';
        return kExitError;
    }
    return 0;
}

int replay_cmd(const std::string& log_path, double speed) {
    if (!(speed > 0.0)) {
        std::cerr << "--speed must be positive\n";
        return kExitConfig;
    }
    SessionLog log;
    try {
        log = gateway::parse_any_log(slurp(log_path));
    } catch (const std::exception& e) {
        std::cerr << log_path << ": " << e.what() << '\n';
        return kExitError;
    }
    gateway::replay(log, speed, std::cout,
                    [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); });
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"CobotAR digital twin"};
    app.require_subcommand(1);

    std::string config, agent = "perfect", mode, out;
    auto* sim_cmd = app.add_subcommand("simulate", "Run a scripted operator and write its session log");
    sim_cmd->add_option("--config", config, "Session config (JSON)");
    sim_cmd->add_option("--agent", agent, "perfect or noisy:SEED:SIGMA");
    sim_cmd->add_option("--mode", mode, "cobotar, gamepad or pendant (overrides the config)");
    sim_cmd->add_option("--out", out, "Output log (JSONL)")->required();

    std::string task = "square", json_out, csv_out, tlx_in;
    std::vector<std::string> logs;
    auto* met_cmd = app.add_subcommand("metrics", "Per-session metrics and statistics");
    met_cmd->add_option("--task", task, "Task kind");
    met_cmd->add_option("--logs", logs, "Session logs or replay captures")->required();
    met_cmd->add_option("--json", json_out, "Report path (default: stdout)");
    met_cmd->add_option("--csv", csv_out, "Per-session CSV");
    met_cmd->add_option("--tlx", tlx_in, "NASA-TLX sheets (JSON)");

    int port = -1;
    auto* srv_cmd = app.add_subcommand("serve", "WebSocket session server");
    srv_cmd->add_option("--config", config, "Session config (JSON)");
    srv_cmd->add_option("--port", port, "Listen port (overrides the config)")->check(CLI::Range(0, 65535));

    std::string log_in;
    double speed = 1.0;
    auto* rep_cmd = app.add_subcommand("replay", "Re-emit a log as protocol messages on stdout");
    rep_cmd->add_option("--log", log_in, "Session log")->required();
    rep_cmd->add_option("--speed", speed, "Time multiplier");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*sim_cmd) return simulate(config, agent, mode, out);
        if (*met_cmd) return metrics_cmd(task, logs, json_out, csv_out, tlx_in);
        if (*srv_cmd) return serve(config, port);
        if (*rep_cmd) return replay_cmd(log_in, speed);
    } catch (const std::exception& e) {
        spdlog::critical("{}", e.what());
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
