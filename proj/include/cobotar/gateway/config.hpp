#pragma once

#include "cobotar/simcore.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace cobotar::gateway {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ServerOptions {
    unsigned short port = 8765;
    std::filesystem::path log_dir = ".";
    std::size_t trace_tail = 200;  // TCP points echoed in each state message
};

struct SessionConfig {
    sim::SimConfig sim;
    sim::Mode mode = sim::Mode::CobotAR;
    std::uint64_t seed = 0;
    double switch_latency_s = 0.5;  // scripted-agent pause at each corner
    ServerOptions server;

    metrics::SquareTask task() const { return sim::resolve_task(sim); }
};

/**
 * Reads a session config. Every key is optional; unknown keys are rejected.
 * Chain and layout references are paths relative to `base_dir`.
 */
SessionConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
SessionConfig load_config(const std::filesystem::path& path);

}  // namespace cobotar::gateway
