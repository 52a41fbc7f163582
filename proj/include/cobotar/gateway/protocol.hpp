#pragma once

#include "cobotar/gateway/config.hpp"
#include "cobotar/session_log.hpp"
#include "cobotar/simcore.hpp"

#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cobotar::gateway {

/// Frames to send back, and whether the connection must close afterwards.
struct Reply {
    std::vector<std::string> frames;
    bool close = false;
};

/**
 * One operator session over the JSON protocol, independent of the transport.
 *
 * Client frames are validated on arrival and queued; tick() applies the
 * queue in sequence order, advances the simulation by one step and emits a
 * state snapshot. Network code never touches the world directly.
 */
class ProtocolSession {
public:
    explicit ProtocolSession(SessionConfig cfg, long participant = 0);

    /// Greeting with mode, layout, task and rates.
    std::string hello();
    Reply on_message(std::string_view text);
    Reply tick();

    const sim::WorldState& world() const { return world_; }
    sim::Mode mode() const { return mode_; }
    bool task_running() const { return log_.has_value(); }
    /// Logs closed by a task end (or by close()).
    const std::vector<SessionLog>& finished_logs() const { return finished_; }
    /// Ends the connection; an open task log is kept without an end marker.
    void close();

private:
    struct Inbound {
        std::string type;
        Record body;
    };

    std::string frame(const std::string& type, Record body);
    std::string error_frame(const std::string& message);
    void apply(const Inbound& in, Reply& out);
    void log(Record r);
    Record state_body() const;

    SessionConfig cfg_;
    long participant_;
    sim::Mode mode_;
    sim::WorldState world_;
    std::deque<Inbound> queue_;
    long last_client_seq_ = 0;
    long seq_ = 0;

    sim::Command held_ = sim::NoCommand{};
    std::vector<gesture::GestureObservation> hands_;
    std::deque<Eigen::Vector2d> trace_;
    std::optional<SessionLog> log_;
    std::vector<SessionLog> finished_;
    long samples_taken_ = 0;
};

}  // namespace cobotar::gateway
