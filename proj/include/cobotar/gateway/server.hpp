#pragma once

#include "cobotar/gateway/config.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <vector>

namespace cobotar::gateway {

/**
 * WebSocket session server. One operator connection at a time; a second
 * client gets an error frame and is closed. All I/O and the simulation loop
 * share one thread.
 */
class Server {
public:
    /// Binds immediately; throws std::system_error if the port is taken. Port 0 picks a free one.
    explicit Server(SessionConfig cfg);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const;
    /// Serves until stop().
    void run();
    /// Safe from any thread.
    void stop();

    /// Session logs written so far.
    std::vector<std::filesystem::path> saved_logs() const;

    struct Impl;

private:
    std::shared_ptr<Impl> impl_;
};

}  // namespace cobotar::gateway
