#include "cobotar/gateway/server.hpp"

#include "cobotar/gateway/protocol.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <csignal>
#include <system_error>
#include <deque>
#include <string>

namespace cobotar::gateway {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Connection;

}  // namespace

struct Server::Impl : std::enable_shared_from_this<Server::Impl> {
    SessionConfig cfg;
    asio::io_context io{1};
    tcp::acceptor acceptor{io};
    std::weak_ptr<Connection> active;
    long connections = 0;
    mutable std::mutex saved_mutex;
    std::vector<std::filesystem::path> saved;

    void accept();
    void persist(const SessionLog& log, long connection, std::size_t index);
};

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, std::shared_ptr<Server::Impl> server, long id, bool busy)
        : ws_(std::move(socket)),
          timer_(ws_.get_executor()),
          server_(std::move(server)),
          id_(id),
          busy_(busy),
          session_(server_->cfg, id) {}

    void start() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
    }

    void shutdown() {
        timer_.cancel();
        if (!closing_) {
            closing_ = true;
            if (!writing_) close_now();
        }
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return spdlog::warn("websocket handshake failed: {}", ec.message());
        ws_.text(true);
        if (busy_) {
            send(R"({"v":1,"seq":1,"type":"error","message":"another operator session is active"})");
            closing_ = true;
            return;
        }
        spdlog::info("operator {} connected", id_);
        send(session_.hello());
        next_tick_ = std::chrono::steady_clock::now();
        schedule_tick();
        read();
    }

    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec) {
        if (ec) {
            if (ec != websocket::error::closed) spdlog::info("operator {} dropped: {}", id_, ec.message());
            return finish();
        }
        deliver(session_.on_message(beast::buffers_to_string(buffer_.data())));
        buffer_.consume(buffer_.size());
        if (!closing_) read();
    }

    void schedule_tick() {
        next_tick_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(server_->cfg.sim.dt()));
        timer_.expires_at(next_tick_);
        timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (ec || self->closing_) return;
            self->deliver(self->session_.tick());
            self->persist_finished();
            self->schedule_tick();
        });
    }

    void deliver(Reply reply) {
        for (auto& f : reply.frames) send(std::move(f));
        if (reply.close) {
            closing_ = true;
            timer_.cancel();
            if (!writing_) close_now();
        }
    }

    void send(std::string frame) {
        // A slow client loses stale snapshots rather than stalling the loop.
        if (outbox_.size() > 512) outbox_.pop_front();
        outbox_.push_back(std::move(frame));
        if (!writing_) write_next();
    }

    void write_next() {
        if (outbox_.empty()) {
            writing_ = false;
            if (closing_) close_now();
            return;
        }
        writing_ = true;
        current_ = std::move(outbox_.front());
        outbox_.pop_front();
        ws_.async_write(asio::buffer(current_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->writing_ = false;
                return self->finish();
            }
            self->write_next();
        });
    }

    void close_now() {
        if (closed_) return;
        closed_ = true;
        ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) { self->finish(); });
    }

    void finish() {
        if (finished_) return;
        finished_ = true;
        timer_.cancel();
        if (busy_) return;
        session_.close();
        persist_finished();
        spdlog::info("operator {} disconnected", id_);
    }

    void persist_finished() {
        const auto& logs = session_.finished_logs();
        for (; persisted_ < logs.size(); ++persisted_) server_->persist(logs[persisted_], id_, persisted_);
    }

    websocket::stream<beast::tcp_stream> ws_;
    asio::steady_timer timer_;
    std::shared_ptr<Server::Impl> server_;
    long id_;
    bool busy_;
    ProtocolSession session_;
    beast::flat_buffer buffer_;
    std::deque<std::string> outbox_;
    std::string current_;
    bool writing_ = false;
    bool closing_ = false;
    bool closed_ = false;
    bool finished_ = false;
    std::size_t persisted_ = 0;
    std::chrono::steady_clock::time_point next_tick_;
};

}  // namespace

void Server::Impl::accept() {
    acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
        if (ec) {
            if (ec != asio::error::operation_aborted) spdlog::warn("accept failed: {}", ec.message());
            if (!self->acceptor.is_open()) return;
        } else {
            const auto current = self->active.lock();
            auto conn = std::make_shared<Connection>(std::move(socket), self, ++self->connections, current != nullptr);
            if (!current) self->active = conn;
            conn->start();
        }
        self->accept();
    });
}

void Server::Impl::persist(const SessionLog& log, long connection, std::size_t index) {
    std::filesystem::create_directories(cfg.server.log_dir);
    const auto path = cfg.server.log_dir / ("session-" + std::to_string(connection) + "-" + std::to_string(index + 1) + ".jsonl");
    log.save(path);
    spdlog::info("session log written to {}", path.string());
    std::lock_guard lock(saved_mutex);
    saved.push_back(path);
}

Server::Server(SessionConfig cfg) : impl_(std::make_shared<Impl>()) {
    impl_->cfg = std::move(cfg);
    const tcp::endpoint ep(asio::ip::make_address("127.0.0.1"), impl_->cfg.server.port);
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
    boost::system::error_code ec;
    impl_->acceptor.bind(ep, ec);
    if (ec) throw std::system_error(ec.value(), std::generic_category(), "bind 127.0.0.1:" + std::to_string(ep.port()));
    impl_->acceptor.listen();
}

Server::~Server() { stop(); }

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
    asio::signal_set signals(impl_->io, SIGINT, SIGTERM);
    signals.async_wait([this](beast::error_code ec, int) {
        if (!ec) stop();
    });
    impl_->accept();
    impl_->io.run();
}

void Server::stop() {
    asio::post(impl_->io, [impl = impl_] {
        beast::error_code ec;
        impl->acceptor.close(ec);
        if (auto conn = impl->active.lock()) conn->shutdown();
        // Give the close handshake a moment, then drop whatever is left.
        auto grace = std::make_shared<asio::steady_timer>(impl->io, std::chrono::milliseconds(500));
        grace->async_wait([impl, grace](beast::error_code) { impl->io.stop(); });
    });
}

std::vector<std::filesystem::path> Server::saved_logs() const {
    std::lock_guard lock(impl_->saved_mutex);
    return impl_->saved;
}

}  // namespace cobotar::gateway
