#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>

#include "sbs/server/service.hpp"

namespace test {

// coord-server on an ephemeral localhost port, stopped on destruction.
class TestServer {
public:
    explicit TestServer(std::optional<std::filesystem::path> log_dir = std::nullopt) : sessions_(std::move(log_dir)) {
        sbs::server::register_routes(server_, sessions_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~TestServer() {
        server_.stop();
        thread_.join();
    }

    int port() const { return port_; }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    sbs::server::SessionManager& sessions() { return sessions_; }

private:
    sbs::server::SessionManager sessions_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace test
