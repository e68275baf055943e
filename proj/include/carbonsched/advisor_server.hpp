#pragma once

#include <sys/socket.h>

#include <string>
#include <utility>

#include <httplib.h>

#include "carbonsched/advisor.hpp"

namespace carbonsched::advisor {

/// HTTP front end for the advisor handlers. The context is immutable once the server is built.
class Server {
 public:
  explicit Server(Context ctx) : ctx_(std::move(ctx)) {
    // SO_REUSEADDR only: a second server on the same port must fail to bind.
    http_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    http_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

    http_.Post("/api/v1/simulate", [this](httplib::Request const& req, httplib::Response& res) {
      respond(res, with_body(req, [this](Json const& body) { return simulate(ctx_, body); }));
    });
    http_.Post("/api/v1/sweep", [this](httplib::Request const& req, httplib::Response& res) {
      respond(res, with_body(req, [this](Json const& body) { return sweep(ctx_, body); }));
    });
    http_.Get("/api/v1/regions",
              [this](httplib::Request const&, httplib::Response& res) { respond(res, regions(ctx_)); });
    http_.Options(R"(/api/v1/.*)", [](httplib::Request const&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  Server(Server const&) = delete;
  Server& operator=(Server const&) = delete;

  /// Binds without serving. Port 0 picks a free port; returns the bound port or -1.
  int bind(std::string const& host, int port) {
    if (port == 0) return http_.bind_to_any_port(host);
    return http_.bind_to_port(host, port) ? port : -1;
  }

  /// Blocks until `stop` is called.
  bool serve() { return http_.listen_after_bind(); }
  void stop() { http_.stop(); }
  void wait_until_ready() const { http_.wait_until_ready(); }
  Context const& context() const noexcept { return ctx_; }

 private:
  template <typename Handler>
  static Reply with_body(httplib::Request const& req, Handler&& handler) {
    Json body;
    try {
      body = Json::parse(req.body);
    } catch (nlohmann::json::parse_error const& e) {
      return Reply{400, Json{{"error", std::string("request body is not valid JSON: ") + e.what()}}};
    }
    return handler(body);
  }

  static void respond(httplib::Response& res, Reply const& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  }

  Context const ctx_;
  httplib::Server http_;
};

}  // namespace carbonsched::advisor
