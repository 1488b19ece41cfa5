#pragma once

#include <string>

#include <httplib.h>

#include "cicrl/session.hpp"

namespace cicrl {

/// Binds the session routes to an HTTP server, with permissive CORS for the browser client.
inline void bind_routes(httplib::Server& server, SessionService& service) {
  auto cors = [](httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  };
  auto forward = [&service, cors](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
    cors(res);
  };
  server.Post("/sessions", forward);
  server.Post(R"(/sessions/([0-9a-f]+)/matcher)", forward);
  server.Get(R"(/sessions/([0-9a-f]+))", forward);
  server.Options(R"(/sessions.*)", [cors](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    cors(res);
  });
}

}  // namespace cicrl
