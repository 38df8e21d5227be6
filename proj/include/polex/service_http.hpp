#pragma once

#include <ostream>
#include <string>

#include <httplib.h>

#include "polex/service.hpp"

namespace polex {

inline void install_routes(httplib::Server& server, const Workspace& ws) {
  server.Get(R"(/.*)", [&ws](const httplib::Request& req, httplib::Response& res) {
    QueryParams query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const Response r = handle_request(ws, req.path, query);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.text(), "application/json");
  });
}

// Blocks until the server is stopped. Returns a process exit code.
inline int serve(const Workspace& ws, const std::string& host, int port, std::ostream& log) {
  httplib::Server server;
  install_routes(server, ws);
  if (!server.bind_to_port(host, port)) {
    log << "polex: cannot bind " << host << ":" << port << "\n";
    return 1;
  }
  log << "polex: serving " << ws.names().size() << " domain(s) from " << ws.root().string()
      << " on http://" << host << ":" << port << "\n";
  log.flush();
  return server.listen_after_bind() ? 0 : 1;
}

}  // namespace polex
