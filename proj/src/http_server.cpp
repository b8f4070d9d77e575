#include <charconv>

#include <httplib.h>

#include "rulecast/service.hpp"

namespace rulecast::service {

struct HttpServer::Impl {
  SessionManager& sessions;
  httplib::Server server;
  explicit Impl(SessionManager& s) : sessions(s) {}
};

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(400, "bad_json", std::string("request body is not valid JSON: ") + e.what());
  }
}

template <typename T>
T query_number(const httplib::Request& req, const std::string& key, T fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string raw = req.get_param_value(key);
  T v{};
  auto [end, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc{} || end != raw.data() + raw.size()) {
    throw ServiceError(400, "bad_request", "query parameter '" + key + "' is not a valid number");
  }
  return v;
}

// Wraps a handler so every failure becomes a {code, message, location?} body.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send(res, e.status(), e.body());
    } catch (const std::exception& e) {
      send(res, 500, json{{"code", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace

HttpServer::HttpServer(SessionManager& sessions) : impl_(std::make_unique<Impl>(sessions)) {
  auto& srv = impl_->server;
  SessionManager& mgr = sessions;

  srv.Post("/sessions", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             const auto id = mgr.create_session(parse_body(req));
             const auto history = mgr.history(id);
             send(res, 201,
                  json{{"session_id", id},
                       {"queue_size", mgr.queue(id, SIZE_MAX).size()},
                       {"metrics", to_json(history.back())}});
           }));

  srv.Get(R"(/sessions/([^/]+)/queue)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            const std::size_t limit = query_number<std::size_t>(req, "limit", 20);
            json items = json::array();
            for (const auto& item : mgr.queue(req.matches[1], limit)) items.push_back(to_json(item));
            send(res, 200, json{{"items", items}});
          }));

  srv.Post(R"(/sessions/([^/]+)/feedback)",
           guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             if (!body.contains("sample_id") || !body.at("sample_id").is_number_unsigned()) {
               throw ServiceError(400, "bad_request", "field 'sample_id' must be a non-negative integer");
             }
             if (!body.contains("rule") || !body.at("rule").is_string()) {
               throw ServiceError(400, "bad_request", "field 'rule' must be a string");
             }
             std::string author = "user";
             if (body.contains("author")) {
               if (!body.at("author").is_string()) {
                 throw ServiceError(400, "bad_request", "field 'author' must be a string");
               }
               author = body.at("author").get<std::string>();
             }
             const auto receipt = mgr.submit_feedback(req.matches[1], body.at("sample_id").get<std::uint64_t>(),
                                                      body.at("rule").get<std::string>(), author);
             send(res, 201, to_json(receipt));
           }));

  srv.Post(R"(/sessions/([^/]+)/retrain)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             send(res, 200, to_json(mgr.retrain(req.matches[1])));
           }));

  srv.Get(R"(/sessions/([^/]+)/metrics)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            json history = json::array();
            for (const auto& r : mgr.history(id)) history.push_back(to_json(r));
            json body = {{"history", history}};
            if (req.has_param("alpha")) {
              const double alpha = query_number<double>(req, "alpha", 0.0);
              body["what_if"] = to_json(mgr.what_if(id, alpha));
            }
            send(res, 200, body);
          }));

  srv.Get(R"(/sessions/([^/]+)/rules)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            json rules = json::array();
            for (const auto& r : mgr.rules(req.matches[1])) rules.push_back(to_json(r));
            send(res, 200, json{{"rules", rules}});
          }));

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      const char* code = res.status == 404 ? "not_found" : "http_error";
      res.set_content(json{{"code", code}, {"message", httplib::status_message(res.status)}}.dump(),
                      "application/json");
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& address, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(address);
    if (bound < 0) throw std::runtime_error("cannot bind " + address);
    return bound;
  }
  if (!impl_->server.bind_to_port(address, port)) {
    throw std::runtime_error("cannot bind " + address + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace rulecast::service
