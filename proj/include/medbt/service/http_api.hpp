#pragma once

#include <httplib.h>

#include "medbt/dsl/dot.hpp"
#include "medbt/service/store.hpp"

namespace medbt::service {

/// JSON over HTTP, versioned under /api/v1. Errors are {"error": message}
/// with 400 (bad input), 404 (unknown protocol or session) or 409
/// (request conflicts with session state).
class HttpApi {
 public:
  HttpApi(ProtocolRegistry& protocols, SessionStore& sessions) : protocols_(protocols), sessions_(sessions) {}

  void mount(httplib::Server& server)
  {
    server.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) { send(res, 200, {{"ok", true}}); });

    server.Get("/api/v1/protocols", guarded([this](const httplib::Request&, httplib::Response& res) {
                 nlohmann::json out = nlohmann::json::array();
                 for (const auto& p : protocols_.list()) out.push_back(summary(p));
                 send(res, 200, out);
               }));

    server.Post("/api/v1/protocols", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  std::string name;
                  std::string text;
                  if (req.get_header_value("Content-Type").rfind("application/json", 0) == 0) {
                    const auto body = parse_body(req);
                    name = body.at("name").get<std::string>();
                    text = body.at("dsl").get<std::string>();
                  } else {
                    name = req.get_param_value("name");
                    text = req.body;
                  }
                  send(res, 201, detail_json(protocols_.upload(name, text)));
                }));

    server.Get(R"(/api/v1/protocols/([A-Za-z0-9_.\-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send(res, 200, detail_json(protocols_.get(req.matches[1].str())));
               }));

    server.Get("/api/v1/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
                 send(res, 200, sessions_.ids());
               }));

    server.Post("/api/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  SessionRequest r;
                  r.protocol = body.at("protocol").get<std::string>();
                  const Protocol p = protocols_.get(r.protocol);
                  try {
                    if (body.contains("blackboard")) r.blackboard = Blackboard::from_json(body["blackboard"]);
                  } catch (const BlackboardError& e) {
                    throw BadRequest(std::string("invalid initial blackboard: ") + e.what());
                  }
                  r.seed = body.value("seed", std::uint64_t{0});
                  if (body.contains("interactive")) {
                    auto mode = parse_interactive(body["interactive"].get<std::string>());
                    if (!mode) throw BadRequest("interactive must be one of queries, all, none");
                    r.interactive = *mode;
                  }
                  if (body.contains("bindings")) {
                    for (const auto& [name, b] : body["bindings"].items()) r.overrides.bind(name, LeafBinding::from_json(b));
                  }
                  if (body.contains("defaultBinding")) r.overrides.set_fallback(LeafBinding::from_json(body["defaultBinding"]));
                  const std::string id = sessions_.create(p, r);
                  send(res, 201, sessions_.snapshot(id).view());
                }));

    const std::string session = R"(/api/v1/sessions/([A-Za-z0-9_\-]+))";

    server.Get(session, guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send(res, 200, sessions_.snapshot(req.matches[1].str()).view());
               }));

    server.Post(session + "/outcome", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  const std::string leaf = body.at("leaf").get<std::string>();
                  auto outcome = parse_status(body.at("outcome").get<std::string>());
                  if (!outcome || *outcome == Status::Running) throw BadRequest("outcome must be success or failure");
                  std::optional<Duration> elapsed;
                  if (body.contains("elapsed") && !body["elapsed"].is_null()) elapsed = duration_field(body["elapsed"], "elapsed");
                  auto version = version_field(body);
                  auto view = sessions_.mutate(req.matches[1].str(), [&](Session& s) {
                    s.submit(leaf, *outcome, elapsed, version);
                    return s.view();
                  });
                  send(res, 200, view);
                }));

    server.Post(session + "/advance", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = req.body.empty() ? nlohmann::json::object() : parse_body(req);
                  std::optional<Timestamp> to;
                  if (body.contains("to") && !body["to"].is_null()) to = Timestamp{} + duration_field(body["to"], "to");
                  auto version = version_field(body);
                  auto view = sessions_.mutate(req.matches[1].str(), [&](Session& s) {
                    s.advance(to, version);
                    return s.view();
                  });
                  send(res, 200, view);
                }));

    server.Post(session + "/fork", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = sessions_.fork(req.matches[1].str());
                  send(res, 201, sessions_.snapshot(id).view());
                }));

    server.Get(session + "/trace", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const std::size_t page = size_param(req, "page", 0);
                 const std::size_t size = std::clamp<std::size_t>(size_param(req, "size", 100), 1, 10'000);
                 const Session s = sessions_.snapshot(req.matches[1].str());
                 const auto& events = s.engine().trace().events();
                 nlohmann::json out{{"page", page}, {"size", size}, {"total", events.size()}, {"events", nlohmann::json::array()}};
                 for (std::size_t i = page * size; i < events.size() && i < (page + 1) * size; ++i) out["events"].push_back(events[i].to_json());
                 send(res, 200, out);
               }));

    server.Get(session + "/dot", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const Session s = sessions_.snapshot(req.matches[1].str());
                 const auto statuses = s.engine().trace().latest_statuses();
                 res.set_content(dsl::export_dot(s.engine().tree().source(), &statuses), "text/vnd.graphviz");
               }));
  }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static void send(httplib::Response& res, int status, const nlohmann::json& body)
  {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static Handler guarded(Handler h)
  {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const NotFound& e) {
        send(res, 404, {{"error", e.what()}});
      } catch (const Conflict& e) {
        send(res, 409, {{"error", e.what()}});
      } catch (const Error& e) {
        send(res, 400, {{"error", e.what()}});
      } catch (const nlohmann::json::exception& e) {
        send(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
      } catch (const std::exception& e) {
        send(res, 500, {{"error", e.what()}});
      }
    };
  }

  static nlohmann::json parse_body(const httplib::Request& req)
  {
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw BadRequest("request body must be a JSON object");
    return j;
  }

  static Duration duration_field(const nlohmann::json& j, const char* field)
  {
    auto s = json_seconds(j);
    if (!s || *s < 0) throw BadRequest(std::string(field) + " must be a non-negative number of seconds or a duration literal");
    return Duration{*s};
  }

  static std::optional<std::size_t> version_field(const nlohmann::json& body)
  {
    if (!body.contains("version") || body["version"].is_null()) return std::nullopt;
    return body["version"].get<std::size_t>();
  }

  static std::size_t size_param(const httplib::Request& req, const char* key, std::size_t fallback)
  {
    if (!req.has_param(key)) return fallback;
    const std::string v = req.get_param_value(key);
    if (v.empty() || !std::all_of(v.begin(), v.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      throw BadRequest(std::string(key) + " must be a non-negative integer");
    }
    return std::stoull(v);
  }

  static nlohmann::json summary(const Protocol& p)
  {
    nlohmann::json j{{"name", p.name}, {"origin", p.origin}, {"leaves", leaf_count(p.tree)}};
    if (!p.tree.metadata.name.empty()) j["title"] = p.tree.metadata.name;
    if (!p.figure.empty()) j["figure"] = p.figure;
    return j;
  }

  static nlohmann::json detail_json(const Protocol& p)
  {
    nlohmann::json j = summary(p);
    j["dsl"] = p.dsl;
    j["tree"] = tree_json(p.tree);
    j["dot"] = dsl::export_dot(p.tree);
    return j;
  }

  ProtocolRegistry& protocols_;
  SessionStore& sessions_;
};

}  // namespace medbt::service
