#include "align/service.hpp"

#include <httplib.h>

#include <json.hpp>

#include "align/error.hpp"

namespace align {

namespace {

using nlohmann::json;

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    auto body = json::parse(req.body);
    if (!body.is_object()) throw Error(Errc::schema, "request body must be a JSON object");
    return body;
  } catch (const json::parse_error& e) {
    throw Error(Errc::schema, std::string("malformed JSON body: ") + e.what());
  }
}

template <typename T>
T field(const json& body, const char* name) {
  if (!body.contains(name)) throw Error(Errc::schema, std::string("missing field '") + name + "'");
  try {
    return body.at(name).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::schema, std::string("field '") + name + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& body, const char* name, T fallback) {
  return body.contains(name) ? field<T>(body, name) : fallback;
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& msg) {
  res.status = status;
  res.set_content(json{{"error", code}, {"message", msg}}.dump(), "application/json");
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

Handler guarded(Handler inner) {
  return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
    try {
      inner(req, res);
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

Role role_param(const std::string& text) {
  try {
    return parse_role(text);
  } catch (const Error&) {
    throw Error(Errc::not_found, "unknown role '" + text + "'");
  }
}

PrincipleSet principles_from(const json& body) {
  auto names = body.contains("principles") ? field<std::vector<std::string>>(body, "principles")
                                           : PrincipleSet::canonical().names();
  PrincipleSet set(std::move(names));
  if (body.contains("reference")) {
    const auto& ref = body.at("reference");
    if (ref.is_string()) return set.with_reference(set.resolve(ref.get<std::string>()));
    if (ref.is_number_unsigned()) return set.with_reference(ref.get<std::size_t>());
    throw Error(Errc::schema, "field 'reference' must be a principle name or index");
  }
  return set;
}

}  // namespace

int http_status_for(Errc code) noexcept {
  switch (code) {
    case Errc::not_found:
    case Errc::unknown_id:
      return 404;
    case Errc::stage_order:
      return 409;
    case Errc::simplex_violation:
    case Errc::sum_violation:
    case Errc::boundary_allocation:
    case Errc::dimension_mismatch:
    case Errc::overflow:
      return 422;
    case Errc::io:
      return 500;
    default:
      return 400;
  }
}

struct SessionService::Impl {
  explicit Impl(std::filesystem::path dir) : store(std::move(dir)) {}
  SessionStore store;
  httplib::Server server;
};

SessionService::SessionService(std::filesystem::path data_dir)
    : impl_(std::make_unique<Impl>(std::move(data_dir))) {
  auto& srv = impl_->server;
  auto& store = impl_->store;
  constexpr const char* kJson = "application/json";

  srv.Post("/api/sessions", guarded([&store](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             AlignmentThresholds t;
             t.epsilon = field_or(body, "epsilon", t.epsilon);
             t.p = field_or(body, "p", t.p);
             const double smoothing = field_or(body, "smoothing", kDefaultSmoothing);
             const auto s = store.create(principles_from(body), t, smoothing);
             res.status = 201;
             res.set_content(
                 json{{"session_id", s.session_id}, {"stage", to_string(s.stage)}}.dump(), kJson);
           }));

  srv.Get(R"(/api/sessions/([^/]+))",
          guarded([&store](const httplib::Request& req, httplib::Response& res) {
            res.set_content(session_to_json(store.get(req.matches[1])), kJson);
          }));

  srv.Post(R"(/api/sessions/([^/]+)/parties/([^/]+)/allocations)",
           guarded([&store](const httplib::Request& req, httplib::Response& res) {
             const auto role = role_param(req.matches[2]);
             const auto body = parse_body(req);
             const auto stage = parse_stage(field<std::string>(body, "stage"));
             auto weights = field<std::vector<double>>(body, "weights");
             const auto s = store.submit(req.matches[1], role, stage, std::move(weights));
             res.set_content(session_to_json(s), kJson);
           }));

  srv.Post(R"(/api/sessions/([^/]+)/suggest)",
           guarded([&store](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const auto s = store.suggest(req.matches[1], field<double>(body, "gamma_a"),
                                          field<double>(body, "gamma_c"));
             res.set_content(suggestion_to_json(s), kJson);
           }));

  srv.Post(R"(/api/sessions/([^/]+)/advance)",
           guarded([&store](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const auto to = parse_session_stage(field<std::string>(body, "to_stage"));
             res.set_content(session_to_json(store.advance(req.matches[1], to)), kJson);
           }));

  srv.Get(R"(/api/sessions/([^/]+)/export)",
          guarded([&store](const httplib::Request& req, httplib::Response& res) {
            res.set_content(store.export_csv(req.matches[1]), "text/csv");
          }));
}

SessionService::~SessionService() { stop(); }

SessionStore& SessionService::store() noexcept { return impl_->store; }

int SessionService::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                              : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    throw Error(Errc::io, "cannot listen on " + host + ":" + std::to_string(port));
  }
  return bound;
}

bool SessionService::listen_after_bind() { return impl_->server.listen_after_bind(); }

void SessionService::stop() {
  if (impl_) impl_->server.stop();
}

void SessionService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace align
