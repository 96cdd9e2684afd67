#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "imt/error.hpp"
#include "imt/service.hpp"

namespace imt::http {

inline int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::io: return 500;
  }
  return 500;
}

inline void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

inline void send_error(httplib::Response& res, int status, const std::string& code,
                       const std::string& message) {
  send_json(res, {{"code", code}, {"message", message}}, status);
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "request body must be an object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("malformed JSON body: ") + e.what());
  }
}

inline std::int64_t path_id(const httplib::Request& req, std::size_t index = 1) {
  try {
    return std::stoll(req.matches[static_cast<int>(index)].str());
  } catch (const std::exception&) {
    throw Error(ErrorCode::invalid_argument, "bad id in path");
  }
}

template <typename T>
T field(const nlohmann::json& body, const char* name) {
  if (!body.contains(name)) {
    throw Error(ErrorCode::invalid_argument, std::string("missing field: ") + name);
  }
  try {
    return body.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::invalid_argument, std::string("bad field: ") + name);
  }
}

// Upload bodies carry either raw TSV/JSONL text in "content" or a list of
// {source, target} objects in "entries".
inline std::string upload_content(const nlohmann::json& body) {
  if (body.contains("content")) return field<std::string>(body, "content");
  if (body.contains("entries") && body.at("entries").is_array()) {
    std::string out;
    for (const auto& e : body.at("entries")) out += e.dump() + "\n";
    return out;
  }
  throw Error(ErrorCode::invalid_argument, "upload needs \"content\" or \"entries\"");
}

inline nlohmann::json to_json(const UploadResult& r) {
  return {{"added", r.added}, {"warnings", r.warnings}};
}

using Handler = std::function<nlohmann::json(const httplib::Request&)>;

inline httplib::Server::Handler wrap(Handler h, int ok_status = 200) {
  return [h = std::move(h), ok_status](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, h(req), ok_status);
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

inline void register_routes(httplib::Server& server, Service& service) {
  const Vocabulary& vocab = *service.models().target_vocab;

  server.Post("/projects", wrap([&](const httplib::Request& req) {
                const auto body = parse_body(req);
                const auto settings =
                    body.contains("settings") ? body.at("settings") : nlohmann::json();
                return to_json(service.create_project(field<std::string>(body, "name"), settings));
              }, 201));

  server.Get("/projects", wrap([&](const httplib::Request&) {
               nlohmann::json out = nlohmann::json::array();
               for (const auto& p : service.list_projects()) out.push_back(to_json(p));
               return out;
             }));

  server.Get(R"(/projects/(\d+)/settings)", wrap([&](const httplib::Request& req) {
               return to_json(service.settings(path_id(req)));
             }));

  server.Put(R"(/projects/(\d+)/settings)", wrap([&](const httplib::Request& req) {
               return to_json(service.update_settings(path_id(req), parse_body(req)));
             }));

  server.Post(R"(/projects/(\d+)/tm)", wrap([&](const httplib::Request& req) {
                const auto body = parse_body(req);
                return to_json(service.upload_tm(path_id(req), upload_content(body)));
              }));

  server.Post(R"(/projects/(\d+)/termbase)", wrap([&](const httplib::Request& req) {
                const auto body = parse_body(req);
                return to_json(service.upload_termbase(path_id(req), upload_content(body)));
              }));

  server.Post(R"(/projects/(\d+)/document)", wrap([&](const httplib::Request& req) {
                const auto body = parse_body(req);
                nlohmann::json out = nlohmann::json::array();
                for (const auto& s : service.ingest_document(path_id(req),
                                                             field<std::string>(body, "text"))) {
                  auto j = to_json(s.segment);
                  j["tm_match"] = s.tm_match ? imt::to_json(*s.tm_match) : nlohmann::json(nullptr);
                  nlohmann::json terms = nlohmann::json::array();
                  for (const auto& t : s.terms) {
                    terms.push_back({{"entry", imt::to_json(t.entry)}, {"offset", t.offset}});
                  }
                  j["terms"] = terms;
                  out.push_back(j);
                }
                return out;
              }));

  server.Get(R"(/projects/(\d+)/segments)", wrap([&](const httplib::Request& req) {
               nlohmann::json out = nlohmann::json::array();
               for (const auto& s : service.segments(path_id(req))) out.push_back(to_json(s));
               return out;
             }));

  server.Post(R"(/segments/(\d+)/complete)", wrap([&](const httplib::Request& req) {
                const auto body = parse_body(req);
                const std::string locked =
                    body.contains("locked") ? field<std::string>(body, "locked") : "";
                std::optional<std::string> dangling;
                if (body.contains("dangling") && !body.at("dangling").is_null()) {
                  dangling = field<std::string>(body, "dangling");
                }
                const auto seed =
                    body.contains("seed") ? field<std::uint64_t>(body, "seed") : std::uint64_t{0};
                const auto reply = service.complete(path_id(req), locked, dangling, seed);
                auto j = imt::to_json(reply.completion, vocab);
                j["revision"] = reply.revision;
                j["segment_id"] = reply.segment_id;
                return j;
              }));

  server.Post(R"(/segments/(\d+)/confirm)", wrap([&](const httplib::Request& req) {
                const auto body = parse_body(req);
                const auto reply = service.confirm(path_id(req), field<std::string>(body, "target"));
                nlohmann::json j = {{"segment", to_json(reply.segment)},
                                    {"already_confirmed", reply.already_confirmed}};
                j["tm_id"] = reply.tm_id ? nlohmann::json(*reply.tm_id) : nlohmann::json(nullptr);
                return j;
              }));
}

}  // namespace imt::http
