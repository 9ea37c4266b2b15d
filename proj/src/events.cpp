#include "itd/events.hpp"

#include <json.hpp>

#include "itd/error.hpp"

namespace itd {

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::Logon: return "Logon";
    case EventKind::Logoff: return "Logoff";
    case EventKind::DeviceConnect: return "DeviceConnect";
    case EventKind::DeviceDisconnect: return "DeviceDisconnect";
    case EventKind::FileOp: return "FileOp";
    case EventKind::Email: return "Email";
    case EventKind::Http: return "Http";
  }
  return "Unknown";
}

EventKind event_kind_from_name(const std::string& name) {
  if (name == "Logon") return EventKind::Logon;
  if (name == "Logoff") return EventKind::Logoff;
  if (name == "DeviceConnect") return EventKind::DeviceConnect;
  if (name == "DeviceDisconnect") return EventKind::DeviceDisconnect;
  if (name == "FileOp") return EventKind::FileOp;
  if (name == "Email") return EventKind::Email;
  if (name == "Http") return EventKind::Http;
  fail(ErrorKind::DataError, "unknown event kind '" + name + "'");
}

long LogEvent::payload_long(const std::string& key, long fallback) const {
  auto it = payload.find(key);
  if (it == payload.end()) return fallback;
  try {
    return std::stol(it->second);
  } catch (...) {
    return fallback;
  }
}

const char* granularity_name(Granularity g) {
  switch (g) {
    case Granularity::Week: return "week";
    case Granularity::Day: return "day";
    case Granularity::Session: return "session";
  }
  return "day";
}

Granularity granularity_from_name(const std::string& name) {
  if (name == "week") return Granularity::Week;
  if (name == "day") return Granularity::Day;
  if (name == "session") return Granularity::Session;
  fail(ErrorKind::ConfigError, "unknown granularity '" + name + "' (want week|day|session)");
}

std::string event_to_jsonl(const LogEvent& ev) {
  nlohmann::json j;
  j["kind"] = event_kind_name(ev.kind);
  j["ts"] = format_iso_datetime(ev.ts);
  j["user"] = ev.user;
  j["pc"] = ev.pc;
  if (!ev.payload.empty()) j["payload"] = ev.payload;
  return j.dump();
}

LogEvent event_from_jsonl(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  LogEvent ev;
  ev.kind = event_kind_from_name(j.at("kind").get<std::string>());
  auto ts = parse_iso_datetime(j.at("ts").get<std::string>());
  if (!ts) fail(ErrorKind::DataError, "bad timestamp in event record: " + line);
  ev.ts = *ts;
  ev.user = j.at("user").get<std::string>();
  ev.pc = j.at("pc").get<std::string>();
  if (j.contains("payload")) {
    ev.payload = j.at("payload").get<std::map<std::string, std::string>>();
  }
  return ev;
}

}  // namespace itd
