#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "itd/datetime.hpp"

namespace itd {

enum class EventKind {
  Logon,
  Logoff,
  DeviceConnect,
  DeviceDisconnect,
  FileOp,
  Email,
  Http,
};

const char* event_kind_name(EventKind k);
EventKind event_kind_from_name(const std::string& name);

// One normalized audit record. payload carries the kind-specific attributes:
//   FileOp -> filename; Http -> url;
//   Email  -> attachment_count, attachment_total_size_bytes (plus to/from/size).
struct LogEvent {
  EventKind kind = EventKind::Logon;
  Timestamp ts = 0;
  std::string user;
  std::string pc;
  std::map<std::string, std::string> payload;

  long payload_long(const std::string& key, long fallback = 0) const;

  bool operator==(const LogEvent& other) const = default;
};

struct UserProfile {
  std::string user;
  std::string own_pc;
  Timestamp first_seen = 0;
  Timestamp last_seen = 0;
};

enum class Granularity { Week, Day, Session };

const char* granularity_name(Granularity g);
Granularity granularity_from_name(const std::string& name);

// One (user, window) group of events. Week/Day windows are half-open
// [window_start, window_end); Session windows closed by a Logoff or by
// end-of-data include their closing instant.
struct Bucket {
  std::string user;
  Granularity granularity = Granularity::Day;
  Timestamp window_start = 0;
  Timestamp window_end = 0;
  std::vector<LogEvent> events;
  bool orphan = false;  // session that never saw its opening Logon
  std::string pc;       // session granularity only

  double duration_hours() const { return (window_end - window_start) / 3600.0; }
};

// JSON-lines persistence for normalized events (UTF-8, one object per line).
std::string event_to_jsonl(const LogEvent& ev);
LogEvent event_from_jsonl(const std::string& line);

}  // namespace itd
