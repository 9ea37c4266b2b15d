#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "itd/events.hpp"

namespace itd {

enum class SourceKind { Logon, Device, File, Email, Http };

const char* source_kind_name(SourceKind k);

// Which CSV column feeds which logical field. CERT releases shuffle columns
// between versions, so the mapping is configuration with r4.2-style defaults:
//   logon.csv  id,date,user,pc,activity        (activity: Logon|Logoff)
//   device.csv id,date,user,pc,activity        (activity: Connect|Disconnect)
//   file.csv   id,date,user,pc,filename,content
//   email.csv  id,date,user,pc,to,cc,bcc,from,size,attachments,content
//   http.csv   id,date,user,pc,url,content
struct ColumnMap {
  std::map<std::string, std::string> columns;  // logical field -> csv column

  static ColumnMap defaults(SourceKind kind);
  const std::string& column_for(const std::string& field) const;
};

struct ParseStats {
  std::size_t rows = 0;
  std::size_t parsed = 0;
  std::size_t malformed = 0;
};

// Parses one source file. Well-formed rows come back in file order; malformed
// rows are counted and skipped. Throws MissingColumn / EmptyInput.
std::vector<LogEvent> parse_events(SourceKind kind, const ColumnMap& map, std::istream& in,
                                   ParseStats* stats = nullptr);

// Inverse of parse_events for one event, using the default column layout.
// parse(serialize(ev)) == ev.
std::string serialize_event_row(const LogEvent& ev, std::string* id_out = nullptr);
SourceKind source_for_event(EventKind kind);

// Splits one user's chronologically-sorted events into sessions. A session
// opens at a Logon and closes at the first Logoff on the same pc, else at the
// next Logon on that pc, else at end-of-data. Non-logon activity on a pc with
// no open session collects into an orphan session for that pc.
std::vector<Bucket> sessionize(const std::vector<LogEvent>& events_of_user);

struct BucketKey {
  std::string user;
  Timestamp window_start;
  auto operator<=>(const BucketKey&) const = default;
};

// Buckets events per user per window. Day windows are calendar days, week
// windows Monday-anchored 7-day spans; Session delegates to sessionize.
std::map<BucketKey, Bucket> aggregate(const std::vector<LogEvent>& events, Granularity granularity);

}  // namespace itd
