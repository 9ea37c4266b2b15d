#include "itd/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <istream>

#include "itd/csv.hpp"
#include "itd/error.hpp"

namespace itd {

namespace {

std::string strip_domain(const std::string& user) {
  // r4.2 logon rows carry "DOMAIN/user".
  const auto slash = user.rfind('/');
  return slash == std::string::npos ? user : user.substr(slash + 1);
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// "a.doc(25600);b.pdf(25600)" -> count 2, total 51200. A bare integer is a
// count-only column (some releases drop the per-file sizes).
void parse_attachments(const std::string& field, long& count, long& total) {
  count = 0;
  total = 0;
  if (field.empty()) return;
  if (all_digits(field)) {
    count = std::stol(field);
    return;
  }
  std::size_t pos = 0;
  while (pos <= field.size()) {
    const auto semi = field.find(';', pos);
    const std::string item =
        field.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos);
    if (!item.empty()) {
      ++count;
      const auto open = item.rfind('(');
      const auto close = item.rfind(')');
      if (open != std::string::npos && close != std::string::npos && close > open + 1) {
        const std::string bytes = item.substr(open + 1, close - open - 1);
        if (all_digits(bytes)) total += std::stol(bytes);
      }
    }
    if (semi == std::string::npos) break;
    pos = semi + 1;
  }
}

struct ResolvedColumns {
  int id = -1, date = -1, user = -1, pc = -1;
  int activity = -1, filename = -1, url = -1;
  int to = -1, cc = -1, bcc = -1, from = -1, size = -1, attachments = -1, content = -1;
};

int require_column(const CsvReader& reader, const ColumnMap& map, const std::string& field) {
  const std::string& col = map.column_for(field);
  const int idx = reader.column_index(col);
  if (idx < 0) {
    fail(ErrorKind::MissingColumn, "header lacks column '" + col + "' for field '" + field + "'");
  }
  return idx;
}

int optional_column(const CsvReader& reader, const ColumnMap& map, const std::string& field) {
  auto it = map.columns.find(field);
  if (it == map.columns.end()) return -1;
  return reader.column_index(it->second);
}

std::string field_at(const std::vector<std::string>& row, int idx) {
  if (idx < 0 || idx >= static_cast<int>(row.size())) return {};
  return row[static_cast<std::size_t>(idx)];
}

}  // namespace

const char* source_kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::Logon: return "logon";
    case SourceKind::Device: return "device";
    case SourceKind::File: return "file";
    case SourceKind::Email: return "email";
    case SourceKind::Http: return "http";
  }
  return "unknown";
}

ColumnMap ColumnMap::defaults(SourceKind kind) {
  ColumnMap m;
  m.columns = {{"id", "id"}, {"date", "date"}, {"user", "user"}, {"pc", "pc"}};
  switch (kind) {
    case SourceKind::Logon:
    case SourceKind::Device:
      m.columns["activity"] = "activity";
      break;
    case SourceKind::File:
      m.columns["filename"] = "filename";
      m.columns["content"] = "content";
      break;
    case SourceKind::Email:
      m.columns["to"] = "to";
      m.columns["cc"] = "cc";
      m.columns["bcc"] = "bcc";
      m.columns["from"] = "from";
      m.columns["size"] = "size";
      m.columns["attachments"] = "attachments";
      m.columns["content"] = "content";
      break;
    case SourceKind::Http:
      m.columns["url"] = "url";
      m.columns["content"] = "content";
      break;
  }
  return m;
}

const std::string& ColumnMap::column_for(const std::string& field) const {
  auto it = columns.find(field);
  if (it == columns.end()) {
    fail(ErrorKind::ConfigError, "column map has no entry for field '" + field + "'");
  }
  return it->second;
}

std::vector<LogEvent> parse_events(SourceKind kind, const ColumnMap& map, std::istream& in,
                                   ParseStats* stats) {
  CsvReader reader(in);
  if (!reader.has_header()) fail(ErrorKind::EmptyInput, "no header row");

  ResolvedColumns col;
  col.date = require_column(reader, map, "date");
  col.user = require_column(reader, map, "user");
  col.pc = require_column(reader, map, "pc");
  col.id = optional_column(reader, map, "id");
  switch (kind) {
    case SourceKind::Logon:
    case SourceKind::Device:
      col.activity = require_column(reader, map, "activity");
      break;
    case SourceKind::File:
      col.filename = require_column(reader, map, "filename");
      col.content = optional_column(reader, map, "content");
      break;
    case SourceKind::Email:
      col.attachments = require_column(reader, map, "attachments");
      col.to = optional_column(reader, map, "to");
      col.cc = optional_column(reader, map, "cc");
      col.bcc = optional_column(reader, map, "bcc");
      col.from = optional_column(reader, map, "from");
      col.size = optional_column(reader, map, "size");
      col.content = optional_column(reader, map, "content");
      break;
    case SourceKind::Http:
      col.url = require_column(reader, map, "url");
      col.content = optional_column(reader, map, "content");
      break;
  }

  ParseStats local;
  std::vector<LogEvent> events;
  std::vector<std::string> row;
  while (reader.next_row(row)) {
    ++local.rows;
    LogEvent ev;
    const auto ts = parse_log_datetime(field_at(row, col.date));
    ev.user = strip_domain(field_at(row, col.user));
    ev.pc = field_at(row, col.pc);
    if (!ts || ev.user.empty() || ev.pc.empty()) {
      ++local.malformed;
      continue;
    }
    ev.ts = *ts;
    const std::string id = field_at(row, col.id);
    if (!id.empty()) ev.payload["id"] = id;

    bool ok = true;
    switch (kind) {
      case SourceKind::Logon: {
        const std::string act = field_at(row, col.activity);
        if (act == "Logon") ev.kind = EventKind::Logon;
        else if (act == "Logoff") ev.kind = EventKind::Logoff;
        else ok = false;
        break;
      }
      case SourceKind::Device: {
        const std::string act = field_at(row, col.activity);
        if (act == "Connect") ev.kind = EventKind::DeviceConnect;
        else if (act == "Disconnect") ev.kind = EventKind::DeviceDisconnect;
        else ok = false;
        break;
      }
      case SourceKind::File: {
        ev.kind = EventKind::FileOp;
        const std::string filename = field_at(row, col.filename);
        if (filename.empty()) {
          ok = false;
          break;
        }
        ev.payload["filename"] = filename;
        const std::string content = field_at(row, col.content);
        if (!content.empty()) ev.payload["content"] = content;
        break;
      }
      case SourceKind::Email: {
        ev.kind = EventKind::Email;
        long count = 0, total = 0;
        parse_attachments(field_at(row, col.attachments), count, total);
        ev.payload["attachment_count"] = std::to_string(count);
        ev.payload["attachment_total_size_bytes"] = std::to_string(total);
        const std::string raw = field_at(row, col.attachments);
        if (!raw.empty()) ev.payload["attachments"] = raw;
        for (auto [key, idx] : {std::pair<const char*, int>{"to", col.to},
                                {"cc", col.cc},
                                {"bcc", col.bcc},
                                {"from", col.from},
                                {"size", col.size},
                                {"content", col.content}}) {
          const std::string value = field_at(row, idx);
          if (!value.empty()) ev.payload[key] = value;
        }
        break;
      }
      case SourceKind::Http: {
        ev.kind = EventKind::Http;
        const std::string url = field_at(row, col.url);
        if (url.empty()) {
          ok = false;
          break;
        }
        ev.payload["url"] = url;
        const std::string content = field_at(row, col.content);
        if (!content.empty()) ev.payload["content"] = content;
        break;
      }
    }

    if (!ok) {
      ++local.malformed;
      continue;
    }
    ++local.parsed;
    events.push_back(std::move(ev));
  }

  if (stats) *stats = local;
  return events;
}

SourceKind source_for_event(EventKind kind) {
  switch (kind) {
    case EventKind::Logon:
    case EventKind::Logoff: return SourceKind::Logon;
    case EventKind::DeviceConnect:
    case EventKind::DeviceDisconnect: return SourceKind::Device;
    case EventKind::FileOp: return SourceKind::File;
    case EventKind::Email: return SourceKind::Email;
    case EventKind::Http: return SourceKind::Http;
  }
  return SourceKind::Logon;
}

std::string serialize_event_row(const LogEvent& ev, std::string* id_out) {
  auto payload_str = [&](const char* key) -> std::string {
    auto it = ev.payload.find(key);
    return it == ev.payload.end() ? std::string{} : it->second;
  };
  std::string id = payload_str("id");
  if (id_out) *id_out = id;
  const std::string date = format_log_datetime(ev.ts);
  std::vector<std::string> fields;
  switch (source_for_event(ev.kind)) {
    case SourceKind::Logon:
      fields = {id, date, ev.user, ev.pc,
                ev.kind == EventKind::Logon ? "Logon" : "Logoff"};
      break;
    case SourceKind::Device:
      fields = {id, date, ev.user, ev.pc,
                ev.kind == EventKind::DeviceConnect ? "Connect" : "Disconnect"};
      break;
    case SourceKind::File:
      fields = {id, date, ev.user, ev.pc, payload_str("filename"), payload_str("content")};
      break;
    case SourceKind::Email:
      fields = {id,
                date,
                ev.user,
                ev.pc,
                payload_str("to"),
                payload_str("cc"),
                payload_str("bcc"),
                payload_str("from"),
                payload_str("size"),
                payload_str("attachments"),
                payload_str("content")};
      break;
    case SourceKind::Http:
      fields = {id, date, ev.user, ev.pc, payload_str("url"), payload_str("content")};
      break;
  }
  return join_csv_row(fields);
}

std::vector<Bucket> sessionize(const std::vector<LogEvent>& events_of_user) {
  std::vector<Bucket> done;
  std::map<std::string, Bucket> open;     // pc -> session opened by a Logon
  std::map<std::string, Bucket> orphans;  // pc -> activity with no open session

  auto close_bucket = [&](Bucket&& b, Timestamp end) {
    b.window_end = end;
    done.push_back(std::move(b));
  };
  auto close_orphan = [&](const std::string& pc) {
    auto it = orphans.find(pc);
    if (it == orphans.end()) return;
    const Timestamp end = it->second.events.back().ts;
    close_bucket(std::move(it->second), end);
    orphans.erase(it);
  };

  for (const LogEvent& ev : events_of_user) {
    switch (ev.kind) {
      case EventKind::Logon: {
        auto it = open.find(ev.pc);
        if (it != open.end()) {
          // Next Logon on the same pc closes the previous session (exclusive).
          close_bucket(std::move(it->second), ev.ts);
          open.erase(it);
        }
        close_orphan(ev.pc);
        Bucket b;
        b.user = ev.user;
        b.granularity = Granularity::Session;
        b.window_start = ev.ts;
        b.pc = ev.pc;
        b.events.push_back(ev);
        open.emplace(ev.pc, std::move(b));
        break;
      }
      case EventKind::Logoff: {
        auto it = open.find(ev.pc);
        if (it != open.end()) {
          it->second.events.push_back(ev);
          close_bucket(std::move(it->second), ev.ts);
          open.erase(it);
        } else {
          auto& orphan = orphans[ev.pc];
          if (orphan.events.empty()) {
            orphan.user = ev.user;
            orphan.granularity = Granularity::Session;
            orphan.window_start = ev.ts;
            orphan.pc = ev.pc;
            orphan.orphan = true;
          }
          orphan.events.push_back(ev);
        }
        break;
      }
      default: {
        auto it = open.find(ev.pc);
        if (it != open.end()) {
          it->second.events.push_back(ev);
        } else {
          auto& orphan = orphans[ev.pc];
          if (orphan.events.empty()) {
            orphan.user = ev.user;
            orphan.granularity = Granularity::Session;
            orphan.window_start = ev.ts;
            orphan.pc = ev.pc;
            orphan.orphan = true;
          }
          orphan.events.push_back(ev);
        }
        break;
      }
    }
  }

  for (auto& [pc, b] : open) {
    const Timestamp end = b.events.back().ts;
    close_bucket(std::move(b), end);
  }
  for (auto& [pc, b] : orphans) {
    const Timestamp end = b.events.back().ts;
    close_bucket(std::move(b), end);
  }

  std::sort(done.begin(), done.end(), [](const Bucket& a, const Bucket& b) {
    if (a.window_start != b.window_start) return a.window_start < b.window_start;
    return a.pc < b.pc;
  });
  return done;
}

std::map<BucketKey, Bucket> aggregate(const std::vector<LogEvent>& events,
                                      Granularity granularity) {
  std::map<BucketKey, Bucket> out;

  if (granularity == Granularity::Session) {
    std::map<std::string, std::vector<LogEvent>> per_user;
    for (const LogEvent& ev : events) per_user[ev.user].push_back(ev);
    for (auto& [user, evs] : per_user) {
      std::stable_sort(evs.begin(), evs.end(),
                       [](const LogEvent& a, const LogEvent& b) { return a.ts < b.ts; });
      for (Bucket& b : sessionize(evs)) {
        BucketKey key{user, b.window_start};
        // Concurrent same-second logons on two pcs would collide; nudge the key.
        while (out.count(key)) ++key.window_start;
        out.emplace(std::move(key), std::move(b));
      }
    }
    return out;
  }

  for (const LogEvent& ev : events) {
    const Timestamp start =
        granularity == Granularity::Day ? day_start(ev.ts) : week_start(ev.ts);
    BucketKey key{ev.user, start};
    auto it = out.find(key);
    if (it == out.end()) {
      Bucket b;
      b.user = ev.user;
      b.granularity = granularity;
      b.window_start = start;
      b.window_end =
          start + (granularity == Granularity::Day ? kSecondsPerDay : 7 * kSecondsPerDay);
      it = out.emplace(std::move(key), std::move(b)).first;
    }
    it->second.events.push_back(ev);
  }
  for (auto& [key, bucket] : out) {
    std::stable_sort(bucket.events.begin(), bucket.events.end(),
                     [](const LogEvent& a, const LogEvent& b) { return a.ts < b.ts; });
  }
  return out;
}

}  // namespace itd
