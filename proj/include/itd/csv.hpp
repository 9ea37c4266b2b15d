#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace itd {

// Splits one CSV line; double quotes group fields, "" inside quotes unescapes.
std::vector<std::string> split_csv_line(std::string_view line);

// Quotes the field when it contains a comma, quote or newline.
std::string csv_escape(const std::string& field);

std::string join_csv_row(const std::vector<std::string>& fields);

// Header-mapped CSV reader over a stream. Rows with a different field count
// than the header are still returned; callers decide what counts as malformed.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in);

  bool has_header() const { return has_header_; }
  const std::vector<std::string>& header() const { return header_; }

  // -1 when the column is absent.
  int column_index(const std::string& name) const;

  bool next_row(std::vector<std::string>& fields);

 private:
  std::istream& in_;
  bool has_header_ = false;
  std::vector<std::string> header_;
  std::map<std::string, int> index_;
};

}  // namespace itd
