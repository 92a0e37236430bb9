#pragma once

#include <map>
#include <string>
#include <vector>

namespace smug {

/// CSV writer with RFC-4180 quoting and 17-significant-digit floats. A single
/// leading '#' metadata line carries the producing config hash and code
/// version before the header row.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header,
            const std::string& config_hash, const std::string& code_version);
  ~CsvWriter();

  void write_row(const std::vector<std::string>& cells);
  static std::string fmt(double v);
  static std::string fmt(long v);
  static std::string quote(const std::string& cell);

 private:
  std::string path_;
  std::string buffer_;
  std::size_t n_cols_;
};

struct CsvFile {
  std::map<std::string, std::string> meta;  // from the leading '#' line
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvFile read_csv(const std::string& path);

}  // namespace smug
