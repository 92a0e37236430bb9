#include "smug/csvio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace smug {

std::string CsvWriter::quote(const std::string& cell) {
  if (cell.find_first_of(",\"\r\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string CsvWriter::fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

std::string CsvWriter::fmt(long v) { return std::to_string(v); }

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header,
                     const std::string& config_hash, const std::string& code_version)
    : path_(path), n_cols_(header.size()) {
  buffer_ = "# config_hash=" + config_hash + " code_version=" + code_version + "\n";
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += quote(header[i]);
  }
  buffer_ += '\n';
}

void CsvWriter::write_row(const std::vector<std::string>& cells) {
  if (cells.size() != n_cols_) throw std::invalid_argument("CsvWriter: wrong column count");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += quote(cells[i]);
  }
  buffer_ += '\n';
}

CsvWriter::~CsvWriter() {
  std::ofstream os(path_, std::ios::binary | std::ios::trunc);
  os << buffer_;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

CsvFile read_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_csv: cannot open " + path);
  CsvFile out;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream ms(line.substr(1));
      std::string token;
      while (ms >> token) {
        const auto eq = token.find('=');
        if (eq != std::string::npos) out.meta[token.substr(0, eq)] = token.substr(eq + 1);
      }
      continue;
    }
    if (!have_header) {
      out.header = split_csv_line(line);
      have_header = true;
    } else {
      out.rows.push_back(split_csv_line(line));
    }
  }
  return out;
}

std::size_t CsvFile::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::runtime_error("csv: missing column " + name);
}

}  // namespace smug
