#include "conelab/reports.hpp"

#include <cstdio>
#include <fstream>

namespace conelab::reports {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_escape(const std::string& cell) {
  bool needs = cell.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

CsvWriter::CsvWriter(std::vector<std::string> header)
    : columns_(header.size()) {
  require(!header.empty(), "CsvWriter: header row is mandatory");
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) body_ += ",";
    body_ += csv_escape(header[i]);
  }
  body_ += "\n";
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  require(cells.size() == columns_,
          "CsvWriter: row width does not match the header");
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) body_ += ",";
    body_ += csv_escape(cells[i]);
  }
  body_ += "\n";
  ++rows_;
}

void CsvWriter::save(const std::string& path) const {
  write_text_file(path, body_);
}

void KeyValueLog::section(const std::string& name) {
  body_ += "[" + name + "]\n";
}

void KeyValueLog::put(const std::string& key, const std::string& value) {
  require(key.find('=') == std::string::npos &&
              key.find('\n') == std::string::npos,
          "KeyValueLog: key must not contain '=' or newline");
  require(value.find('\n') == std::string::npos,
          "KeyValueLog: value must not contain newline");
  body_ += key + "=" + value + "\n";
}

void KeyValueLog::put(const std::string& key, double value) {
  put(key, format_double(value));
}

void KeyValueLog::put(const std::string& key, long long value) {
  put(key, std::to_string(value));
}

void KeyValueLog::put(const std::string& key, bool value) {
  put(key, std::string(value ? "true" : "false"));
}

void KeyValueLog::save(const std::string& path) const {
  write_text_file(path, body_);
}

JsonSummary::JsonSummary(const std::string& tool, int format_version) {
  root_["tool"] = tool;
  root_["format_version"] = format_version;
}

std::string JsonSummary::str() const { return root_.dump(2) + "\n"; }

void JsonSummary::save(const std::string& path) const {
  write_text_file(path, str());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_text_file: cannot open " + path);
  out.write(content.data(), (std::streamsize)content.size());
  require(out.good(), "write_text_file: write failed for " + path);
}

}  // namespace conelab::reports
