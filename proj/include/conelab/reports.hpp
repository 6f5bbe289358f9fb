#pragma once

#include <string>
#include <vector>

#include "conelab/numerics.hpp"
#include "nlohmann/json.hpp"

namespace conelab::reports {

/* shortest round-trip decimal formatting, deterministic across runs */
std::string format_double(double x);

/* RFC 4180 quoting: wrap in double quotes when the cell contains a comma,
 * quote, CR or LF; embedded quotes are doubled */
std::string csv_escape(const std::string& cell);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void row(const std::vector<std::string>& cells);
  size_t rows() const { return rows_; }
  const std::string& str() const { return body_; }
  void save(const std::string& path) const;

 private:
  size_t columns_;
  size_t rows_ = 0;
  std::string body_;
};

/* structured text: "[section]" headers and "key=value" lines */
class KeyValueLog {
 public:
  void section(const std::string& name);
  void put(const std::string& key, const std::string& value);
  void put(const std::string& key, double value);
  void put(const std::string& key, long long value);
  void put(const std::string& key, int value) { put(key, (long long)value); }
  void put(const std::string& key, size_t value) {
    put(key, (long long)value);
  }
  void put(const std::string& key, bool value);

  const std::string& str() const { return body_; }
  void save(const std::string& path) const;

 private:
  std::string body_;
};

/* versioned JSON summary; object keys serialize sorted, so equal content
 * yields byte-identical output */
class JsonSummary {
 public:
  explicit JsonSummary(const std::string& tool, int format_version = 1);

  nlohmann::json& data() { return root_; }
  const nlohmann::json& data() const { return root_; }
  std::string str() const;
  void save(const std::string& path) const;

 private:
  nlohmann::json root_;
};

void write_text_file(const std::string& path, const std::string& content);

}  // namespace conelab::reports
