#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace podnet::jsonio {

// Streaming JSON writer used for every file this library emits. Doubles are
// printed with 17 significant digits so serialized values round-trip exactly
// and reruns produce byte-identical files.
class Writer {
 public:
  void begin_object() {
    comma();
    buf_ += '{';
    stack_.push_back(true);
  }

  void end_object() {
    buf_ += '}';
    stack_.pop_back();
  }

  void begin_array() {
    comma();
    buf_ += '[';
    stack_.push_back(true);
  }

  void end_array() {
    buf_ += ']';
    stack_.pop_back();
  }

  void key(std::string_view name) {
    comma();
    append_string(name);
    buf_ += ':';
    pending_value_ = true;
  }

  void number(double v) {
    if (!std::isfinite(v)) throw std::runtime_error("jsonio::Writer: non-finite number");
    comma();
    char tmp[40];
    std::snprintf(tmp, sizeof tmp, "%.17g", v);
    buf_ += tmp;
  }

  void integer(std::int64_t v) {
    comma();
    buf_ += std::to_string(v);
  }

  void unsigned_integer(std::uint64_t v) {
    comma();
    buf_ += std::to_string(v);
  }

  void boolean(bool v) {
    comma();
    buf_ += v ? "true" : "false";
  }

  void string(std::string_view v) {
    comma();
    append_string(v);
  }

  void number_array(std::span<const double> values) {
    begin_array();
    for (double v : values) number(v);
    end_array();
  }

  // Splices an already-serialized JSON value in as the next element.
  void raw(std::string_view json) {
    comma();
    buf_ += json;
  }

  const std::string& str() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void comma() {
    if (pending_value_) {
      pending_value_ = false;
      return;
    }
    if (!stack_.empty()) {
      if (!stack_.back())
        buf_ += ',';
      else
        stack_.back() = false;
    }
  }

  void append_string(std::string_view v) {
    buf_ += '"';
    for (char c : v) {
      switch (c) {
        case '"': buf_ += "\\\""; break;
        case '\\': buf_ += "\\\\"; break;
        case '\n': buf_ += "\\n"; break;
        case '\r': buf_ += "\\r"; break;
        case '\t': buf_ += "\\t"; break;
        default:
          if (static_cast<unsigned char>(c) < 0x20) {
            char tmp[8];
            std::snprintf(tmp, sizeof tmp, "\\u%04x", c);
            buf_ += tmp;
          } else {
            buf_ += c;
          }
      }
    }
    buf_ += '"';
  }

  std::string buf_;
  std::vector<bool> stack_;  // true = no element written yet at this level
  bool pending_value_ = false;
};

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

// --- parsing helpers on top of nlohmann::json ---

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& context) {
  auto it = j.find(key);
  if (it == j.end()) throw std::runtime_error(context + ": missing field '" + key + "'");
  return *it;
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                                const std::string& context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) throw std::runtime_error(context + ": unknown key '" + it.key() + "'");
  }
}

inline std::vector<double> to_vector(const nlohmann::json& j, const std::string& context) {
  if (!j.is_array()) throw std::runtime_error(context + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw std::runtime_error(context + ": expected an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::vector<std::vector<double>> to_matrix(const nlohmann::json& j, const std::string& context) {
  if (!j.is_array()) throw std::runtime_error(context + ": expected an array of arrays");
  std::vector<std::vector<double>> out;
  out.reserve(j.size());
  for (const auto& row : j) out.push_back(to_vector(row, context));
  return out;
}

}  // namespace podnet::jsonio
