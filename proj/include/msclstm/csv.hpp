#pragma once

// Minimal RFC 4180 reader and writer: comma delimiter, double-quote
// quoting with "" escapes, quoted fields may span lines, CRLF accepted.

#include <charconv>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace msclstm::csv {

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Reads the next record. Returns false at end of input. A record that
  /// ends inside an open quote is returned as-is with `unterminated()` set.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    unterminated_ = false;
    if (in_.peek() == std::char_traits<char>::eof()) return false;
    std::string field;
    bool quoted = false, any = false;
    for (;;) {
      const int ch = in_.get();
      if (ch == std::char_traits<char>::eof()) {
        unterminated_ = quoted;
        break;
      }
      any = true;
      const char c = static_cast<char>(ch);
      if (quoted) {
        if (c == '"') {
          if (in_.peek() == '"') {
            field.push_back('"');
            in_.get();
          } else {
            quoted = false;
          }
        } else {
          field.push_back(c);
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (c == '\n') {
        break;
      } else if (c == '\r') {
        if (in_.peek() == '\n') in_.get();
        break;
      } else {
        field.push_back(c);
      }
    }
    fields.push_back(std::move(field));
    ++line_;
    return any || !fields.empty();
  }

  bool unterminated() const { return unterminated_; }
  std::size_t records_read() const { return line_; }

 private:
  std::istream& in_;
  bool unterminated_ = false;
  std::size_t line_ = 0;
};

/// Shortest decimal form that parses back to the same double.
inline std::string number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << quote(fields[i]);
  }
  out << '\n';
}

}  // namespace msclstm::csv
