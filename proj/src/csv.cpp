#include "persona/csv.hpp"

#include <fstream>
#include <sstream>

#include "persona/error.hpp"

namespace persona::csv {

namespace {

// Length of the valid UTF-8 sequence starting at p, or 0 if invalid.
std::size_t utf8_sequence_length(std::string_view s, std::size_t p) {
  const auto b0 = static_cast<unsigned char>(s[p]);
  if (b0 < 0x80) return 1;
  std::size_t len = 0;
  std::uint32_t min_cp = 0;
  std::uint32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2, min_cp = 0x80, cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3, min_cp = 0x800, cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4, min_cp = 0x10000, cp = b0 & 0x07;
  } else {
    return 0;
  }
  if (p + len > s.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[p + k]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
  return len;
}

}  // namespace

std::string sanitize_utf8(std::string_view bytes) {
  static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
  std::string out;
  out.reserve(bytes.size());
  std::size_t p = 0;
  while (p < bytes.size()) {
    const std::size_t len = utf8_sequence_length(bytes, p);
    if (len == 0) {
      out.append(kReplacement);
      ++p;
    } else {
      out.append(bytes.substr(p, len));
      p += len;
    }
  }
  return out;
}

std::vector<Record> parse(std::string_view raw, std::string_view source_name) {
  const std::string text = sanitize_utf8(raw);
  std::vector<Record> records;
  Record current;
  std::string field;
  std::size_t line = 1;
  std::size_t record_line = 1;
  bool in_quotes = false;
  bool after_quote = false;  // closing quote seen, field must end next
  bool field_started = false;

  auto fail = [&](const std::string& msg) {
    throw IngestError(std::string(source_name) + ":" + std::to_string(line) + ": " + msg);
  };
  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    after_quote = false;
    field_started = false;
  };
  auto end_record = [&] {
    // A physically blank line is not a record.
    const bool blank = current.fields.empty() && field.empty() && !field_started;
    end_field();
    if (!blank) {
      current.line = record_line;
      records.push_back(std::move(current));
    }
    current = Record{};
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        [[fallthrough]];
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      case '"':
        if (field_started) fail("unexpected quote inside unquoted field");
        in_quotes = true;
        field_started = true;
        break;
      default:
        if (after_quote) fail("characters after closing quote");
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) fail("unterminated quoted field");
  if (field_started || !current.fields.empty()) end_record();
  return records;
}

std::vector<Record> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(fields[i]);
  }
  out.push_back('\n');
  return out;
}

}  // namespace persona::csv
