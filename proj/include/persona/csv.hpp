#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace persona::csv {

struct Record {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

// RFC-4180 parser: quoted fields may hold commas, doubled quotes and line
// breaks. CRLF and LF line endings are both accepted. Invalid UTF-8 byte
// sequences are replaced by U+FFFD. Throws IngestError on an unterminated
// quote or stray characters after a closing quote.
std::vector<Record> parse(std::string_view text, std::string_view source_name = "<memory>");
std::vector<Record> read_file(const std::string& path);

// Quotes a field only when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);
std::string format_row(const std::vector<std::string>& fields);

std::string sanitize_utf8(std::string_view bytes);

}  // namespace persona::csv
