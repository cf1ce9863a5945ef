#include "branchcap/csv.hpp"

#include <array>
#include <stdexcept>

namespace branchcap {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: to_chars failed");
  return std::string(buf.data(), ptr);
}

CsvWriter::CsvWriter(std::ostream& out, const std::vector<std::string>& header)
    : out_(out) {
  first_in_row_ = true;
  for (const auto& name : header) cell(std::string_view(name));
  end_row();
}

void CsvWriter::raw(std::string_view s) {
  if (!first_in_row_) out_ << ',';
  first_in_row_ = false;
  out_ << s;
}

void CsvWriter::cell(double v) { raw(format_double(v)); }

void CsvWriter::cell(std::uint64_t v) { raw(std::to_string(v)); }

void CsvWriter::cell(std::int64_t v) { raw(std::to_string(v)); }

void CsvWriter::cell(std::string_view s) {
  const bool quote = s.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!quote) {
    raw(s);
    return;
  }
  std::string quoted;
  quoted.reserve(s.size() + 2);
  quoted.push_back('"');
  for (char c : s) {
    if (c == '"') quoted.push_back('"');
    quoted.push_back(c);
  }
  quoted.push_back('"');
  raw(quoted);
}

void CsvWriter::end_row() {
  out_ << "\r\n";
  first_in_row_ = true;
}

}  // namespace branchcap
