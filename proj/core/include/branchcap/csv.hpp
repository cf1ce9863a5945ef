// RFC-4180 CSV emission: CRLF line endings, a header row, '.' as the
// decimal separator regardless of locale.  Doubles are printed with
// shortest-round-trip formatting, so re-reading a dump recovers the exact
// bit pattern and repeated runs are byte-identical.

#pragma once

#include <charconv>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace branchcap {

std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header);

  template <typename... Fields>
  void row(const Fields&... fields) {
    first_in_row_ = true;
    (cell(fields), ...);
    end_row();
  }

 private:
  void cell(double v);
  void cell(std::uint64_t v);
  void cell(std::int64_t v);
  void cell(int v) { cell(static_cast<std::int64_t>(v)); }
  void cell(unsigned v) { cell(static_cast<std::uint64_t>(v)); }
  void cell(std::string_view s);
  void raw(std::string_view s);
  void end_row();

  std::ostream& out_;
  bool first_in_row_ = true;
};

}  // namespace branchcap
