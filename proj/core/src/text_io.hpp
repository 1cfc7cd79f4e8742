#ifndef MARGINFORGE_SRC_TEXT_IO_HPP_
#define MARGINFORGE_SRC_TEXT_IO_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace marginforge::detail {

// 17 significant digits: enough for an exact double round trip.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view token);
std::optional<long long> parse_int(std::string_view token);

std::vector<std::string_view> split_ws(std::string_view line);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Iterates lines, tracking 1-based line numbers and skipping blank and '#' lines.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}
  bool next(std::string_view& line);
  std::size_t line_number() const noexcept { return line_number_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_number_ = 0;
};

std::string trim(std::string_view s);

}  // namespace marginforge::detail

#endif  // MARGINFORGE_SRC_TEXT_IO_HPP_
