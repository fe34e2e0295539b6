#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace msamil {

/// Ordered key=value text file. Blank lines and lines starting with '#' are skipped.
class KvFile {
 public:
  void set(const std::string& key, const std::string& value);
  template <typename T>
  void set_number(const std::string& key, T value);

  std::optional<std::string> find(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws MissingInput
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string str() const;
  static KvFile parse(const std::string& text, const std::string& origin = "<text>");
  static KvFile read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest decimal form that round-trips the double exactly.
std::string format_double(double v);

template <typename T>
void KvFile::set_number(const std::string& key, T value) {
  if constexpr (std::is_floating_point_v<T>) {
    set(key, format_double(static_cast<double>(value)));
  } else {
    set(key, std::to_string(value));
  }
}

}  // namespace msamil
