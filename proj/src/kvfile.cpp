#include "msamil/kvfile.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "msamil/errors.hpp"

namespace msamil {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void KvFile::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

std::optional<std::string> KvFile::find(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

const std::string& KvFile::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw Error(ErrorKind::MissingInput, "missing key '" + key + "'");
}

double KvFile::get_double(const std::string& key) const {
  const auto& s = get(key);
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Parse, "key '" + key + "': not a number: " + s);
  }
  return v;
}

long long KvFile::get_int(const std::string& key) const {
  const auto& s = get(key);
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Parse, "key '" + key + "': not an integer: " + s);
  }
  return v;
}

std::string KvFile::str() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

KvFile KvFile::parse(const std::string& text, const std::string& origin) {
  KvFile kv;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const auto eq = line.find('=', start);
    if (eq == std::string::npos) {
      throw Error(ErrorKind::Parse, origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    const auto vs = value.find_first_not_of(" \t");
    value = vs == std::string::npos ? "" : value.substr(vs);
    kv.entries_.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KvFile KvFile::read(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

void KvFile::write(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os << str();
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace msamil
