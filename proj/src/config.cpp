#include "maq2l/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "maq2l/error.hpp"

namespace maq2l {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

FlatConfig FlatConfig::parse(const std::string& text) {
  FlatConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value', got '" + line + "'", lineno);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", lineno);
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void FlatConfig::merge(const FlatConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::optional<std::string> FlatConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string FlatConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

std::string FlatConfig::str(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

namespace {
[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not a valid " + kind);
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "number");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "integer");
  return out;
}
}  // namespace

double FlatConfig::real(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? parse_real(key, *v) : fallback;
}

std::int64_t FlatConfig::integer(const std::string& key, std::int64_t fallback) const {
  auto v = get(key);
  return v ? parse_int(key, *v) : fallback;
}

std::size_t FlatConfig::count(const std::string& key, std::size_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  const auto n = parse_int(key, *v);
  if (n < 0) bad_value(key, *v, "non-negative integer");
  return static_cast<std::size_t>(n);
}

bool FlatConfig::flag(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  bad_value(key, *v, "boolean");
}

std::vector<std::string> FlatConfig::list(const std::string& key, const std::vector<std::string>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  if (trim(*v).empty()) return out;
  for (auto& part : split(*v, ',')) out.push_back(trim(part));
  return out;
}

std::vector<double> FlatConfig::reals(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& s : list(key)) out.push_back(parse_real(key, s));
  return out;
}

std::vector<std::size_t> FlatConfig::counts(const std::string& key, const std::vector<std::size_t>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::size_t> out;
  for (const auto& s : list(key)) {
    const auto n = parse_int(key, s);
    if (n < 0) bad_value(key, s, "non-negative integer");
    out.push_back(static_cast<std::size_t>(n));
  }
  return out;
}

}  // namespace maq2l
