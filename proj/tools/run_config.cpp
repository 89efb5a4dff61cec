#include "run_config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "qspan/errors.hpp"

namespace qspan::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> to_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "inf" || s == "+inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  try {
    const double v = std::stod(s, &used);
    if (used == s.size() && !std::isnan(v)) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

}  // namespace

RunConfig RunConfig::parse(std::istream& in, const std::string& source) {
  RunConfig cfg;
  cfg.source_ = source;
  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ParseError(source, line, "unterminated section header");
      section = trim(text.substr(1, text.size() - 2));
      if (section.empty()) throw ParseError(source, line, "empty section name");
      if (cfg.sections_.count(section)) throw ParseError(source, line, "section [" + section + "] repeated");
      cfg.sections_[section] = line;
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(source, line, "expected key = value");
    if (section.empty()) throw ParseError(source, line, "key outside any [section]");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ParseError(source, line, "missing key");
    if (!cfg.entries_.emplace(std::make_pair(section, key), Entry{value, line}).second)
      throw ParseError(source, line, "[" + section + "] " + key + " given twice");
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open config file");
  return parse(in, path);
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
  return entries_.count({section, key}) > 0;
}

bool RunConfig::has_section(const std::string& section) const { return sections_.count(section) > 0; }

void RunConfig::fail(const std::string& section, const std::string& key, const std::string& msg) const {
  const auto it = entries_.find({section, key});
  const int line = it == entries_.end() ? 0 : it->second.line;
  throw ParseError(source_, line, "[" + section + "] " + key + ": " + msg);
}

const RunConfig::Entry& RunConfig::entry(const std::string& section, const std::string& key) const {
  const auto it = entries_.find({section, key});
  if (it == entries_.end()) fail(section, key, "required key missing");
  used_.insert({section, key});
  return it->second;
}

std::string RunConfig::text(const std::string& section, const std::string& key) const {
  return entry(section, key).value;
}

std::string RunConfig::text(const std::string& section, const std::string& key, const std::string& fallback) const {
  return has(section, key) ? text(section, key) : fallback;
}

double RunConfig::number(const std::string& section, const std::string& key) const {
  const auto v = to_number(entry(section, key).value);
  if (!v) fail(section, key, "expected a number");
  return *v;
}

double RunConfig::number(const std::string& section, const std::string& key, double fallback) const {
  return has(section, key) ? number(section, key) : fallback;
}

int RunConfig::integer(const std::string& section, const std::string& key) const {
  const double v = number(section, key);
  if (v != std::floor(v) || std::abs(v) > 1e9) fail(section, key, "expected an integer");
  return static_cast<int>(v);
}

int RunConfig::integer(const std::string& section, const std::string& key, int fallback) const {
  return has(section, key) ? integer(section, key) : fallback;
}

bool RunConfig::flag(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = text(section, key);
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  fail(section, key, "expected true or false");
}

std::vector<double> RunConfig::numbers(const std::string& section, const std::string& key) const {
  const std::string v = entry(section, key).value;
  std::vector<double> out;
  std::istringstream words(v);
  std::string head;
  words >> head;
  if (head == "linspace" || head == "logspace") {
    std::string a, b, n;
    std::string extra;
    if (!(words >> a >> b >> n) || (words >> extra)) fail(section, key, head + " takes: start stop count");
    const auto lo = to_number(a), hi = to_number(b), cnt = to_number(n);
    if (!lo || !hi || !cnt || *cnt < 1 || *cnt != std::floor(*cnt)) fail(section, key, "bad " + head + " arguments");
    if (head == "logspace" && !(*lo > 0 && *hi > 0)) fail(section, key, "logspace needs positive ends");
    const int count = static_cast<int>(*cnt);
    for (int i = 0; i < count; ++i) {
      const double f = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
      out.push_back(head == "linspace" ? *lo + f * (*hi - *lo)
                                       : std::exp(std::log(*lo) + f * (std::log(*hi) - std::log(*lo))));
    }
    return out;
  }
  std::stringstream items(v);
  for (std::string item; std::getline(items, item, ',');) {
    const auto x = to_number(item);
    if (!x) fail(section, key, "'" + trim(item) + "' is not a number");
    out.push_back(*x);
  }
  if (out.empty()) fail(section, key, "empty list");
  return out;
}

std::vector<double> RunConfig::numbers(const std::string& section, const std::string& key,
                                       std::vector<double> fallback) const {
  return has(section, key) ? numbers(section, key) : fallback;
}

std::vector<double> RunConfig::grid(const std::string& section, const std::string& key) const {
  std::vector<double> g = numbers(section, key);
  for (std::size_t i = 1; i < g.size(); ++i)
    if (!(g[i] > g[i - 1])) fail(section, key, "values must be strictly increasing");
  return g;
}

std::vector<int> RunConfig::integers(const std::string& section, const std::string& key) const {
  std::vector<int> out;
  for (double x : grid(section, key)) {
    if (x != std::floor(x) || std::abs(x) > 1e9) fail(section, key, "expected integers");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

std::string RunConfig::path(const std::string& section, const std::string& key) const {
  return resolve(text(section, key));
}

std::string RunConfig::resolve(const std::string& relative) const {
  const std::filesystem::path p(relative);
  if (p.is_absolute()) return p.string();
  return (std::filesystem::path(source_).parent_path() / p).lexically_normal().string();
}

void RunConfig::finish() const {
  for (const auto& [k, e] : entries_)
    if (!used_.count(k)) throw ParseError(source_, e.line, "[" + k.first + "] " + k.second + ": unknown key");
}

}  // namespace qspan::cli
