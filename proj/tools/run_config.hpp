#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace qspan::cli {

/// Flat `[section]` / `key = value` run configuration. Every lookup records
/// the key as used; finish() rejects anything left over, so typos surface as
/// errors instead of silently falling back to defaults.
class RunConfig {
 public:
  static RunConfig parse(std::istream& in, const std::string& source);
  static RunConfig load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  bool has_section(const std::string& section) const;

  std::string text(const std::string& section, const std::string& key) const;
  std::string text(const std::string& section, const std::string& key, const std::string& fallback) const;
  double number(const std::string& section, const std::string& key) const;
  double number(const std::string& section, const std::string& key, double fallback) const;
  int integer(const std::string& section, const std::string& key) const;
  int integer(const std::string& section, const std::string& key, int fallback) const;
  bool flag(const std::string& section, const std::string& key, bool fallback) const;

  /// Comma list, or `linspace a b n` / `logspace a b n` (n points, both ends).
  std::vector<double> numbers(const std::string& section, const std::string& key) const;
  std::vector<double> numbers(const std::string& section, const std::string& key,
                              std::vector<double> fallback) const;
  /// Same, additionally required strictly increasing.
  std::vector<double> grid(const std::string& section, const std::string& key) const;
  std::vector<int> integers(const std::string& section, const std::string& key) const;

  /// Path value resolved against the directory holding the config file.
  std::string path(const std::string& section, const std::string& key) const;
  std::string resolve(const std::string& relative) const;

  /// Throws ParseError naming the first key that was never looked up.
  void finish() const;

  const std::string& source() const noexcept { return source_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  const Entry& entry(const std::string& section, const std::string& key) const;
  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& msg) const;

  std::string source_;
  std::map<std::pair<std::string, std::string>, Entry> entries_;
  std::map<std::string, int> sections_;
  mutable std::set<std::pair<std::string, std::string>> used_;
};

}  // namespace qspan::cli
