#pragma once

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace qspan::cli {

struct NA {};
using Cell = std::variant<NA, double, long long, std::string>;

/// One output table. `name` is the schema identifier (also the side-file
/// suffix), `version` bumps whenever columns change.
struct Table {
  std::string name;
  int version = 1;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row);
};

/// `# schema: qspan.<name>/<version>`, a header line, then rows; NA cells are
/// written as the literal NA.
void write_csv(std::ostream& out, const Table& table);
/// {"schema": ..., "columns": [...], "rows": [[...]]}; NA becomes null.
void write_json(std::ostream& out, const Table& table);

std::string format_number(double x);

}  // namespace qspan::cli
