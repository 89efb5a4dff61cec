#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "commands.hpp"
#include "qspan/errors.hpp"

namespace {

using qspan::cli::Output;
using qspan::cli::RunConfig;

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kAccuracyError = 3;

struct Flags {
  std::string config;
  std::string out;
  std::string format = "csv";
  std::uint64_t seed = 0;
  int threads = 1;
};

void write_table(std::ostream& os, const qspan::cli::Table& t, const std::string& format) {
  if (format == "json") qspan::cli::write_json(os, t);
  else qspan::cli::write_csv(os, t);
}

// Main table to --out; side tables next to it as <stem>.<table>.<ext>.
void emit(const Output& result, const Flags& flags) {
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  if (flags.out.empty()) {
    for (std::size_t i = 0; i < result.tables.size(); ++i) {
      if (i) std::cout << "\n";
      write_table(std::cout, result.tables[i], flags.format);
    }
    return;
  }
  const std::filesystem::path out(flags.out);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  for (std::size_t i = 0; i < result.tables.size(); ++i) {
    std::filesystem::path p = out;
    if (i) {
      p = out.parent_path() / (out.stem().string() + "." + result.tables[i].name + "." + flags.format);
    }
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    write_table(os, result.tables[i], flags.format);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-averaged state asymptotics, Ising quench overlaps and exact diagonalisation"};
  app.require_subcommand(1);
  Flags flags;

  using Command = std::function<Output(const RunConfig&, const qspan::cli::Options&)>;
  const std::map<std::string, std::pair<std::string, Command>> verbs = {
      {"asymptotics", {"Moments, entropies and effective rank from the energy cumulants", qspan::cli::cmd_asymptotics}},
      {"distribution", {"Universal eigenvalue distribution and its rescaled density", qspan::cli::cmd_distribution}},
      {"rank", {"Effective rank of the averaged state", qspan::cli::cmd_rank}},
      {"ising", {"Transverse-field Ising quench: f(t) and Renyi entropies by quadrature", qspan::cli::cmd_ising}},
      {"ed", {"Exact diagonalisation of Pauli-string chains", qspan::cli::cmd_ed}},
  };
  std::map<CLI::App*, Command> handlers;
  for (const auto& [name, entry] : verbs) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", flags.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "Output path for the main table; side tables go next to it");
    sub->add_option("--format", flags.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--seed", flags.seed, "Seed for randomised estimators (default 0)");
    sub->add_option("--threads", flags.threads, "Worker threads")->check(CLI::PositiveNumber);
    handlers[sub] = entry.second;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const RunConfig cfg = RunConfig::load(flags.config);
    for (const auto& [sub, handler] : handlers)
      if (sub->parsed()) emit(handler(cfg, {flags.seed, flags.threads}), flags);
    return kOk;
  } catch (const qspan::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const qspan::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const qspan::AccuracyError& e) {
    std::cerr << "accuracy error: " << e.what() << "\n";
    return kAccuracyError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
