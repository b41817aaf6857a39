#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "intermit/cli.hpp"

using namespace intermit;

int main(int argc, char** argv) {
  CLI::App app{"Induced systems, Ulam operators and correlation decay for intermittent maps"};
  std::string command;
  std::string config_path;
  std::optional<double> gamma, c, z;
  std::optional<std::size_t> cells, nmax;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, family;
  app.add_option("command", command, "validate | induce | ulam | density | decay | aperiodicity | scaling | report | all")
      ->required()
      ->check(CLI::IsMember(cli::commands()));
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--family", family, "map family: pm3 | lsv | custom");
  app.add_option("--gamma", gamma, "order of tangency at the indifferent point");
  app.add_option("--c", c, "cusp coefficient");
  app.add_option("--z", z, "inducing point");
  app.add_option("--cells", cells, "induced grid size for density and decay");
  app.add_option("--nmax", nmax, "pullback depth of the induced system");
  app.add_option("--seed", seed, "seed for every stochastic step");
  app.add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kConfigError;
  }

  cli::RunConfig cfg;
  bool z_in_config = false;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::parse_error& e) {
        throw cli::ConfigError("config " + config_path + " is not valid JSON: " + e.what());
      }
      cfg = cli::config_from_json(j);
      z_in_config = j.contains("map") && j["map"].contains("z");
    }
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kConfigError;
  }
  if (family) {
    cfg.map.family = *family;
    if (!z && !z_in_config) cfg.map.z = *family == "lsv" ? 0.25 : 0.1;
  }
  if (gamma) cfg.map.gamma = *gamma;
  if (c) cfg.map.c = *c;
  if (z) cfg.map.z = *z;
  if (cells) cfg.cells = *cells;
  if (nmax) cfg.n_max = *nmax;
  if (seed) cfg.seed = *seed;
  if (out) cfg.out = *out;
  return cli::run(command, cfg, std::cout, std::cerr);
}
