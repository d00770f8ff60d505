// Command-line front end: train, verify, landscape, sweep, report.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "jitter/cli.hpp"

int main(int argc, char **argv) {
  CLI::App app{"Jitter / flooding loss-wrapper toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;

  auto *train = app.add_subcommand("train", "Train one configured run");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--out", out_dir, "Override output_dir");

  std::string suite = "all";
  std::size_t n = 1000000;
  std::uint64_t seed = 0;
  auto *verify = app.add_subcommand("verify", "Monte Carlo and exact checks");
  verify->add_option("suite", suite, "theorem1 | theorem2 | jensen | all")
      ->check(CLI::IsMember({"theorem1", "theorem2", "jensen", "all"}));
  verify->add_option("--n", n, "Monte Carlo sample count")->capture_default_str();
  verify->add_option("--seed", seed, "Seed")->capture_default_str();

  jitter::cli::LandscapeOptions land;
  std::string land_out;
  auto *landscape = app.add_subcommand("landscape", "Flip a 1-D loss curve at flooding levels");
  landscape->add_option("--curve", land.curve, "parabola | double_well | csv")->capture_default_str();
  landscape->add_option("--csv", land.csv_path, "Input x,y file when --curve csv");
  landscape->add_option("--lo", land.lo, "Range start")->capture_default_str();
  landscape->add_option("--hi", land.hi, "Range end")->capture_default_str();
  landscape->add_option("--grid", land.grid, "Number of grid points")->capture_default_str();
  landscape->add_option("--levels", land.levels, "Flooding levels")->delimiter(',');
  landscape->add_option("--tol", land.tol, "Plateau tolerance for minima counting");
  landscape->add_option("--out", land_out, "CSV output file (default stdout)");

  auto *sweep = app.add_subcommand("sweep", "Run wrappers x seeds and write a report");
  sweep->add_option("--config", config_path, "Sweep config (JSON)")->required();
  sweep->add_option("--out", out_dir, "Override output_dir");

  std::string report_dir;
  auto *report = app.add_subcommand("report", "Rebuild the report from run records");
  report->add_option("--out", report_dir, "Directory holding <run_id>.json records")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : jitter::cli::kConfigError;
  }

  const auto out_override = out_dir.empty() ? std::nullopt : std::optional<std::string>(out_dir);
  if (*train)
    return jitter::cli::cmd_train(config_path, out_override, std::cout, std::cerr);
  if (*verify)
    return jitter::cli::cmd_verify(suite, n, seed, std::cout, std::cerr);
  if (*sweep)
    return jitter::cli::cmd_sweep(config_path, out_override, std::cout, std::cerr);
  if (*report)
    return jitter::cli::cmd_report(report_dir, std::cout, std::cerr);
  if (*landscape) {
    if (land_out.empty())
      return jitter::cli::cmd_landscape(land, std::cout, std::cerr, std::cerr);
    std::ofstream file(land_out, std::ios::binary | std::ios::trunc);
    if (!file) {
      std::cerr << "error: cannot write " << land_out << '\n';
      return jitter::cli::kRuntimeFailure;
    }
    return jitter::cli::cmd_landscape(land, file, std::cout, std::cerr);
  }
  return jitter::cli::kConfigError;
}
