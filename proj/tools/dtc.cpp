#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtc/campaign.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitManifest = 2;
constexpr int kExitResourceCap = 3;
constexpr int kExitAnalysis = 4;

struct CommonArgs {
  std::string manifestPath;
  std::string outDir;
  int workers = 1;
  uint64_t seed = 0;
  bool seedSet = false;
  bool resume = false;
};

int run_simulate(const CommonArgs& args) {
  dtc::Manifest manifest = dtc::load_manifest(args.manifestPath);
  if (args.seedSet) manifest.seed = args.seed;
  const std::string outDir = dtc::resolve_output_dir(manifest, args.outDir);
  const dtc::RunRecord record = dtc::cmd_simulate(manifest, outDir, args.workers, args.resume);
  std::printf("simulate: %zu traces in %s (%.1f s)\n", record.traceFiles.size(), outDir.c_str(),
              record.wallSeconds);
  return kExitOk;
}

int run_analyze(const CommonArgs& args) {
  dtc::Manifest manifest = dtc::load_manifest(args.manifestPath);
  const std::string outDir = dtc::resolve_output_dir(manifest, args.outDir);
  const dtc::RunRecord record = dtc::cmd_analyze(manifest, outDir);
  std::printf("analyze: %zu outputs in %s\n", record.analysisFiles.size(), outDir.c_str());
  for (const auto& err : record.itemErrors) std::fprintf(stderr, "skipped: %s\n", err.c_str());
  return record.itemErrors.empty() ? kExitOk : kExitAnalysis;
}

std::string resolve_table_dir(const std::string& cliOut) {
  if (!cliOut.empty()) return cliOut;
  if (const char* env = std::getenv("DTC_OUT_DIR"); env && *env) return env;
  return "out";
}

int run_meanfield(const std::string& protocolName, double jmf, const std::string& outArg) {
  const dtc::Protocol protocol = dtc::protocol_from_string(protocolName);
  const std::string table = dtc::cmd_meanfield(protocol, jmf);
  const std::string outDir = resolve_table_dir(outArg);
  std::filesystem::create_directories(outDir);
  dtc::campaign_detail::write_file(std::filesystem::path(outDir) / "meanfield_boundary.csv",
                                   table);
  std::fputs(table.c_str(), stdout);
  return kExitOk;
}

int run_dephase(const std::string& protocolName, double epsMin, double epsMax, int points,
                const std::string& outArg) {
  const dtc::Protocol protocol = dtc::protocol_from_string(protocolName);
  if (points < 1) throw dtc::ManifestError("dephase: need at least one grid point");
  std::vector<double> grid;
  for (int k = 0; k < points; ++k)
    grid.push_back(points == 1 ? epsMin
                               : epsMin + (epsMax - epsMin) * k / (points - 1));
  const std::string table = dtc::cmd_dephase(protocol, grid);
  const std::string outDir = resolve_table_dir(outArg);
  std::filesystem::create_directories(outDir);
  dtc::campaign_detail::write_file(std::filesystem::path(outDir) / "dephase_rates.csv", table);
  std::fputs(table.c_str(), stdout);
  return kExitOk;
}

int run_report(const std::string& outArg) {
  const std::string text = dtc::cmd_report(resolve_table_dir(outArg));
  std::fputs(text.c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floquet spin-ensemble simulator and analysis toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string protocolName = "Z2";
  double jmf = 1.0;
  double epsMin = 0.01 * M_PI, epsMax = 0.15 * M_PI;
  int points = 15;

  auto* simulate = app.add_subcommand("simulate", "run the manifest sweep");
  simulate->add_option("--manifest", args.manifestPath, "manifest path")->required();
  simulate->add_option("--out", args.outDir, "output directory override");
  simulate->add_option("--workers", args.workers, "worker pool size")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", args.seed, "global seed override")
      ->each([&](const std::string&) { args.seedSet = true; });
  simulate->add_flag("--resume", args.resume, "skip traces already on disk");

  auto* analyze = app.add_subcommand("analyze", "run the declared analysis plan");
  analyze->add_option("--manifest", args.manifestPath, "manifest path")->required();
  analyze->add_option("--out", args.outDir, "output directory override");

  auto* meanfield = app.add_subcommand("meanfield", "emit the linear phase-boundary table");
  meanfield->add_option("--protocol", protocolName, "Z2Ising, Z2 or Z3")->required();
  meanfield->add_option("--jmf", jmf, "total mean-field interaction strength");
  meanfield->add_option("--out", args.outDir, "output directory");

  auto* dephase = app.add_subcommand("dephase", "emit the dephasing-rate table");
  dephase->add_option("--protocol", protocolName, "Z2 or Z3");
  dephase->add_option("--eps-min", epsMin, "grid start (radians)");
  dephase->add_option("--eps-max", epsMax, "grid end (radians)");
  dephase->add_option("--points", points, "grid size");
  dephase->add_option("--out", args.outDir, "output directory");

  auto* report = app.add_subcommand("report", "summarize an output directory");
  report->add_option("--out", args.outDir, "output directory");

  try {
    app.parse(argc, argv);
    if (simulate->parsed()) return run_simulate(args);
    if (analyze->parsed()) return run_analyze(args);
    if (meanfield->parsed()) return run_meanfield(protocolName, jmf, args.outDir);
    if (dephase->parsed()) return run_dephase(protocolName, epsMin, epsMax, points, args.outDir);
    if (report->parsed()) return run_report(args.outDir);
    return kExitManifest;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitManifest;
  } catch (const dtc::ManifestError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitManifest;
  } catch (const dtc::ResourceCapError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitResourceCap;
  } catch (const dtc::AnalysisError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitAnalysis;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitManifest;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
