#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dtc/analyze.hpp"
#include "dtc/dephase.hpp"
#include "dtc/errors.hpp"
#include "dtc/evolve.hpp"
#include "dtc/meanfield.hpp"
#include "dtc/model.hpp"
#include "dtc/rng.hpp"

namespace dtc {

constexpr const char* kToolVersion = "0.1.0";

// Hard desk-scale limits on the many-body dimension per local dimension.
constexpr int kMaxSitesSpinHalf = 26;
constexpr int kMaxSitesSpinOne = 12;

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

enum class InitialStateKind { Polarized, RandomEnvironment };

struct ManifestModel {
  Protocol protocol = Protocol::ToyModel;
  std::vector<int> nValues;
  std::vector<double> alphaValues{1.0};
  // Sweep over the Floquet period: dimensionless J*T for the toy model,
  // direct periods for the laboratory protocols.
  std::vector<double> timeValues;
  std::vector<double> epsilonValues;  // radians
  int realizations = 1;
  int cycles = 1;
  Observable observable;
  InitialStateKind initialState = InitialStateKind::Polarized;
  std::string method = "auto";
  // Positional sampling inputs, laboratory protocols only.
  double density = 1.0;
  double j0 = 1.0;
  double disorderSigma = 0.0;
};

struct AnalysisPlan {
  std::vector<std::string> operations;
  double threshold = 0.1;
  int window = 36;
};

struct Manifest {
  std::string campaign;
  ManifestModel model;
  AnalysisPlan plan;
  std::string outputDir = "out";
  uint64_t seed = 1;
  uint64_t manifestHash = 0;
};

namespace campaign_detail {

using nlohmann::json;

[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
  throw ManifestError("manifest: " + where + ": " + what);
}

inline const json& require_field(const json& parent, const std::string& where,
                                 const std::string& key) {
  auto it = parent.find(key);
  if (it == parent.end()) fail(where + "/" + key, "required field is missing");
  return *it;
}

inline std::vector<double> number_list(const json& node, const std::string& where) {
  std::vector<double> out;
  if (node.is_number()) {
    out.push_back(node.get<double>());
  } else if (node.is_array() && !node.empty()) {
    for (const auto& v : node) {
      if (!v.is_number()) fail(where, "sweep entries must be numbers");
      out.push_back(v.get<double>());
    }
  } else {
    fail(where, "expected a number or a non-empty array of numbers");
  }
  return out;
}

inline Observable parse_observable(const std::string& text, const std::string& where) {
  if (text == "globalZ") return {ObservableKind::GlobalZ, 0};
  if (text == "globalX") return {ObservableKind::GlobalX, 0};
  if (text.rfind("localZ:", 0) == 0) {
    try {
      size_t used = 0;
      const int site = std::stoi(text.substr(7), &used);
      if (used == text.size() - 7 && site >= 0) return {ObservableKind::LocalZ, site};
    } catch (const std::exception&) {
    }
  }
  fail(where, "unknown observable \"" + text + "\" (expected globalZ, globalX or localZ:<site>)");
}

inline const std::vector<std::string>& known_operations() {
  static const std::vector<std::string> ops = {
      "spectrum",       "crystalline_fraction", "peak_heights",
      "decay_rates",    "rate_histogram",       "late_time_decay",
      "quadratic_rate", "stretched_exponential", "saturation",
      "super_gaussian", "phase_boundary"};
  return ops;
}

inline bool plan_has(const AnalysisPlan& plan, const std::string& op) {
  return std::find(plan.operations.begin(), plan.operations.end(), op) != plan.operations.end();
}

}  // namespace campaign_detail

inline Manifest load_manifest(const std::string& path) {
  using namespace campaign_detail;

  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open manifest file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& err) {
    fail(path, std::string("not valid JSON (") + err.what() + ")");
  }
  if (!root.is_object()) fail("/", "top level must be an object");

  Manifest m;
  m.manifestHash = fnv1a(text.data(), text.size());

  const json& campaign = require_field(root, "", "campaign");
  if (!campaign.is_string() || campaign.get<std::string>().empty())
    fail("/campaign", "must be a non-empty string");
  m.campaign = campaign.get<std::string>();

  const json& seed = require_field(root, "", "seed");
  if (!seed.is_number_unsigned()) fail("/seed", "must be an unsigned integer");
  m.seed = seed.get<uint64_t>();

  if (root.contains("output_dir")) {
    if (!root["output_dir"].is_string()) fail("/output_dir", "must be a string");
    m.outputDir = root["output_dir"].get<std::string>();
  }

  const json& model = require_field(root, "", "model");
  if (!model.is_object()) fail("/model", "must be an object");

  const json& protocol = require_field(model, "/model", "protocol");
  if (!protocol.is_string()) fail("/model/protocol", "must be a string");
  try {
    m.model.protocol = protocol_from_string(protocol.get<std::string>());
  } catch (const std::invalid_argument&) {
    fail("/model/protocol", "unknown protocol \"" + protocol.get<std::string>() + "\"");
  }
  const bool toy = m.model.protocol == Protocol::ToyModel;
  const int maxSites = protocol_local_dim(m.model.protocol) == 2 ? kMaxSitesSpinHalf
                                                                 : kMaxSitesSpinOne;

  for (double v : number_list(require_field(model, "/model", "n"), "/model/n")) {
    if (v < 2 || v != std::floor(v)) fail("/model/n", "site counts must be integers >= 2");
    if (v > maxSites)
      throw ResourceCapError("manifest: /model/n: " + std::to_string(static_cast<int>(v)) +
                             " sites exceeds the desk-scale cap of " + std::to_string(maxSites));
    m.model.nValues.push_back(static_cast<int>(v));
  }

  if (model.contains("alpha")) {
    if (!toy) fail("/model/alpha", "only the toy model has a spin-exchange coefficient");
    m.model.alphaValues = number_list(model["alpha"], "/model/alpha");
  }

  if (toy) {
    if (model.contains("period"))
      fail("/model/period", "toy-model sweeps are dimensionless; use jt");
    m.model.timeValues = number_list(require_field(model, "/model", "jt"), "/model/jt");
    for (double v : m.model.timeValues)
      if (!(v > 0)) fail("/model/jt", "JT values must be positive");
  } else {
    if (model.contains("jt")) fail("/model/jt", "laboratory sweeps take direct periods");
    m.model.timeValues = number_list(require_field(model, "/model", "period"), "/model/period");
    for (double v : m.model.timeValues)
      if (!(v > 0)) fail("/model/period", "periods must be positive");
  }

  for (double v :
       number_list(require_field(model, "/model", "epsilon_over_pi"), "/model/epsilon_over_pi")) {
    if (!(std::abs(v) < 1.0))
      fail("/model/epsilon_over_pi", "rotation perturbation must satisfy |eps/pi| < 1");
    m.model.epsilonValues.push_back(v * M_PI);
  }

  const json& reals = require_field(model, "/model", "realizations");
  if (!reals.is_number_integer() || reals.get<int64_t>() < 1)
    fail("/model/realizations", "must be an integer >= 1");
  m.model.realizations = reals.get<int>();

  const json& cycles = require_field(model, "/model", "cycles");
  if (!cycles.is_number_integer() || cycles.get<int64_t>() < 1)
    fail("/model/cycles", "must be an integer >= 1");
  m.model.cycles = cycles.get<int>();

  if (model.contains("observable")) {
    if (!model["observable"].is_string()) fail("/model/observable", "must be a string");
    m.model.observable =
        parse_observable(model["observable"].get<std::string>(), "/model/observable");
  }
  for (int n : m.model.nValues)
    if (m.model.observable.kind == ObservableKind::LocalZ && m.model.observable.site >= n)
      fail("/model/observable", "local observable site exceeds the smallest system");

  if (model.contains("initial_state")) {
    const std::string s = model["initial_state"].is_string()
                              ? model["initial_state"].get<std::string>()
                              : std::string();
    if (s == "polarized")
      m.model.initialState = InitialStateKind::Polarized;
    else if (s == "random_environment")
      m.model.initialState = InitialStateKind::RandomEnvironment;
    else
      fail("/model/initial_state", "expected \"polarized\" or \"random_environment\"");
  }
  if (m.model.initialState == InitialStateKind::RandomEnvironment &&
      protocol_local_dim(m.model.protocol) != 2)
    fail("/model/initial_state", "random environment states are spin-1/2 only");

  if (model.contains("method")) {
    const std::string s =
        model["method"].is_string() ? model["method"].get<std::string>() : std::string();
    if (s != "auto" && s != "dense" && s != "krylov")
      fail("/model/method", "expected \"auto\", \"dense\" or \"krylov\"");
    m.model.method = s;
  }

  if (!toy) {
    if (model.contains("density")) {
      m.model.density = model["density"].is_number() ? model["density"].get<double>() : -1.0;
      if (!(m.model.density > 0)) fail("/model/density", "must be a positive number");
    }
    // Coupling prefactors are accepted in MHz and converted to angular
    // frequency; absent, couplings stay dimensionless (j0 = 1).
    if (model.contains("j0_mhz")) {
      if (!model["j0_mhz"].is_number() || !(model["j0_mhz"].get<double>() > 0))
        fail("/model/j0_mhz", "must be a positive number");
      m.model.j0 = 2.0 * M_PI * model["j0_mhz"].get<double>();
    }
    if (model.contains("disorder_sigma")) {
      if (!model["disorder_sigma"].is_number() || model["disorder_sigma"].get<double>() < 0)
        fail("/model/disorder_sigma", "must be a non-negative number");
      m.model.disorderSigma = model["disorder_sigma"].get<double>();
    }
  }

  if (root.contains("analysis")) {
    const json& plan = root["analysis"];
    if (!plan.is_object()) fail("/analysis", "must be an object");
    if (plan.contains("operations")) {
      if (!plan["operations"].is_array()) fail("/analysis/operations", "must be an array");
      for (const auto& op : plan["operations"]) {
        const std::string name = op.is_string() ? op.get<std::string>() : std::string();
        const auto& known = campaign_detail::known_operations();
        if (std::find(known.begin(), known.end(), name) == known.end())
          fail("/analysis/operations", "unknown operation \"" + name + "\"");
        m.plan.operations.push_back(name);
      }
    }
    if (plan.contains("threshold")) {
      if (!plan["threshold"].is_number() || !(plan["threshold"].get<double>() > 0))
        fail("/analysis/threshold", "must be a positive number");
      m.plan.threshold = plan["threshold"].get<double>();
    }
    if (plan.contains("window")) {
      if (!plan["window"].is_number_integer() || plan["window"].get<int>() < 8)
        fail("/analysis/window", "must be an integer >= 8");
      m.plan.window = plan["window"].get<int>();
    }
  }

  // Declared analyses must have enough grid to satisfy their own
  // preconditions; catching this here gives the error a manifest location.
  using campaign_detail::plan_has;
  const size_t nEps = m.model.epsilonValues.size();
  const size_t nT = m.model.timeValues.size();
  if (plan_has(m.plan, "super_gaussian") && nEps < 6)
    fail("/analysis/operations", "super_gaussian needs at least 6 epsilon values");
  if (plan_has(m.plan, "phase_boundary") && !plan_has(m.plan, "super_gaussian"))
    fail("/analysis/operations", "phase_boundary requires the super_gaussian fits");
  if (plan_has(m.plan, "quadratic_rate") && nEps < 4)
    fail("/analysis/operations", "quadratic_rate needs at least 4 epsilon values");
  if (plan_has(m.plan, "saturation") && nT < 5)
    fail("/analysis/operations", "saturation needs at least 5 period values");
  if (plan_has(m.plan, "saturation") && !plan_has(m.plan, "stretched_exponential"))
    fail("/analysis/operations", "saturation requires the stretched_exponential fits");
  if (plan_has(m.plan, "rate_histogram") && m.model.realizations < 30)
    fail("/analysis/operations", "rate_histogram needs at least 30 realizations");
  if (m.model.cycles + 1 < m.plan.window &&
      (plan_has(m.plan, "spectrum") || plan_has(m.plan, "crystalline_fraction") ||
       plan_has(m.plan, "peak_heights")))
    fail("/analysis/window", "window exceeds the trace length implied by /model/cycles");

  return m;
}

// ---------------------------------------------------------------------------
// Trace persistence
// ---------------------------------------------------------------------------

struct RunRecord {
  uint64_t manifestHash = 0;
  std::vector<std::string> traceFiles;
  std::vector<std::string> analysisFiles;
  std::vector<std::string> itemErrors;
  std::string version = kToolVersion;
  double wallSeconds = 0.0;
};

namespace campaign_detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trace_basename(size_t ei, size_t ti, size_t ni, size_t ai, int ri) {
  std::ostringstream name;
  name << "trace-e" << ei << "-t" << ti << "-n" << ni << "-a" << ai << "-r" << ri;
  return name.str();
}

inline std::string trace_csv(const TimeTrace& trace) {
  std::ostringstream out;
  out << "cycle,value\n";
  for (size_t n = 0; n < trace.values.size(); ++n)
    out << n << "," << fmt17(trace.values[n]) << "\n";
  return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::string hex64(uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// One simulated grid point (all realizations at fixed sweep indices).
struct GridPoint {
  size_t ei = 0, ti = 0, ni = 0, ai = 0;
  double epsilon = 0.0;
  double timeValue = 0.0;  // JT (toy) or period (lab)
  int n = 0;
  double alpha = 1.0;
};

inline std::vector<GridPoint> grid_points(const ManifestModel& model) {
  std::vector<GridPoint> pts;
  for (size_t ei = 0; ei < model.epsilonValues.size(); ++ei)
    for (size_t ti = 0; ti < model.timeValues.size(); ++ti)
      for (size_t ni = 0; ni < model.nValues.size(); ++ni)
        for (size_t ai = 0; ai < model.alphaValues.size(); ++ai)
          pts.push_back({ei, ti, ni, ai, model.epsilonValues[ei], model.timeValues[ti],
                         model.nValues[ni], model.alphaValues[ai]});
  return pts;
}

// Seed for one realization, split from (global seed, eps index, period
// index, realization index).
inline uint64_t realization_seed(uint64_t global, size_t ei, size_t ti, int ri) {
  uint64_t s = mix_seed(global, 0xE500000000000000ULL + ei);
  s = mix_seed(s, 0x7E00000000000000ULL + ti);
  return mix_seed(s, 0x2EA0000000000000ULL + static_cast<uint64_t>(ri));
}

inline ModelSpec realize_spec(const ManifestModel& model, const GridPoint& pt, uint64_t seed) {
  if (model.protocol == Protocol::ToyModel)
    return make_toy_spec(pt.n, pt.alpha, pt.epsilon, pt.timeValue, seed);
  ModelSpec spec;
  spec.protocol = model.protocol;
  spec.n = pt.n;
  spec.localDim = protocol_local_dim(model.protocol);
  spec.couplings = sample_dipolar_couplings(pt.n, model.density, seed, model.j0);
  spec.disorder = model.disorderSigma > 0
                      ? DisorderField::gaussian(pt.n, model.disorderSigma, seed)
                      : DisorderField::zero(pt.n);
  spec.epsilon = pt.epsilon;
  spec.period = pt.timeValue;
  spec.seed = seed;
  validate(spec);
  return spec;
}

inline QuantumState realize_state(const ManifestModel& model, const ModelSpec& spec) {
  if (model.initialState == InitialStateKind::RandomEnvironment)
    return random_environment_state(spec.n, mix_seed(spec.seed, 0x54A7E000ULL));
  return polarized_state(spec.n, spec.localDim);
}

inline PropagatorMethod method_from_string(const std::string& s) {
  if (s == "dense") return PropagatorMethod::DenseSpectral;
  if (s == "krylov") return PropagatorMethod::Krylov;
  return PropagatorMethod::Auto;
}

}  // namespace campaign_detail

// Output directory resolution: an explicit CLI override wins, then the
// DTC_OUT_DIR environment variable, then the manifest.
inline std::string resolve_output_dir(const Manifest& manifest, const std::string& cliOverride) {
  if (!cliOverride.empty()) return cliOverride;
  if (const char* env = std::getenv("DTC_OUT_DIR"); env && *env) return env;
  return manifest.outputDir;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

// Executes the manifest sweep, one trace file (CSV plus JSON sidecar) per
// (eps, period, n, alpha, realization). With resume enabled, grid cells
// whose CSV already matches its sidecar hash are skipped.
inline RunRecord cmd_simulate(const Manifest& manifest, const std::string& outDir, int workers,
                              bool resume) {
  namespace fs = std::filesystem;
  using namespace campaign_detail;
  const auto t0 = std::chrono::steady_clock::now();

  fs::create_directories(outDir);
  const auto points = grid_points(manifest.model);
  const PropagatorMethod method = method_from_string(manifest.model.method);

  struct Task {
    GridPoint pt;
    int ri;
  };
  std::vector<Task> tasks;
  for (const auto& pt : points)
    for (int ri = 0; ri < manifest.model.realizations; ++ri) tasks.push_back({pt, ri});

  RunRecord record;
  record.manifestHash = manifest.manifestHash;
  record.traceFiles.resize(tasks.size());

  std::atomic<size_t> next{0};
  std::mutex indexMutex;
  std::ofstream indexOut;
  const fs::path indexPath = fs::path(outDir) / "index.jsonl";
  indexOut.open(indexPath, std::ios::app);

  const int nWorkers = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  std::vector<std::exception_ptr> errors(nWorkers);

  auto worker = [&](int w) {
    try {
      for (;;) {
        const size_t k = next.fetch_add(1);
        if (k >= tasks.size()) return;
        const auto& [pt, ri] = tasks[k];
        const std::string base = trace_basename(pt.ei, pt.ti, pt.ni, pt.ai, ri);
        const fs::path csvPath = fs::path(outDir) / (base + ".csv");
        const fs::path metaPath = fs::path(outDir) / (base + ".json");
        record.traceFiles[k] = base + ".csv";

        if (resume && fs::exists(csvPath) && fs::exists(metaPath)) {
          try {
            const std::string csv = read_file(csvPath);
            const auto meta = nlohmann::json::parse(read_file(metaPath));
            if (meta.value("csv_fnv1a", std::string()) == hex64(fnv1a(csv.data(), csv.size())))
              continue;
          } catch (const std::exception&) {
          }
        }

        const uint64_t seed = realization_seed(manifest.seed, pt.ei, pt.ti, ri);
        const ModelSpec spec = realize_spec(manifest.model, pt, seed);
        const QuantumState state = realize_state(manifest.model, spec);
        const TimeTrace trace = run_floquet(spec, state, manifest.model.cycles,
                                            manifest.model.observable, method);

        const std::string csv = trace_csv(trace);
        nlohmann::json meta;
        meta["campaign"] = manifest.campaign;
        meta["protocol"] = to_string(spec.protocol);
        meta["n"] = spec.n;
        meta["alpha"] = spec.alpha;
        meta["epsilon"] = spec.epsilon;
        meta["period"] = spec.period;
        meta["time_value"] = pt.timeValue;
        meta["realization"] = ri;
        meta["seed"] = seed;
        meta["observable"] = manifest.model.observable.label();
        meta["cycles"] = manifest.model.cycles;
        meta["csv_fnv1a"] = hex64(fnv1a(csv.data(), csv.size()));
        write_file(csvPath, csv);
        write_file(metaPath, meta.dump(2) + "\n");

        {
          std::lock_guard<std::mutex> lock(indexMutex);
          nlohmann::json row;
          row["file"] = base + ".csv";
          row["eps_index"] = pt.ei;
          row["t_index"] = pt.ti;
          row["n_index"] = pt.ni;
          row["alpha_index"] = pt.ai;
          row["realization"] = ri;
          indexOut << row.dump() << "\n";
          indexOut.flush();
        }
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  if (nWorkers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nWorkers; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  record.wallSeconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json rec;
  rec["manifest_fnv1a"] = hex64(record.manifestHash);
  rec["campaign"] = manifest.campaign;
  rec["version"] = record.version;
  rec["traces"] = record.traceFiles;
  rec["wall_seconds"] = record.wallSeconds;
  write_file(fs::path(outDir) / "run_record.json", rec.dump(2) + "\n");
  return record;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

namespace campaign_detail {

inline TimeTrace load_trace(const std::filesystem::path& csvPath) {
  const std::string csv = read_file(csvPath);
  TimeTrace trace;
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "cycle,value")
    throw AnalysisError("trace " + csvPath.string() + ": missing cycle,value header");
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw AnalysisError("trace " + csvPath.string() + ": malformed row");
    trace.values.push_back(std::stod(line.substr(comma + 1)));
  }
  return trace;
}

struct PointTraces {
  GridPoint pt;
  std::vector<TimeTrace> traces;
};

}  // namespace campaign_detail

// Runs the declared analysis operations over the traces the manifest's
// simulate step produced. Individual items that fail a precondition are
// reported and skipped; the rest of the plan continues.
inline RunRecord cmd_analyze(const Manifest& manifest, const std::string& outDir) {
  namespace fs = std::filesystem;
  using namespace campaign_detail;
  const auto t0 = std::chrono::steady_clock::now();

  RunRecord record;
  record.manifestHash = manifest.manifestHash;

  const auto points = grid_points(manifest.model);
  std::vector<PointTraces> data;
  data.reserve(points.size());
  for (const auto& pt : points) {
    PointTraces entry{pt, {}};
    for (int ri = 0; ri < manifest.model.realizations; ++ri) {
      const fs::path csvPath =
          fs::path(outDir) / (trace_basename(pt.ei, pt.ti, pt.ni, pt.ai, ri) + ".csv");
      if (!fs::exists(csvPath))
        throw AnalysisError("cmd_analyze: missing trace " + csvPath.string() +
                            " (run simulate first)");
      entry.traces.push_back(load_trace(csvPath));
    }
    data.push_back(std::move(entry));
  }

  const int order = protocol_order(manifest.model.protocol);
  const int window = manifest.plan.window;
  auto has = [&](const std::string& op) { return plan_has(manifest.plan, op); };
  auto emit = [&](const std::string& name, const std::string& content) {
    write_file(fs::path(outDir) / name, content);
    record.analysisFiles.push_back(name);
  };
  auto itemFailed = [&](const std::string& item, const std::exception& err) {
    record.itemErrors.push_back(item + ": " + err.what());
  };
  auto pointTag = [](const GridPoint& pt) {
    std::ostringstream tag;
    tag << "e" << pt.ei << "-t" << pt.ti << "-n" << pt.ni << "-a" << pt.ai;
    return tag.str();
  };

  nlohmann::json summary;
  summary["campaign"] = manifest.campaign;
  summary["manifest_fnv1a"] = hex64(manifest.manifestHash);

  if (has("spectrum")) {
    for (const auto& entry : data) {
      try {
        const std::vector<double> mean = mean_trace(entry.traces);
        const Spectrum spec = spectrum(mean, 0, std::min<int>(window, mean.size()));
        std::ostringstream out;
        out << "frequency,weight\n";
        for (Eigen::Index k = 0; k < spec.frequencies.size(); ++k)
          out << fmt17(spec.frequencies(k)) << "," << fmt17(spec.weights(k)) << "\n";
        emit("spectrum-" + pointTag(entry.pt) + ".csv", out.str());
      } catch (const std::exception& err) {
        itemFailed("spectrum " + pointTag(entry.pt), err);
      }
    }
  }

  if (has("crystalline_fraction")) {
    std::ostringstream out;
    out << "eps_over_pi,T,n,alpha,f_mean,f_std,realizations\n";
    for (const auto& entry : data) {
      try {
        std::vector<double> fs;
        for (const auto& t : entry.traces)
          fs.push_back(crystalline_fraction(spectrum(t.values, 0, window), order));
        const double mean = std::accumulate(fs.begin(), fs.end(), 0.0) / fs.size();
        double var = 0.0;
        for (double f : fs) var += (f - mean) * (f - mean);
        out << fmt17(entry.pt.epsilon / M_PI) << "," << fmt17(entry.pt.timeValue) << ","
            << entry.pt.n << "," << fmt17(entry.pt.alpha) << "," << fmt17(mean) << ","
            << fmt17(std::sqrt(var / fs.size())) << "," << fs.size() << "\n";
      } catch (const std::exception& err) {
        itemFailed("crystalline_fraction " + pointTag(entry.pt), err);
      }
    }
    emit("f_table.csv", out.str());
  }

  std::map<std::string, PeakHeightSeries> meanPeaks;
  if (has("peak_heights") || has("late_time_decay") || has("stretched_exponential") ||
      has("saturation")) {
    for (const auto& entry : data) {
      try {
        meanPeaks[pointTag(entry.pt)] =
            peak_height_series(mean_trace(entry.traces), order, window);
      } catch (const std::exception& err) {
        itemFailed("peak_heights " + pointTag(entry.pt), err);
      }
    }
  }
  if (has("peak_heights")) {
    for (const auto& entry : data) {
      const auto it = meanPeaks.find(pointTag(entry.pt));
      if (it == meanPeaks.end()) continue;
      std::ostringstream out;
      out << "n_sweep,height\n";
      for (size_t k = 0; k < it->second.heights.size(); ++k)
        out << it->second.nSweep[k] << "," << fmt17(it->second.heights[k]) << "\n";
      emit("peaks-" + pointTag(entry.pt) + ".csv", out.str());
    }
  }

  std::map<std::string, std::vector<double>> pointRates;
  if (has("decay_rates") || has("rate_histogram") || has("quadratic_rate")) {
    std::ostringstream out;
    out << "eps_over_pi,T,n,alpha,realization,rate\n";
    for (const auto& entry : data) {
      auto& rates = pointRates[pointTag(entry.pt)];
      for (size_t ri = 0; ri < entry.traces.size(); ++ri) {
        try {
          const double rate = trace_decay_rate(entry.traces[ri], order);
          rates.push_back(rate);
          out << fmt17(entry.pt.epsilon / M_PI) << "," << fmt17(entry.pt.timeValue) << ","
              << entry.pt.n << "," << fmt17(entry.pt.alpha) << "," << ri << "," << fmt17(rate)
              << "\n";
        } catch (const std::exception& err) {
          itemFailed("decay_rates " + pointTag(entry.pt) + " r" + std::to_string(ri), err);
        }
      }
    }
    if (has("decay_rates")) emit("rates.csv", out.str());
  }

  std::map<std::string, HistogramResult> histograms;
  if (has("rate_histogram")) {
    for (const auto& entry : data) {
      const std::string tag = pointTag(entry.pt);
      try {
        HistogramResult hist = rate_histogram(pointRates[tag]);
        std::ostringstream out;
        out << "bin_center,count\n";
        for (size_t b = 0; b < hist.binCenters.size(); ++b)
          out << fmt17(hist.binCenters[b]) << "," << fmt17(hist.counts[b]) << "\n";
        emit("histogram-" + tag + ".csv", out.str());
        summary["rate_histogram"][tag] = {{"mode", hist.mode},
                                          {"spread", hist.spread},
                                          {"flagged", hist.flagged}};
        histograms[tag] = std::move(hist);
      } catch (const std::exception& err) {
        itemFailed("rate_histogram " + tag, err);
      }
    }
  }

  if (has("late_time_decay")) {
    std::ostringstream out;
    out << "eps_over_pi,T,n,alpha,gamma,error,fits,flagged\n";
    for (const auto& entry : data) {
      const auto it = meanPeaks.find(pointTag(entry.pt));
      if (it == meanPeaks.end()) continue;
      try {
        const RateEstimate est = late_time_decay_rate(it->second);
        out << fmt17(entry.pt.epsilon / M_PI) << "," << fmt17(entry.pt.timeValue) << ","
            << entry.pt.n << "," << fmt17(entry.pt.alpha) << "," << fmt17(est.gamma) << ","
            << fmt17(est.error) << "," << est.nFits << "," << (est.flagged ? 1 : 0) << "\n";
      } catch (const std::exception& err) {
        itemFailed("late_time_decay " + pointTag(entry.pt), err);
      }
    }
    emit("gamma_table.csv", out.str());
  }

  if (has("quadratic_rate")) {
    try {
      // Gamma(eps) per epsilon at the first (T, n, alpha) cell: histogram
      // mode when available, median rate otherwise.
      std::vector<double> eps, gamma;
      for (const auto& entry : data) {
        if (entry.pt.ti != 0 || entry.pt.ni != 0 || entry.pt.ai != 0) continue;
        const std::string tag = pointTag(entry.pt);
        const auto hit = histograms.find(tag);
        if (hit != histograms.end()) {
          eps.push_back(entry.pt.epsilon);
          gamma.push_back(hit->second.mode);
        } else {
          auto rates = pointRates[tag];
          if (rates.empty()) continue;
          std::sort(rates.begin(), rates.end());
          eps.push_back(entry.pt.epsilon);
          gamma.push_back(rates[rates.size() / 2]);
        }
      }
      const FitResult fit = fit_quadratic_rate(eps, gamma);
      summary["quadratic_rate"] = {{"gamma0", fit.param("Gamma0")},
                                   {"a", fit.param("a")},
                                   {"a_stderr", fit.error("a")}};
    } catch (const std::exception& err) {
      itemFailed("quadratic_rate", err);
    }
  }

  std::map<size_t, std::pair<double, double>> betaByPeriod;  // ti -> (T, beta)
  if (has("stretched_exponential")) {
    std::ostringstream out;
    out << "eps_over_pi,T,n,alpha,A,n_tau,beta,beta_stderr\n";
    for (const auto& entry : data) {
      const auto it = meanPeaks.find(pointTag(entry.pt));
      if (it == meanPeaks.end()) continue;
      try {
        const FitResult fit = fit_stretched_exponential(it->second);
        out << fmt17(entry.pt.epsilon / M_PI) << "," << fmt17(entry.pt.timeValue) << ","
            << entry.pt.n << "," << fmt17(entry.pt.alpha) << "," << fmt17(fit.param("A")) << ","
            << fmt17(fit.param("n_tau")) << "," << fmt17(fit.param("beta")) << ","
            << fmt17(fit.error("beta")) << "\n";
        if (entry.pt.ei == 0 && entry.pt.ni == 0 && entry.pt.ai == 0)
          betaByPeriod[entry.pt.ti] = {entry.pt.timeValue, fit.param("beta")};
      } catch (const std::exception& err) {
        itemFailed("stretched_exponential " + pointTag(entry.pt), err);
      }
    }
    emit("beta_table.csv", out.str());
  }

  if (has("saturation")) {
    try {
      std::vector<double> period, beta;
      for (const auto& [ti, tb] : betaByPeriod) {
        period.push_back(tb.first);
        beta.push_back(tb.second);
      }
      const SaturationResult sat = fit_saturation(period, beta);
      summary["saturation"] = {{"c1", sat.fit.param("c1")},
                               {"c2", sat.fit.param("c2")},
                               {"t_star", sat.tStar},
                               {"t_star_ci95", sat.error},
                               {"present", sat.present}};
    } catch (const std::exception& err) {
      itemFailed("saturation", err);
    }
  }

  std::vector<std::pair<double, FitResult>> sgFits;
  if (has("super_gaussian")) {
    std::ostringstream out;
    out << "T,n,alpha,f_max,eps0,sigma,p\n";
    for (size_t ti = 0; ti < manifest.model.timeValues.size(); ++ti) {
      try {
        std::vector<double> eps, f;
        for (const auto& entry : data) {
          if (entry.pt.ti != ti || entry.pt.ni != 0 || entry.pt.ai != 0) continue;
          std::vector<double> fs;
          for (const auto& t : entry.traces)
            fs.push_back(crystalline_fraction(spectrum(t.values, 0, window), order));
          eps.push_back(entry.pt.epsilon);
          f.push_back(std::accumulate(fs.begin(), fs.end(), 0.0) / fs.size());
        }
        const FitResult fit = fit_super_gaussian(eps, f);
        out << fmt17(manifest.model.timeValues[ti]) << "," << manifest.model.nValues[0] << ","
            << fmt17(manifest.model.alphaValues[0]) << "," << fmt17(fit.param("f_max")) << ","
            << fmt17(fit.param("eps0")) << "," << fmt17(fit.param("sigma")) << ","
            << fmt17(fit.param("p")) << "\n";
        sgFits.emplace_back(manifest.model.timeValues[ti], fit);
      } catch (const std::exception& err) {
        itemFailed("super_gaussian t" + std::to_string(ti), err);
      }
    }
    emit("super_gaussian.csv", out.str());
  }

  if (has("phase_boundary")) {
    try {
      if (sgFits.empty()) throw AnalysisError("no super-Gaussian fits available");
      const auto boundary = phase_boundary(sgFits, manifest.plan.threshold);
      std::ostringstream out;
      out << "T,eps_critical,ci95,present\n";
      for (const auto& b : boundary)
        out << fmt17(b.period) << "," << fmt17(b.epsilon) << "," << fmt17(b.ci95) << ","
            << (b.present ? 1 : 0) << "\n";
      emit("boundary.csv", out.str());
    } catch (const std::exception& err) {
      itemFailed("phase_boundary", err);
    }
  }

  summary["item_errors"] = record.itemErrors;
  summary["files"] = record.analysisFiles;
  write_file(fs::path(outDir) / "analysis_summary.json", summary.dump(2) + "\n");

  record.wallSeconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

// ---------------------------------------------------------------------------
// meanfield / dephase tables
// ---------------------------------------------------------------------------

// (T, eps_critical) rows of the linear stability boundary
// eps_critical = coefficient * J_MF * T.
inline std::string cmd_meanfield(Protocol protocol, double jmf) {
  if (protocol == Protocol::ToyModel)
    throw ManifestError("meanfield: the toy model has no mean-field form");
  if (!(jmf > 0)) throw ManifestError("meanfield: jmf must be positive");
  const double coeff = existence_boundary(protocol);
  std::ostringstream out;
  out << "# protocol=" << to_string(protocol) << " coefficient=" << campaign_detail::fmt17(coeff)
      << "\n";
  out << "T,eps_critical\n";
  for (int k = 1; k <= 20; ++k) {
    const double T = 0.1 * k;
    out << campaign_detail::fmt17(T) << "," << campaign_detail::fmt17(coeff * jmf * T) << "\n";
  }
  return out.str();
}

// (eps, gamma, eps^2/2) rows of the dephasing-model decay rate.
inline std::string cmd_dephase(Protocol protocol, const std::vector<double>& epsGrid) {
  if (protocol == Protocol::ToyModel || protocol == Protocol::Z2Ising)
    throw ManifestError("dephase: rotation matrices exist for the Z2 and Z3 protocols");
  if (epsGrid.empty()) throw ManifestError("dephase: epsilon grid is empty");
  for (double eps : epsGrid)
    if (!(eps > 0.0 && eps < M_PI / 2.0))
      throw ManifestError("dephase: epsilon grid must lie inside (0, pi/2)");
  std::ostringstream out;
  out << "eps,gamma,eps_sq_over_2\n";
  for (double eps : epsGrid)
    out << campaign_detail::fmt17(eps) << ","
        << campaign_detail::fmt17(subharmonic_decay_rate(protocol, eps)) << ","
        << campaign_detail::fmt17(eps * eps / 2.0) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

// Human-readable digest of whatever run_record.json and
// analysis_summary.json exist in the output directory.
inline std::string cmd_report(const std::string& outDir) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  std::ostringstream out;

  const fs::path runPath = fs::path(outDir) / "run_record.json";
  const fs::path sumPath = fs::path(outDir) / "analysis_summary.json";
  if (!fs::exists(runPath) && !fs::exists(sumPath))
    throw AnalysisError("report: no run_record.json or analysis_summary.json in " + outDir);

  if (fs::exists(runPath)) {
    const json rec = json::parse(campaign_detail::read_file(runPath));
    out << "campaign: " << rec.value("campaign", std::string("?")) << "\n";
    out << "manifest: " << rec.value("manifest_fnv1a", std::string("?")) << "\n";
    out << "traces:   " << rec.value("traces", json::array()).size() << "\n";
    out << "version:  " << rec.value("version", std::string("?")) << "\n";
  }
  if (fs::exists(sumPath)) {
    const json sum = json::parse(campaign_detail::read_file(sumPath));
    if (sum.contains("rate_histogram")) {
      out << "rate histogram modes:\n";
      for (const auto& [tag, h] : sum["rate_histogram"].items())
        out << "  " << tag << ": mode " << h.value("mode", 0.0) << " spread "
            << h.value("spread", 0.0) << (h.value("flagged", false) ? " (flagged)" : "") << "\n";
    }
    if (sum.contains("quadratic_rate"))
      out << "quadratic rate: a = " << sum["quadratic_rate"].value("a", 0.0) << " (Gamma0 "
          << sum["quadratic_rate"].value("gamma0", 0.0) << ")\n";
    if (sum.contains("saturation"))
      out << "saturation: T* = " << sum["saturation"].value("t_star", 0.0)
          << (sum["saturation"].value("present", false) ? "" : " (absent)") << "\n";
    const auto errs = sum.value("item_errors", json::array());
    if (!errs.empty()) {
      out << "analysis items skipped:\n";
      for (const auto& e : errs) out << "  " << e.get<std::string>() << "\n";
    }
  }
  return out.str();
}

}  // namespace dtc
