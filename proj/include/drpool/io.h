// File formats and run drivers behind the command-line tool: sample CSVs,
// the YAML run configuration, estimate reports and simulation summaries.

#ifndef DRPOOL_IO_H_
#define DRPOOL_IO_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "drpool/simulate.h"

namespace drpool {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitSolver = 3;
inline constexpr int kExitIo = 4;

int exit_code_for(const std::exception& e);

// %.17g: enough digits for a lossless round trip.
std::string format_double(double value);

// sample_a.csv: id, x_1..x_p, pi_a[, y]. sample_b.csv: id, x_1..x_p, y.
// The intercept column is added on read and never written.
ObservedData read_samples(const fs::path& sample_a, const fs::path& sample_b,
                          std::size_t n_population, const DesignDescriptor& design);
void write_sample_a(const fs::path& path, const ObservedData& observed,
                    const std::vector<std::size_t>& ids = {});
void write_sample_b(const fs::path& path, const ObservedData& observed,
                    const std::vector<std::size_t>& ids = {});

enum class RunMode { kEstimate, kSimulate };

struct RunConfig {
  RunMode mode = RunMode::kEstimate;
  fs::path config_path;
  std::string config_text;  // echoed into the manifest
  fs::path output;
  fs::path sample_a;
  fs::path sample_b;
  std::size_t n_population = 0;
  DesignDescriptor design;
  ModelSpec model;
  Sigma2Model sigma2 = Sigma2Model::kConstant;
  double level = 0.95;
  std::vector<EstimatorTarget> estimators;
  std::vector<PairTarget> covariances;
  std::vector<PairTarget> pooled;
  ScenarioConfig scenario;  // simulate mode; carries seed, level and targets too
};

// Relative paths resolve against base_dir. Throws ValidationError on any
// malformed or unknown setting.
RunConfig parse_run_config(const std::string& text, const fs::path& base_dir = {});
RunConfig load_run_config(const fs::path& path);

nlohmann::json scenario_to_json(const ScenarioConfig& scenario);

struct EstimateRow {
  EstimatorTarget target;
  double estimate = 0.0;
  double variance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  VarianceEstimate detail;  // IPW / DR rows only
  std::optional<DeltaSet> deltas;  // the centring terms behind `detail`
};

struct CovarianceEntry {
  PairTarget target;
  double covariance = 0.0;
};

struct EstimateReport {
  std::size_t n_population = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  double level = 0.95;
  NuisanceFit fit;
  std::vector<EstimateRow> estimates;
  std::vector<CovarianceEntry> covariances;
  std::vector<std::pair<PairTarget, PooledReport>> pooled;
};

EstimateReport estimate_report(const RunConfig& config, const ObservedData& observed);
nlohmann::json to_json(const EstimateReport& report);
std::string to_text(const EstimateReport& report);

std::string summary_csv(const MonteCarloSummary& summary);

// Holds <dir>/.drpool.lock for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

// Writes report.txt and report.json into config.output.
EstimateReport run_estimate(const RunConfig& config);

// Writes summary.csv and manifest.json into config.output.
MonteCarloSummary run_simulate(const RunConfig& config);

// Exports one simulated replicate as sample_a.csv / sample_b.csv plus an
// estimate-mode config (estimate.yaml) that reads them back.
SampleDraw run_draw(const RunConfig& config, std::uint64_t replicate, const fs::path& output);

}  // namespace drpool

#endif  // DRPOOL_IO_H_
