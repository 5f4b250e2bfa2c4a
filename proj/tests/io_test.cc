#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>
#include <unistd.h>

#include "drpool/io.h"
#include "test_data.h"

using namespace drpool;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() /
                     ("drpool_io_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

const char* kEstimateYaml = R"(
mode: estimate
output: out
data:
  sample_a: a.csv
  sample_b: b.csv
  n_population: 2000
estimators:
  - {estimator: DR2, regime: both_correct}
)";

}  // namespace

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ValidationError("x")) == kExitValidation);
  CHECK(exit_code_for(SolverError("x")) == kExitSolver);
  CHECK(exit_code_for(IoError("x")) == kExitIo);
}

TEST_CASE("sample CSV files round-trip losslessly") {
  const fs::path dir = scratch("roundtrip");
  const ObservedData d = testing::toy_data(4);
  write_sample_a(dir / "a.csv", d);
  write_sample_b(dir / "b.csv", d);
  const ObservedData back = read_samples(dir / "a.csv", dir / "b.csv", d.n_population, d.design);
  REQUIRE(back.sample_a.size() == d.sample_a.size());
  REQUIRE(back.sample_b.size() == d.sample_b.size());
  for (std::size_t i = 0; i < d.sample_a.size(); ++i) {
    CHECK(back.sample_a[i].unit.x == d.sample_a[i].unit.x);
    CHECK(back.sample_a[i].unit.y == d.sample_a[i].unit.y);
    CHECK(back.sample_a[i].pi_a == d.sample_a[i].pi_a);
  }
  for (std::size_t i = 0; i < d.sample_b.size(); ++i) {
    CHECK(back.sample_b[i].x == d.sample_b[i].x);
    CHECK(back.sample_b[i].y == d.sample_b[i].y);
  }
  const std::string header = slurp(dir / "a.csv").substr(0, 20);
  CHECK(header.rfind("id,x_1,x_2,pi_a,y", 0) == 0);
}

TEST_CASE("CSV errors name the file and line") {
  const fs::path dir = scratch("errors");
  put(dir / "b.csv", "id,x_1,y\n1,0.5,2\n2,0.1,1\n3,-1,0\n");
  put(dir / "a.csv", "id,x_1,pi_a,y\n1,0.5,0.2,1\n2,0.1,1.5,1\n3,0.2,0.3,0\n");
  const DesignDescriptor poisson;
  std::string msg = error_of([&] { read_samples(dir / "a.csv", dir / "b.csv", 100, poisson); });
  CHECK(msg.find("a.csv line 3") != std::string::npos);
  CHECK(msg.find("pi_a = 1.5") != std::string::npos);
  CHECK_THROWS_AS(read_samples(dir / "a.csv", dir / "b.csv", 100, poisson), ValidationError);

  put(dir / "a.csv", "id,x_1,pi_a,y\n1,0.5,0.2,1\n2,abc,0.5,1\n3,0.2,0.3,0\n");
  msg = error_of([&] { read_samples(dir / "a.csv", dir / "b.csv", 100, poisson); });
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK(msg.find("'abc'") != std::string::npos);

  put(dir / "a.csv", "id,x_1,pi_a\n1,0.5,0.2\n2,0.1,0.5\n3,0.2,0.3\n");
  CHECK_NOTHROW(read_samples(dir / "a.csv", dir / "b.csv", 100, poisson));
  put(dir / "b.csv", "id,x_1,y\n1,0.5,2\n2,0.1,\n3,-1,0\n");
  msg = error_of([&] { read_samples(dir / "a.csv", dir / "b.csv", 100, poisson); });
  CHECK(msg.find("b.csv line 3") != std::string::npos);

  put(dir / "b.csv", "id,x_1,x_2,y\n1,0.5,1,2\n2,0.1,1,1\n3,-1,1,0\n");
  CHECK_THROWS_AS(read_samples(dir / "a.csv", dir / "b.csv", 100, poisson), ValidationError);
  CHECK_THROWS_AS(read_samples(dir / "missing.csv", dir / "b.csv", 100, poisson), IoError);
}

TEST_CASE("run configuration parsing") {
  const RunConfig c = parse_run_config(kEstimateYaml, "/base");
  CHECK(c.mode == RunMode::kEstimate);
  CHECK(c.sample_a == fs::path("/base/a.csv"));
  CHECK(c.output == fs::path("/base/out"));
  CHECK(c.n_population == 2000);
  REQUIRE(c.estimators.size() == 1);
  CHECK(c.estimators[0].kind == EstimatorKind::kDR2);

  CHECK_THROWS_AS(parse_run_config(std::string(kEstimateYaml) + "colour: red\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config(std::string(kEstimateYaml) + "level: 1.5\n"), ValidationError);
  CHECK_THROWS_AS(parse_run_config("mode: estimate\ndata: {sample_a: a, sample_b: b, n_population: 5}\n"),
                  ValidationError);
  CHECK_THROWS_AS(parse_run_config(std::string(kEstimateYaml) +
                                   "  - {estimator: DR1, regime: kh_doubly_robust}\n"),
                  ValidationError);
  CHECK_NOTHROW(parse_run_config(std::string(kEstimateYaml) +
                                 "  - {estimator: DR1, regime: kh_doubly_robust}\n"
                                 "model: {method: kim_haziza}\n"));
  CHECK_THROWS_AS(parse_run_config(std::string(kEstimateYaml) +
                                   "  - {estimator: IPW1, regime: both_correct}\n"),
                  ValidationError);
  CHECK_THROWS_AS(parse_run_config("mode: [unterminated\n"), ValidationError);

  const RunConfig s = parse_run_config(R"(
mode: simulate
seed: 17
model: {sigma2: linear_in_x}
scenario:
  n_population: 5000
  replicates: 20
  misspecification: {outcome_wrong: true}
  sample_a: {design: srswor, size: 400}
estimators:
  - {estimator: DR1, regime: selection_correct}
)");
  CHECK(s.mode == RunMode::kSimulate);
  CHECK(s.scenario.seed == 17);
  CHECK(s.scenario.n_population == 5000);
  CHECK(s.scenario.sample_a.kind == DesignKind::kSrswor);
  CHECK(s.scenario.misspecification.outcome_wrong);
  CHECK(s.scenario.sigma2 == Sigma2Model::kLinearInX);
  CHECK(s.scenario.estimators.size() == 1);
  CHECK(s.scenario.pooled.size() == default_scenario().pooled.size());
  CHECK_THROWS_AS(parse_run_config("mode: simulate\nmodel: {outcome_columns: [0, 1]}\n"),
                  ValidationError);
  CHECK_THROWS_AS(parse_run_config("mode: simulate\nscenario: {replicates: 1}\n"), ValidationError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.yaml"), IoError);
}

TEST_CASE("output directories are locked while in use") {
  const fs::path dir = scratch("lock");
  {
    OutputLock first(dir);
    const std::string msg = error_of([&] { OutputLock second(dir); });
    CHECK(msg.find("in use") != std::string::npos);
  }
  CHECK_NOTHROW(OutputLock{dir});
  CHECK_FALSE(fs::exists(dir / ".drpool.lock"));
}

TEST_CASE("summary CSV is rectangular") {
  ScenarioConfig c = default_scenario();
  c.replicates = 10;
  const std::string csv = summary_csv(run_replications(c));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  const auto columns = std::count(line.begin(), line.end(), ',');
  int rows = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == columns);
    ++rows;
  }
  CHECK(rows == static_cast<int>(c.estimators.size() + c.covariances.size() + c.pooled.size()));
}

TEST_CASE("an exported replicate re-estimates to the in-process values") {
  const fs::path dir = scratch("draw");
  RunConfig sim = parse_run_config("mode: simulate\nseed: 5\nscenario: {replicates: 10}\n");
  const std::uint64_t replicate = 3;
  const SampleDraw draw = run_draw(sim, replicate, dir);
  CHECK(fs::exists(dir / "sample_a.csv"));
  CHECK(fs::exists(dir / "sample_b.csv"));

  const RunConfig est = load_run_config(dir / "estimate.yaml");
  const EstimateReport report = run_estimate(est);
  CHECK(fs::exists(dir / "report" / "report.txt"));
  const auto json = nlohmann::json::parse(slurp(dir / "report" / "report.json"));
  CHECK(json["estimates"].size() == sim.scenario.estimators.size());

  const SimulatedPopulation pop = generate_population(sim.scenario, sim.scenario.seed);
  const ReplicateResult direct = run_replicate(sim.scenario, pop, replicate);
  REQUIRE(direct.ok);
  REQUIRE(report.estimates.size() == direct.estimate.size());
  for (std::size_t k = 0; k < direct.estimate.size(); ++k) {
    CHECK(report.estimates[k].estimate == direct.estimate[k]);
    CHECK(report.estimates[k].variance == direct.variance[k]);
  }
  REQUIRE(report.pooled.size() == 1);
  CHECK(report.pooled[0].second.pooled_estimate == direct.pooled_estimate[0]);
  CHECK(report.n_a == draw.observed.sample_a.size());

  // The JSON report carries the centring vectors for the model-based rows.
  for (const auto& row : json["estimates"]) {
    if (row["regime"] == "design") continue;
    CHECK(row["delta_m"].size() == report.n_a);
    CHECK(row["delta_y"].size() == report.n_b);
  }

  // Running again gives the same files.
  const std::string first = slurp(dir / "report" / "report.json");
  run_estimate(est);
  CHECK(slurp(dir / "report" / "report.json") == first);
}

TEST_CASE("simulate writes a summary and a manifest") {
  const fs::path dir = scratch("simulate");
  RunConfig c = parse_run_config("mode: simulate\nseed: 11\nscenario: {replicates: 8}\n");
  c.output = dir / "one";
  run_simulate(c);
  c.output = dir / "two";
  c.scenario.threads = 2;
  run_simulate(c);
  CHECK(slurp(dir / "one" / "summary.csv") == slurp(dir / "two" / "summary.csv"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "one" / "manifest.json"));
  CHECK(manifest["seed"] == 11);
  CHECK(manifest["replicates_completed"] == 8);
  CHECK(manifest["version"] == kVersion);
}
