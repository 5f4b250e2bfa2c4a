#include "drpool/serialize.h"

namespace drpool {

using nlohmann::json;

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

void to_json(json& j, const UnitRecord& unit) {
  j = json{{"x", vector_to_json(unit.x)}, {"z", vector_to_json(unit.z)}};
  j["y"] = unit.y ? json(*unit.y) : json(nullptr);
}

void from_json(const json& j, UnitRecord& unit) {
  unit.x = vector_from_json(j.at("x"));
  unit.z = j.contains("z") ? vector_from_json(j.at("z")) : Vector();
  if (j.contains("y") && !j.at("y").is_null()) {
    unit.y = j.at("y").get<double>();
  } else {
    unit.y.reset();
  }
}

void to_json(json& j, const DesignDescriptor& design) {
  j = json{{"kind", to_string(design.kind)}, {"sample_size", design.sample_size}};
}

void from_json(const json& j, DesignDescriptor& design) {
  design.kind = parse_design_kind(j.at("kind").get<std::string>());
  design.sample_size = j.value("sample_size", std::size_t{0});
}

void to_json(json& j, const FinitePopulation& population) {
  j = json{{"units", population.units},
           {"pi_a", population.pi_a},
           {"pi_b_true", population.pi_b_true},
           {"design", population.design}};
}

void from_json(const json& j, FinitePopulation& population) {
  population.units = j.at("units").get<std::vector<UnitRecord>>();
  population.pi_a = j.at("pi_a").get<std::vector<double>>();
  population.pi_b_true = j.at("pi_b_true").get<std::vector<double>>();
  population.design = j.at("design").get<DesignDescriptor>();
}

void to_json(json& j, const ObservedData& observed) {
  json a = json::array();
  for (const auto& row : observed.sample_a) {
    json r = row.unit;
    r["pi_a"] = row.pi_a;
    a.push_back(std::move(r));
  }
  j = json{{"n_population", observed.n_population},
           {"sample_a", std::move(a)},
           {"sample_b", observed.sample_b},
           {"design", observed.design}};
}

void from_json(const json& j, ObservedData& observed) {
  observed.n_population = j.at("n_population").get<std::size_t>();
  observed.sample_a.clear();
  for (const auto& r : j.at("sample_a")) {
    observed.sample_a.push_back({r.get<UnitRecord>(), r.at("pi_a").get<double>()});
  }
  observed.sample_b = j.at("sample_b").get<std::vector<UnitRecord>>();
  observed.design = j.at("design").get<DesignDescriptor>();
}

void to_json(json& j, const ModelSpec& spec) {
  j = json{{"family", to_string(spec.family)},
           {"method", to_string(spec.method)},
           {"outcome_columns", spec.outcome_columns},
           {"selection_columns", spec.selection_columns}};
}

void from_json(const json& j, ModelSpec& spec) {
  spec.family = parse_outcome_family(j.at("family").get<std::string>());
  spec.method = parse_fit_method(j.at("method").get<std::string>());
  spec.outcome_columns = j.value("outcome_columns", std::vector<std::size_t>{});
  spec.selection_columns = j.value("selection_columns", std::vector<std::size_t>{});
}

}  // namespace drpool
