// JSON encoding of the core data model (nlohmann ADL hooks).

#ifndef DRPOOL_SERIALIZE_H_
#define DRPOOL_SERIALIZE_H_

#include "json.hpp"

#include "drpool/types.h"

namespace drpool {

void to_json(nlohmann::json& j, const UnitRecord& unit);
void from_json(const nlohmann::json& j, UnitRecord& unit);
void to_json(nlohmann::json& j, const DesignDescriptor& design);
void from_json(const nlohmann::json& j, DesignDescriptor& design);
void to_json(nlohmann::json& j, const FinitePopulation& population);
void from_json(const nlohmann::json& j, FinitePopulation& population);
void to_json(nlohmann::json& j, const ObservedData& observed);
void from_json(const nlohmann::json& j, ObservedData& observed);
void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

}  // namespace drpool

#endif  // DRPOOL_SERIALIZE_H_
