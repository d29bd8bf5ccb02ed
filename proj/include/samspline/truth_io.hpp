#pragma once

#include <cstdint>

#include <json.hpp>

#include "samspline/population_model.hpp"

namespace samspline {

// Observation sds are stored on the natural scale so zero-noise truths fit
// in JSON.
nlohmann::json to_json(const SimulationTruth& truth);
SimulationTruth truth_from_json(const nlohmann::json& j);

// truth.json written next to simulated data: the truth, the seed and the
// drawn states.
nlohmann::json simulation_record(const SimulationTruth& truth, std::uint64_t seed, const LatentStates& states);

}  // namespace samspline
