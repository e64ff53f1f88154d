#pragma once

// Umbrella header for the numerical library. The experiment driver lives in
// gaugework/experiment.hpp and additionally needs yaml-cpp, CLI11 and nlohmann/json.

#include "gaugework/types.hpp"
#include "gaugework/linalg.hpp"
#include "gaugework/model_space.hpp"
#include "gaugework/fields.hpp"
#include "gaugework/gauss.hpp"
#include "gaugework/hamiltonian.hpp"
#include "gaugework/thermo.hpp"
#include "gaugework/counterexample.hpp"
