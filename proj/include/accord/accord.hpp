#pragma once

#include "accord/error.hpp"
#include "accord/graph_sim.hpp"
#include "accord/io.hpp"
#include "accord/linalg.hpp"
#include "accord/metrics.hpp"
#include "accord/parallel.hpp"
#include "accord/rng.hpp"
#include "accord/selection.hpp"
#include "accord/solver.hpp"

namespace accord {
inline constexpr const char* kVersion = "0.1.0";
}
