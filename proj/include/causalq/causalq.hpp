#pragma once

// Umbrella header.
#include "causalq/cmdp.hpp"
#include "causalq/envs.hpp"
#include "causalq/harness.hpp"
#include "causalq/io.hpp"
#include "causalq/learners.hpp"
#include "causalq/metrics.hpp"
#include "causalq/neural.hpp"
#include "causalq/replay.hpp"
#include "causalq/rng.hpp"
#include "causalq/solvers.hpp"
#include "causalq/tables.hpp"
