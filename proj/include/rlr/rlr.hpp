#pragma once

#include "rlr/chain.hpp"
#include "rlr/config.hpp"
#include "rlr/diffcore.hpp"
#include "rlr/errors.hpp"
#include "rlr/estimators.hpp"
#include "rlr/experiments.hpp"
#include "rlr/linear_oracle.hpp"
#include "rlr/montecarlo.hpp"
#include "rlr/param_io.hpp"
#include "rlr/planner.hpp"
#include "rlr/rng.hpp"
#include "rlr/trainer.hpp"
