#pragma once

// Umbrella header for the dp2o preference-optimization toolkit.

#include "dp2o/artifacts.hpp"
#include "dp2o/config.hpp"
#include "dp2o/curation.hpp"
#include "dp2o/dpo.hpp"
#include "dp2o/error.hpp"
#include "dp2o/experiment.hpp"
#include "dp2o/hpo.hpp"
#include "dp2o/mlp.hpp"
#include "dp2o/reward.hpp"
#include "dp2o/rng.hpp"
#include "dp2o/rollout.hpp"
#include "dp2o/schedule.hpp"
#include "dp2o/score_model.hpp"
#include "dp2o/stats.hpp"
#include "dp2o/toy_task.hpp"
