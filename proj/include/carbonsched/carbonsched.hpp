#pragma once

#include "carbonsched/errors.hpp"
#include "carbonsched/io.hpp"
#include "carbonsched/optimality.hpp"
#include "carbonsched/presets.hpp"
#include "carbonsched/profile.hpp"
#include "carbonsched/random.hpp"
#include "carbonsched/scheduler.hpp"
#include "carbonsched/sim.hpp"
#include "carbonsched/sweep.hpp"
#include "carbonsched/trace.hpp"
