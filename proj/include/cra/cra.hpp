#pragma once

#include "cra/analytic.hpp"
#include "cra/params.hpp"
#include "cra/rng.hpp"
#include "cra/signal.hpp"
#include "cra/sim.hpp"
#include "cra/specfun.hpp"
#include "cra/sweep.hpp"
