#pragma once

#include "lfgof/error.hpp"
#include "lfgof/harness.hpp"
#include "lfgof/holdout_gof.hpp"
#include "lfgof/io.hpp"
#include "lfgof/neighbors.hpp"
#include "lfgof/parallel.hpp"
#include "lfgof/posterior.hpp"
#include "lfgof/prior_gof.hpp"
#include "lfgof/report.hpp"
#include "lfgof/rng.hpp"
#include "lfgof/scores.hpp"
#include "lfgof/table.hpp"
#include "lfgof/transform.hpp"
