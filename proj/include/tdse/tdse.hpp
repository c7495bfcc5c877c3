#pragma once

// Convenience umbrella: pulls in the whole library.

#include "tdse/common.hpp"
#include "tdse/stats.hpp"
#include "tdse/rng.hpp"
#include "tdse/optim.hpp"
#include "tdse/series.hpp"
#include "tdse/loess.hpp"
#include "tdse/trend.hpp"
#include "tdse/gev.hpp"
#include "tdse/spline.hpp"
#include "tdse/model.hpp"
#include "tdse/npestim.hpp"
#include "tdse/penspline.hpp"
#include "tdse/mle.hpp"
#include "tdse/diagnostics.hpp"
#include "tdse/simulate.hpp"
#include "tdse/validate.hpp"
#include "tdse/serialize.hpp"
#include "tdse/config.hpp"
#include "tdse/pipeline.hpp"
