#pragma once

// Umbrella header for the calikit multi-class probability calibration
// library.

#include "calikit/core.hpp"
#include "calikit/csv.hpp"
#include "calikit/errors.hpp"
#include "calikit/flat_iso.hpp"
#include "calikit/ir_ovr.hpp"
#include "calikit/metrics.hpp"
#include "calikit/model_io.hpp"
#include "calikit/parallel.hpp"
#include "calikit/pava.hpp"
#include "calikit/rng.hpp"
#include "calikit/scaling.hpp"
#include "calikit/scir.hpp"
#include "calikit/synth.hpp"
