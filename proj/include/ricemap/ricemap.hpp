#pragma once

// Phenology-driven rice paddy classification: umbrella header.

#include "ricemap/calibration.hpp"
#include "ricemap/calibration_io.hpp"
#include "ricemap/classifier.hpp"
#include "ricemap/cube.hpp"
#include "ricemap/cube_io.hpp"
#include "ricemap/date.hpp"
#include "ricemap/districts.hpp"
#include "ricemap/error.hpp"
#include "ricemap/grid.hpp"
#include "ricemap/indices.hpp"
#include "ricemap/log.hpp"
#include "ricemap/parallel.hpp"
#include "ricemap/phenology.hpp"
#include "ricemap/preprocess.hpp"
#include "ricemap/rng.hpp"
#include "ricemap/run_manifest.hpp"
#include "ricemap/savgol.hpp"
#include "ricemap/stats.hpp"
#include "ricemap/validation.hpp"
