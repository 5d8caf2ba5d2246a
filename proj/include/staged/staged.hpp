#pragma once

// Umbrella header.
#include "staged/checkpoint.hpp"
#include "staged/config.hpp"
#include "staged/errors.hpp"
#include "staged/graph.hpp"
#include "staged/io.hpp"
#include "staged/metrics.hpp"
#include "staged/model.hpp"
#include "staged/numcore.hpp"
#include "staged/pipeline.hpp"
#include "staged/staging.hpp"
#include "staged/train.hpp"
#include "staged/uncertainty.hpp"
