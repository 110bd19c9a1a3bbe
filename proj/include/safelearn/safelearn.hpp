#pragma once

#include "safelearn/acp.hpp"
#include "safelearn/common.hpp"
#include "safelearn/dyn_model.hpp"
#include "safelearn/envs.hpp"
#include "safelearn/gp.hpp"
#include "safelearn/harness.hpp"
#include "safelearn/kernel_features.hpp"
#include "safelearn/mppi.hpp"
#include "safelearn/plots.hpp"
#include "safelearn/run_io.hpp"
#include "safelearn/safety_filter.hpp"
