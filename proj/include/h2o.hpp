#pragma once

#include "h2o/baseline.hpp"
#include "h2o/domain.hpp"
#include "h2o/dqn.hpp"
#include "h2o/energy.hpp"
#include "h2o/experiment.hpp"
#include "h2o/hierarchy.hpp"
#include "h2o/metrics.hpp"
#include "h2o/platform.hpp"
#include "h2o/workload.hpp"
