#pragma once

#include "adathresh/artifacts.hpp"
#include "adathresh/config.hpp"
#include "adathresh/dataset.hpp"
#include "adathresh/losses.hpp"
#include "adathresh/metrics.hpp"
#include "adathresh/model.hpp"
#include "adathresh/signals.hpp"
#include "adathresh/threshold.hpp"
#include "adathresh/trainer.hpp"
