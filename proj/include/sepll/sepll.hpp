#pragma once

#include "sepll/config.hpp"
#include "sepll/data.hpp"
#include "sepll/encoder.hpp"
#include "sepll/error.hpp"
#include "sepll/eval.hpp"
#include "sepll/lf_engine.hpp"
#include "sepll/manifest.hpp"
#include "sepll/metrics.hpp"
#include "sepll/model.hpp"
#include "sepll/trainer.hpp"
