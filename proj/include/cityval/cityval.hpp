#pragma once

#include "cityval/baselines.hpp"
#include "cityval/core.hpp"
#include "cityval/dataset.hpp"
#include "cityval/evaluate.hpp"
#include "cityval/geo.hpp"
#include "cityval/manifest.hpp"
#include "cityval/metrics.hpp"
#include "cityval/model.hpp"
#include "cityval/synth.hpp"
#include "cityval/trainer.hpp"
