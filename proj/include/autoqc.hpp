#pragma once

#include "autoqc/capiquant.hpp"
#include "autoqc/config.hpp"
#include "autoqc/error.hpp"
#include "autoqc/geometry.hpp"
#include "autoqc/inference.hpp"
#include "autoqc/io.hpp"
#include "autoqc/metrics.hpp"
#include "autoqc/parallel.hpp"
#include "autoqc/pipeline.hpp"
#include "autoqc/preprocess.hpp"
#include "autoqc/prompt.hpp"
#include "autoqc/report.hpp"
#include "autoqc/rng.hpp"
#include "autoqc/stats.hpp"
#include "autoqc/store.hpp"
#include "autoqc/synth.hpp"
