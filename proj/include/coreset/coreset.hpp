#pragma once

#include "coreset/dataset.hpp"
#include "coreset/error.hpp"
#include "coreset/eval.hpp"
#include "coreset/manifest.hpp"
#include "coreset/metrics.hpp"
#include "coreset/parallel.hpp"
#include "coreset/rng.hpp"
#include "coreset/samplers.hpp"
#include "coreset/store.hpp"
#include "coreset/synth.hpp"
#include "coreset/vecmath.hpp"
