#pragma once

// Umbrella header: everything in the library.

#include "nadjust/adjust.hpp"
#include "nadjust/checkpoint.hpp"
#include "nadjust/csv.hpp"
#include "nadjust/diff.hpp"
#include "nadjust/errors.hpp"
#include "nadjust/expreg.hpp"
#include "nadjust/fim.hpp"
#include "nadjust/garch.hpp"
#include "nadjust/harness.hpp"
#include "nadjust/idx.hpp"
#include "nadjust/mat.hpp"
#include "nadjust/mlp.hpp"
#include "nadjust/optim.hpp"
#include "nadjust/quantiles.hpp"
#include "nadjust/rng.hpp"
#include "nadjust/svg.hpp"
