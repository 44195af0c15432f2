#pragma once

#include "headprune/autodiff.hpp"
#include "headprune/checkpoint.hpp"
#include "headprune/data.hpp"
#include "headprune/errors.hpp"
#include "headprune/metrics.hpp"
#include "headprune/nn.hpp"
#include "headprune/pruning.hpp"
#include "headprune/report.hpp"
#include "headprune/rng.hpp"
#include "headprune/serialize.hpp"
#include "headprune/training.hpp"
