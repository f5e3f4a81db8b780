#pragma once

#include "pinnevo/autodiff.hpp"
#include "pinnevo/config.hpp"
#include "pinnevo/harness.hpp"
#include "pinnevo/io.hpp"
#include "pinnevo/landscape.hpp"
#include "pinnevo/mlp.hpp"
#include "pinnevo/optimizers.hpp"
#include "pinnevo/oracles.hpp"
#include "pinnevo/problems.hpp"
#include "pinnevo/rng.hpp"
