#pragma once

#include "stark/common.hpp"
#include "stark/graph.hpp"
#include "stark/io.hpp"
#include "stark/kernel.hpp"
#include "stark/metrics.hpp"
#include "stark/numerics.hpp"
#include "stark/rng.hpp"
#include "stark/simulate.hpp"
#include "stark/solver.hpp"
