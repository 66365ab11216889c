#pragma once

// Umbrella header for the wide-and-deep graph neural network library.

#include "wdgnn/analysis.hpp"
#include "wdgnn/architecture.hpp"
#include "wdgnn/config.hpp"
#include "wdgnn/eigen.hpp"
#include "wdgnn/flocking.hpp"
#include "wdgnn/graph.hpp"
#include "wdgnn/matrix.hpp"
#include "wdgnn/movielens.hpp"
#include "wdgnn/online.hpp"
#include "wdgnn/rng.hpp"
#include "wdgnn/sourceloc.hpp"
#include "wdgnn/training.hpp"
