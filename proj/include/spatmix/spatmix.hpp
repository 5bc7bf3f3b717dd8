#pragma once

// Spatial multinomial mixtures with a Gibbs (Strauss automodel) prior on labels.

#include "criteria.hpp"
#include "em.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "gibbs.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "mixture.hpp"
#include "model_select.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "simulation.hpp"
