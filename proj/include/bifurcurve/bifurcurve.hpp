#pragma once

#include "branching.hpp"
#include "config.hpp"
#include "continuation.hpp"
#include "estimator.hpp"
#include "experiments.hpp"
#include "io.hpp"
#include "mesh.hpp"
#include "oracle.hpp"
