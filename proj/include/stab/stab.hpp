#pragma once

#include "stab/errors.hpp"
#include "stab/linalg.hpp"
#include "stab/mesh.hpp"
#include "stab/fem.hpp"
#include "stab/convergence.hpp"
#include "stab/spectral.hpp"
#include "stab/riccati.hpp"
#include "stab/timestepper.hpp"
#include "stab/experiments.hpp"
