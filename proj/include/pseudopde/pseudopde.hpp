#pragma once

#include "pseudopde/core.hpp"
#include "pseudopde/error.hpp"
#include "pseudopde/expr.hpp"
#include "pseudopde/fbsde_solver.hpp"
#include "pseudopde/mild_solver.hpp"
#include "pseudopde/operators.hpp"
#include "pseudopde/problem.hpp"
#include "pseudopde/processes.hpp"
#include "pseudopde/regression.hpp"
#include "pseudopde/rng.hpp"
#include "pseudopde/semigroup.hpp"
