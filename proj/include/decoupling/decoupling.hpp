#pragma once

#include "decoupling/adversary.hpp"
#include "decoupling/distribution.hpp"
#include "decoupling/dyadic.hpp"
#include "decoupling/errors.hpp"
#include "decoupling/extrap.hpp"
#include "decoupling/haar.hpp"
#include "decoupling/laws.hpp"
#include "decoupling/parallel.hpp"
#include "decoupling/rng.hpp"
#include "decoupling/space.hpp"
#include "decoupling/stochint.hpp"
#include "decoupling/tangent.hpp"
#include "decoupling/version.hpp"
