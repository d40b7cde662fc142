#pragma once

#include "mmmf/bench.hpp"
#include "mmmf/cardinality.hpp"
#include "mmmf/error.hpp"
#include "mmmf/io.hpp"
#include "mmmf/marginal_field.hpp"
#include "mmmf/meanfield.hpp"
#include "mmmf/mixture.hpp"
#include "mmmf/model.hpp"
#include "mmmf/rng.hpp"
#include "mmmf/selection.hpp"
#include "mmmf/temporal.hpp"
