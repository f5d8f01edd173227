#pragma once

#include "feddrive/core.hpp"
#include "feddrive/critic.hpp"
#include "feddrive/csv.hpp"
#include "feddrive/datagen.hpp"
#include "feddrive/distributions.hpp"
#include "feddrive/evaluate.hpp"
#include "feddrive/federation.hpp"
#include "feddrive/paillier.hpp"
#include "feddrive/trip_metrics.hpp"
