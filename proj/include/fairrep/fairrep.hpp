#pragma once

#include "fairrep/error.hpp"
#include "fairrep/neural_core.hpp"
#include "fairrep/normalizer.hpp"
#include "fairrep/csv.hpp"
#include "fairrep/dataset.hpp"
#include "fairrep/metrics.hpp"
#include "fairrep/correction_model.hpp"
#include "fairrep/harness.hpp"
