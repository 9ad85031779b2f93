#pragma once

// Sequential change detection and identification on hidden Markov models.

#include "hmmcpd/closed_form.hpp"
#include "hmmcpd/csv.hpp"
#include "hmmcpd/density.hpp"
#include "hmmcpd/error.hpp"
#include "hmmcpd/limits.hpp"
#include "hmmcpd/model.hpp"
#include "hmmcpd/model_io.hpp"
#include "hmmcpd/numeric.hpp"
#include "hmmcpd/optimal.hpp"
#include "hmmcpd/parallel.hpp"
#include "hmmcpd/posterior.hpp"
#include "hmmcpd/riskeval.hpp"
#include "hmmcpd/rng.hpp"
#include "hmmcpd/sigma.hpp"
#include "hmmcpd/simulate.hpp"
#include "hmmcpd/strategy.hpp"
