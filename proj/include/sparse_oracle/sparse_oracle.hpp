#pragma once

#include "sparse_oracle/config.hpp"
#include "sparse_oracle/errors.hpp"
#include "sparse_oracle/experiment.hpp"
#include "sparse_oracle/model.hpp"
#include "sparse_oracle/numerics.hpp"
#include "sparse_oracle/oracle.hpp"
#include "sparse_oracle/regression.hpp"
#include "sparse_oracle/report.hpp"
#include "sparse_oracle/rng.hpp"
#include "sparse_oracle/rules.hpp"
#include "sparse_oracle/version.hpp"
