#pragma once

#include "bosdf/config.hpp"
#include "bosdf/contextual.hpp"
#include "bosdf/environments.hpp"
#include "bosdf/harness.hpp"
#include "bosdf/kernel.hpp"
#include "bosdf/ledger.hpp"
#include "bosdf/oracle.hpp"
#include "bosdf/policies.hpp"
#include "bosdf/posterior.hpp"
#include "bosdf/regret.hpp"
#include "bosdf/rng.hpp"
