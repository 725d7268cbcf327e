#pragma once

#include "dpo/closedform.hpp"
#include "dpo/errors.hpp"
#include "dpo/harness.hpp"
#include "dpo/model.hpp"
#include "dpo/observables.hpp"
#include "dpo/oracle.hpp"
