#pragma once

#include "intermit/error.hpp"
#include "intermit/grid.hpp"
#include "intermit/map_models.hpp"
#include "intermit/induced_system.hpp"
#include "intermit/validation.hpp"
#include "intermit/rate_fit.hpp"
#include "intermit/ulam.hpp"
#include "intermit/transfer.hpp"
#include "intermit/norms.hpp"
#include "intermit/decay.hpp"
#include "intermit/scaling_laws.hpp"
#include "intermit/io.hpp"
