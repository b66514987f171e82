#pragma once

#include "mfegra/acquisition.hpp"
#include "mfegra/bench.hpp"
#include "mfegra/checkpoint.hpp"
#include "mfegra/distributions.hpp"
#include "mfegra/driver.hpp"
#include "mfegra/errors.hpp"
#include "mfegra/reliability.hpp"
#include "mfegra/surrogate.hpp"
#include "mfegra/verify.hpp"
