#pragma once

#include "morseflow/config.hpp"
#include "morseflow/error.hpp"
#include "morseflow/flow.hpp"
#include "morseflow/functionals.hpp"
#include "morseflow/geometry.hpp"
#include "morseflow/initial_data.hpp"
#include "morseflow/io.hpp"
#include "morseflow/minimizer.hpp"
#include "morseflow/oracles.hpp"
#include "morseflow/validation.hpp"
