/// Umbrella header for the numeric library. The CLI layer (gncoder/cli.hpp)
/// and serialization (gncoder/io.hpp) are included separately since they pull
/// in CLI11 and nlohmann/json.

#pragma once

#include "gncoder/activations.hpp"
#include "gncoder/diagnostics.hpp"
#include "gncoder/errors.hpp"
#include "gncoder/forward_ops.hpp"
#include "gncoder/function_space.hpp"
#include "gncoder/linalg.hpp"
#include "gncoder/network.hpp"
#include "gncoder/solver.hpp"
