#pragma once

// Umbrella header: the whole library.

#include "poisonctl/attackers.hpp"   // IWYU pragma: export
#include "poisonctl/config.hpp"      // IWYU pragma: export
#include "poisonctl/core.hpp"        // IWYU pragma: export
#include "poisonctl/costs.hpp"       // IWYU pragma: export
#include "poisonctl/datastream.hpp"  // IWYU pragma: export
#include "poisonctl/harness.hpp"     // IWYU pragma: export
#include "poisonctl/io.hpp"          // IWYU pragma: export
#include "poisonctl/log.hpp"         // IWYU pragma: export
#include "poisonctl/rng.hpp"         // IWYU pragma: export
#include "poisonctl/theory.hpp"      // IWYU pragma: export
#include "poisonctl/trajopt.hpp"     // IWYU pragma: export
#include "poisonctl/victims.hpp"     // IWYU pragma: export
