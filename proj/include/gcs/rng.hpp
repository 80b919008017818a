#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gcs {

using Rng = std::mt19937_64;

// Independent named stream derived from a master seed. Changing how one
// consumer draws from its stream leaves every other stream untouched.
Rng make_stream(std::uint64_t master_seed, std::string_view name);

// Same, with an extra integer discriminator (run index, operating point, ...).
Rng make_stream(std::uint64_t master_seed, std::string_view name, std::uint64_t index);

}  // namespace gcs
