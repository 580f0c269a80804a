#include "spex/rng.hpp"

#include "spex/stats.hpp"

namespace spex {

double Rng::normal() { return norm_quantile(uniform()); }

}  // namespace spex
