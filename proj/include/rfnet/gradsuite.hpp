#pragma once

// The verification sweep behind `rfnet grad-check`: every differentiable op
// and every fusion block on randomized small shapes, multiple seeds each,
// all in double precision against central finite differences.

#include <string>
#include <vector>

#include "rfnet/gradcheck.hpp"

namespace rfnet {

enum class GradScope { Ops, Modules, Model, All };

GradScope parse_grad_scope(const std::string& name);

// `seeds` randomized repetitions per check (shapes C<=8, H,W<=8).
std::vector<GradCheckReport> run_grad_suite(GradScope scope, std::uint64_t seed, int seeds = 10);

bool all_pass(const std::vector<GradCheckReport>& reports);

}  // namespace rfnet
