#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rnas/fitness.hpp"

namespace rnas {

/// One JSON record per line, in evaluation order.
std::string history_line(const ScoredIndividual& ind);

/// Parses a whole history file. Errors are ParseErrors naming the line.
std::vector<ScoredIndividual> read_history(std::string_view text);

}  // namespace rnas
