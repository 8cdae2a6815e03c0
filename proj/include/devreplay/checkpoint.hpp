#pragma once

#include <string>

#include "devreplay/dueling_dqn.hpp"

namespace devreplay {

// Writes <prefix>.bin (every weight block as little-endian float32, in block
// order, no padding) and <prefix>.manifest, a text file:
//
//   devreplay-checkpoint 1
//   shape <state_dim> <shared_units> <stream_units> <num_actions>
//   <name> <rows> <cols> <offset>     one line per block, offset in floats
void save_checkpoint(const DuelingParams<float>& params, const std::string& prefix);

DuelingParams<float> load_checkpoint(const std::string& prefix);

}  // namespace devreplay
