#ifndef STRACK_SUITES_HPP_
#define STRACK_SUITES_HPP_

#include <cstdint>
#include <vector>

#include "strack/sequence_io.hpp"

namespace strack {

// Seeded synthetic benchmark suites.

// Constant velocity of at most 2 px/frame, no distractors.
std::vector<SequenceSpec> easy_suite(std::uint64_t seed, int count = 10, int frames = 50);

// Jump motion with magnitude between 0.5x and 0.8x the larger target side.
std::vector<SequenceSpec> fast_suite(std::uint64_t seed, int count = 10, int frames = 50);

// Mixed motion models for offline training.
std::vector<SequenceSpec> training_suite(std::uint64_t seed, int count = 8, int frames = 30);

}  // namespace strack

#endif  // STRACK_SUITES_HPP_
