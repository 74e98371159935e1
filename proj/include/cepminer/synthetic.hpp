#pragma once

#include <cstdint>
#include <vector>

#include "cepminer/nn.hpp"
#include "cepminer/pattern.hpp"
#include "cepminer/rank_predictor.hpp"
#include "cepminer/stream.hpp"

namespace cepminer {

class GroundTruth;

struct PlantingOptions {
  std::size_t rows = 5000;
  double plant_rate = 0.05;  // chance that a planted instance starts at a given row
  double value_lo = 0.0;
  double value_hi = 10.0;
  double mean_gap = 0.5;  // mean seconds between consecutive records
  std::uint64_t seed = 0;
};

// Four event types {A, B, C, D}, attributes {x, y}, operators {<, >, =}.
EventSchema default_synthetic_schema();
// Three targets over the default schema, all with the given time window.
std::vector<Pattern> default_targets(const EventSchema& schema, double within_seconds = 10.0);

// Uniform background events with complete instances of the targets planted
// at `plant_rate`. Planted values satisfy every condition of the target.
std::vector<Record> generate_planted_stream(const EventSchema& schema, const std::vector<Pattern>& targets,
                                            const PlantingOptions& options);

// Random hole-free pattern with backward references only, so it is within
// (max_len, max_conds) both as written and after normalization.
Pattern random_mined_pattern(const EventSchema& schema, std::size_t max_len, std::size_t max_conds,
                             double within_seconds, double value_lo, double value_hi, nn::Rng& rng);

// Labeled evaluation set: half random patterns, half single-edit mutations of
// the targets, so ratings spread over the whole scale. Canonical texts are unique.
std::vector<LabeledPattern> make_labeled_set(const EventSchema& schema, const GroundTruth& truth, std::size_t max_len,
                                             std::size_t max_conds, double within_seconds, std::size_t count,
                                             nn::Rng& rng);

// Stream for the constant-recovery benchmark: alternating B/C records one
// second apart. B values are uniform on [lo, hi]; C values follow a normal
// hill around `peak`, clipped to [lo, hi].
EventSchema constant_benchmark_schema();
std::vector<Record> planted_constant_stream(std::size_t pairs, double peak, double spread, double lo, double hi,
                                            std::uint64_t seed);

}  // namespace cepminer
