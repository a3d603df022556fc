#pragma once

#include "groupforge/grpo.hpp"

#include <optional>
#include <vector>

namespace groupforge {

enum class CountMode { AccuracyComponent, TotalReward };

struct FilterConfig {
    bool enabled = true;
    int lower = 1;                 // admission lower bound on the correct count
    int upper = 7;                 // admission upper bound; G-1 by default
    int buffer_size = 32;          // groups per drained update batch
    int inner_epochs = 1;          // optimisation epochs per drained batch
    int outer_iterations = 100000; // rollout rounds before the stage gives up
    CountMode count_mode = CountMode::AccuracyComponent;
    bool carry_overflow = false;   // retain overflow groups instead of clearing

    void validate(int group_size) const;
};

// Number of responses counted as correct. The default counts accuracy
// rewards equal to 1; TotalReward counts total rewards equal to 1 instead.
int accuracy_count(const RolloutGroup& g, CountMode mode = CountMode::AccuracyComponent);

// lower <= count <= upper, using the group's stored accuracy_count.
bool admit(const RolloutGroup& g, const FilterConfig& cfg);

// Admitted-group buffer. Draining returns the first buffer_size groups and
// clears the whole buffer; anything beyond buffer_size is discarded with
// the clear unless carry_overflow is set.
class Buffer {
  public:
    explicit Buffer(FilterConfig cfg) : cfg_(std::move(cfg)) {}

    void push(RolloutGroup g);
    std::optional<std::vector<RolloutGroup>> try_drain();

    std::size_t size() const { return groups_.size(); }
    std::uint64_t total_pushed() const { return pushed_; }
    std::uint64_t total_drained() const { return drained_; }
    std::uint64_t total_discarded() const { return discarded_; }

  private:
    FilterConfig cfg_;
    std::vector<RolloutGroup> groups_;
    std::uint64_t pushed_ = 0;
    std::uint64_t drained_ = 0;
    std::uint64_t discarded_ = 0;
};

std::optional<std::vector<RolloutGroup>> push_and_drain(Buffer& buf, RolloutGroup g);

}  // namespace groupforge
