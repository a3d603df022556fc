#include "groupforge/filter.hpp"

#include "groupforge/errors.hpp"

namespace groupforge {

void FilterConfig::validate(int group_size) const {
    if (lower < 0 || upper < lower || upper > group_size) {
        throw ConfigError("filter bounds must satisfy 0 <= lower <= upper <= G");
    }
    if (buffer_size < 1) throw ConfigError("buffer_size must be >= 1");
    if (inner_epochs < 1) throw ConfigError("inner_epochs must be >= 1");
    if (outer_iterations < 1) throw ConfigError("outer_iterations must be >= 1");
}

int accuracy_count(const RolloutGroup& g, CountMode mode) {
    int count = 0;
    for (const RewardBreakdown& r : g.rewards) {
        double v = mode == CountMode::AccuracyComponent ? r.accuracy : r.total;
        if (v == 1.0) ++count;
    }
    return count;
}

bool admit(const RolloutGroup& g, const FilterConfig& cfg) {
    return g.accuracy_count >= cfg.lower && g.accuracy_count <= cfg.upper;
}

void Buffer::push(RolloutGroup g) {
    groups_.push_back(std::move(g));
    ++pushed_;
}

std::optional<std::vector<RolloutGroup>> Buffer::try_drain() {
    const std::size_t nb = static_cast<std::size_t>(cfg_.buffer_size);
    if (groups_.size() < nb) return std::nullopt;

    std::vector<RolloutGroup> batch(std::make_move_iterator(groups_.begin()),
                                    std::make_move_iterator(groups_.begin() +
                                                            static_cast<std::ptrdiff_t>(nb)));
    if (cfg_.carry_overflow) {
        groups_.erase(groups_.begin(), groups_.begin() + static_cast<std::ptrdiff_t>(nb));
    } else {
        discarded_ += groups_.size() - nb;
        groups_.clear();
    }
    drained_ += nb;
    return batch;
}

std::optional<std::vector<RolloutGroup>> push_and_drain(Buffer& buf, RolloutGroup g) {
    buf.push(std::move(g));
    return buf.try_drain();
}

}  // namespace groupforge
