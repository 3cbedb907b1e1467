#pragma once

#include <cstdint>
#include <vector>

namespace rpf {

// How far down the candidate-recovery ladder a query had to go before k
// neighbors were available.
enum class Fallback { none, vote_relaxed, union_all, exhaustive };

inline const char* to_string(Fallback f) {
    switch (f) {
        case Fallback::none: return "none";
        case Fallback::vote_relaxed: return "vote_relaxed";
        case Fallback::union_all: return "union_all";
        case Fallback::exhaustive: return "exhaustive";
    }
    return "?";
}

// k nearest neighbors of one query. Distances are exact Euclidean distances,
// ascending; ties broken by ascending point index.
struct QueryResult {
    std::vector<std::uint32_t> indices;
    std::vector<double> distances;
    std::size_t candidates_examined = 0;
    Fallback fallback_level = Fallback::none;
};

}  // namespace rpf
