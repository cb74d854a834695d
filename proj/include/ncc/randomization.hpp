#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ncc/design.hpp"
#include "ncc/rng.hpp"

namespace ncc {

/// Arm label per enrolled patient in enrolment order.
struct AssignmentSequence {
    std::vector<int> arms;
    /// Index into `arms` where each period starts, plus a final end marker.
    std::vector<int> period_starts;
    std::uint64_t seed = 0;
};

namespace detail {

template <class Gen>
void shuffle(std::vector<int>& v, std::size_t first, std::size_t last, Gen& gen) {
    for (std::size_t i = last - first; i > 1; --i) {
        const std::size_t j = gen.below(i);
        std::swap(v[first + i - 1], v[first + j]);
    }
}

}  // namespace detail

/// Permuted blocks for one period. Every complete block is a shuffled copy of
/// the block quota. When the block length does not divide N_s, the last
/// partial block is a shuffle of whatever each arm still needs, so the period
/// totals equal the planned cell sizes exactly.
inline std::vector<int> permuted_block_sequence(const TrialDesign& design,
                                                int period, std::uint64_t seed) {
    const std::vector<int> quota = block_quota(design, period);
    if (quota.empty())
        throw std::invalid_argument(
            "block length not representable as integer per-arm quota in period " +
            std::to_string(period + 1));
    const int block = design.block_sizes[period];
    const int n = design.period_size(period);
    const int full_blocks = n / block;

    rng::Stream gen(seed, rng::stream_id(rng::StreamId::randomization, period));
    std::vector<int> seq;
    seq.reserve(n);
    for (int b = 0; b < full_blocks; ++b) {
        const std::size_t start = seq.size();
        for (int k = 0; k < design.num_arms(); ++k)
            seq.insert(seq.end(), quota[k], k);
        detail::shuffle(seq, start, seq.size(), gen);
    }
    const std::size_t start = seq.size();
    for (int k = 0; k < design.num_arms(); ++k)
        seq.insert(seq.end(), design.cell_sizes[k][period] - full_blocks * quota[k], k);
    detail::shuffle(seq, start, seq.size(), gen);
    return seq;
}

/// Independent categorical draws with probabilities n_{k,s} / N_s.
inline std::vector<int> simple_sequence(const TrialDesign& design, int period,
                                        std::uint64_t seed) {
    const int n = design.period_size(period);
    std::vector<double> cumulative;
    double acc = 0.0;
    for (int k = 0; k < design.num_arms(); ++k) {
        acc += static_cast<double>(design.cell_sizes[k][period]) / n;
        cumulative.push_back(acc);
    }
    int last_present = 0;
    for (int k = 0; k < design.num_arms(); ++k)
        if (design.cell_sizes[k][period] > 0) last_present = k;

    rng::Stream gen(seed, rng::stream_id(rng::StreamId::randomization, period));
    std::vector<int> seq(n);
    for (int& arm : seq) {
        const double u = gen.uniform();
        arm = last_present;
        for (int k = 0; k < last_present; ++k) {
            if (u < cumulative[k]) {
                arm = k;
                break;
            }
        }
    }
    return seq;
}

inline AssignmentSequence assign_arms(const TrialDesign& design, std::uint64_t seed) {
    AssignmentSequence out;
    out.seed = seed;
    out.arms.reserve(design.total_size());
    for (int s = 0; s < design.num_periods(); ++s) {
        out.period_starts.push_back(static_cast<int>(out.arms.size()));
        const std::vector<int> part =
            design.randomization == RandomizationKind::permuted_block
                ? permuted_block_sequence(design, s, seed)
                : simple_sequence(design, s, seed);
        out.arms.insert(out.arms.end(), part.begin(), part.end());
    }
    out.period_starts.push_back(static_cast<int>(out.arms.size()));
    return out;
}

}  // namespace ncc
