#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncc/design.hpp"
#include "ncc/randomization.hpp"
#include "ncc/rng.hpp"

namespace ncc {

struct PatientRecord {
    int index = 0;      // j, 1-based enrolment order
    double time = 0.0;  // t_j
    int arm = 0;        // k_j
    int period = 0;     // s_j, 0-based
    double y = 0.0;
};

struct TrialDataset {
    Endpoint endpoint = Endpoint::continuous;
    int num_arms = 0;
    int num_periods = 0;
    std::uint64_t seed = 0;
    std::vector<PatientRecord> records;
};

/// Per-(arm, period) sample sizes and means.
struct CellStats {
    std::vector<std::vector<int>> count;
    std::vector<std::vector<double>> mean;

    double y(int arm, int period) const { return mean.at(arm).at(period); }
    int n(int arm, int period) const { return count.at(arm).at(period); }
};

inline CellStats cell_stats(const TrialDataset& data) {
    CellStats c;
    c.count.assign(data.num_arms, std::vector<int>(data.num_periods, 0));
    std::vector<std::vector<double>> sum(data.num_arms,
                                         std::vector<double>(data.num_periods, 0.0));
    for (const auto& r : data.records) {
        ++c.count[r.arm][r.period];
        sum[r.arm][r.period] += r.y;
    }
    c.mean = sum;
    for (int k = 0; k < data.num_arms; ++k)
        for (int s = 0; s < data.num_periods; ++s)
            c.mean[k][s] = c.count[k][s] > 0
                               ? sum[k][s] / c.count[k][s]
                               : std::numeric_limits<double>::quiet_NaN();
    return c;
}

/// Draws one trial. Outcome randomness for patient j comes from counter j of
/// the outcome stream, so the draw does not depend on the arm sequence.
inline TrialDataset generate_trial(const Scenario& scenario,
                                   const TrialDesign& design, std::uint64_t seed) {
    const AssignmentSequence seq = assign_arms(design, seed);
    const TrendFrame frame = trend_frame(scenario, design);
    const int n = frame.total;

    std::vector<double> times(n);
    if (scenario.entry_time_mode == EntryTimeMode::random_uniform) {
        rng::Stream gen(seed, rng::stream_id(rng::StreamId::entry_times));
        for (double& t : times) t = n * (1.0 - gen.uniform());
        std::sort(times.begin(), times.end());
    } else {
        for (int j = 0; j < n; ++j) times[j] = j + 1.0;
    }

    TrialDataset data;
    data.endpoint = scenario.endpoint;
    data.num_arms = design.num_arms();
    data.num_periods = design.num_periods();
    data.seed = seed;
    data.records.resize(n);
    const std::uint64_t outcome_stream = rng::stream_id(rng::StreamId::outcomes);
    int period = 0;
    for (int j = 1; j <= n; ++j) {
        while (j > seq.period_starts[period + 1]) ++period;
        PatientRecord& r = data.records[j - 1];
        r.index = j;
        r.time = times[j - 1];
        r.arm = seq.arms[j - 1];
        r.period = period;
        const double eta =
            scenario.eta0 + scenario.theta[r.arm] +
            time_trend_value(scenario.pattern, scenario.lambda[r.arm], r.time,
                             frame.total, frame.first_period, frame.peak);
        const rng::Counter bits = rng::block_at(seed, outcome_stream, j);
        const double u1 = rng::to_unit(rng::join(bits[0], bits[1]));
        const double u2 = rng::to_unit(rng::join(bits[2], bits[3]));
        if (scenario.endpoint == Endpoint::continuous) {
            r.y = eta + scenario.sigma * rng::box_muller(u1, u2);
        } else {
            r.y = u1 < inv_logit(eta) ? 1.0 : 0.0;
        }
    }
    return data;
}

/// CSV with header `j,t,arm,period,y`; period is written 1-based.
inline void write_dataset_csv(std::ostream& out, const TrialDataset& data) {
    out << "j,t,arm,period,y\n";
    char buf[128];
    for (const auto& r : data.records) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%d,%d,%.17g\n", r.index, r.time,
                      r.arm, r.period + 1, r.y);
        out << buf;
    }
}

inline TrialDataset read_dataset_csv(std::istream& in, Endpoint endpoint) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("j,t,arm,period,y", 0) != 0)
        throw std::runtime_error("dataset CSV must start with header j,t,arm,period,y");
    TrialDataset data;
    data.endpoint = endpoint;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        PatientRecord r;
        if (!(fields >> r.index >> r.time >> r.arm >> r.period >> r.y) ||
            r.arm < 0 || r.period < 1)
            throw std::runtime_error("malformed dataset row at line " +
                                     std::to_string(line_no));
        r.period -= 1;
        if (endpoint == Endpoint::binary && r.y != 0.0 && r.y != 1.0)
            throw std::runtime_error("binary outcome not in {0,1} at line " +
                                     std::to_string(line_no));
        data.num_arms = std::max(data.num_arms, r.arm + 1);
        data.num_periods = std::max(data.num_periods, r.period + 1);
        data.records.push_back(r);
    }
    return data;
}

inline void write_sequence_csv(std::ostream& out, const AssignmentSequence& seq) {
    out << "j,period,arm\n";
    int period = 0;
    for (std::size_t i = 0; i < seq.arms.size(); ++i) {
        while (static_cast<int>(i) >= seq.period_starts[period + 1]) ++period;
        out << i + 1 << ',' << period + 1 << ',' << seq.arms[i] << '\n';
    }
}

}  // namespace ncc
