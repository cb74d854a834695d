#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncc {

enum class Endpoint { continuous, binary };
enum class TrendPattern { linear, step, inverse_u };
enum class RandomizationKind { permuted_block, simple };
enum class EntryTimeMode { deterministic, random_uniform };

/// Arms are indexed 0..K with arm 0 the shared control. Periods are indexed
/// from 0 in the API; external files number them from 1.
struct TrialDesign {
    /// cell_sizes[arm][period]: planned patients of `arm` in `period`.
    std::vector<std::vector<int>> cell_sizes;
    /// First and last period (inclusive) each arm is open for enrolment.
    std::vector<int> entry_period;
    std::vector<int> exit_period;
    /// Block length used by permuted-block randomization, one per period.
    std::vector<int> block_sizes;
    RandomizationKind randomization = RandomizationKind::permuted_block;

    int num_arms() const { return static_cast<int>(cell_sizes.size()); }
    int num_periods() const {
        return cell_sizes.empty() ? 0 : static_cast<int>(cell_sizes[0].size());
    }

    int period_size(int period) const {
        int n = 0;
        for (const auto& row : cell_sizes) n += row.at(period);
        return n;
    }

    /// Number of patients enrolled before `period` starts.
    int period_start(int period) const {
        int n = 0;
        for (int s = 0; s < period; ++s) n += period_size(s);
        return n;
    }

    int total_size() const { return period_start(num_periods()); }

    bool arm_present(int arm, int period) const {
        return cell_sizes.at(arm).at(period) > 0;
    }

    /// Period containing 1-based patient index j under deterministic entry.
    int period_of(int j) const {
        int upper = 0;
        for (int s = 0; s < num_periods(); ++s) {
            upper += period_size(s);
            if (j <= upper) return s;
        }
        throw std::out_of_range("patient index beyond trial size");
    }
};

/// Builds a design with entry/exit periods taken from the nonzero cells.
inline TrialDesign make_design(std::vector<std::vector<int>> cell_sizes,
                               std::vector<int> block_sizes,
                               RandomizationKind kind =
                                   RandomizationKind::permuted_block) {
    TrialDesign d;
    d.cell_sizes = std::move(cell_sizes);
    d.block_sizes = std::move(block_sizes);
    d.randomization = kind;
    for (const auto& row : d.cell_sizes) {
        int first = -1, last = -1;
        for (int s = 0; s < static_cast<int>(row.size()); ++s) {
            if (row[s] > 0) {
                if (first < 0) first = s;
                last = s;
            }
        }
        d.entry_period.push_back(first);
        d.exit_period.push_back(last);
    }
    return d;
}

/// Two-period trial: control and arm 1 with 125 patients per period, arm 2
/// joining in period 2 with 250 patients; blocks of 4 and 12.
inline TrialDesign canonical_design() {
    return make_design({{125, 125}, {125, 125}, {0, 250}}, {4, 12});
}

struct Violation {
    std::string code;
    std::string message;
};

/// Integer per-arm counts of one permuted block in `period`, or an empty
/// vector when the block length cannot be split in the allocation ratio.
inline std::vector<int> block_quota(const TrialDesign& design, int period) {
    const int block = design.block_sizes.at(period);
    const int n = design.period_size(period);
    std::vector<int> quota(design.num_arms(), 0);
    if (block <= 0 || n <= 0) return {};
    int sum = 0;
    for (int k = 0; k < design.num_arms(); ++k) {
        const long long scaled =
            static_cast<long long>(block) * design.cell_sizes[k][period];
        if (scaled % n != 0) return {};
        quota[k] = static_cast<int>(scaled / n);
        sum += quota[k];
    }
    if (sum != block) return {};
    return quota;
}

inline std::vector<Violation> validate_design(const TrialDesign& design) {
    std::vector<Violation> out;
    auto add = [&](std::string code, std::string msg) {
        out.push_back({std::move(code), std::move(msg)});
    };
    const int arms = design.num_arms();
    if (arms < 2) add("too_few_arms", "need a control and at least one treatment");
    const int periods = design.num_periods();
    if (periods < 2) add("too_few_periods", "need at least two periods");
    for (int k = 0; k < arms; ++k) {
        if (static_cast<int>(design.cell_sizes[k].size()) != periods) {
            add("ragged_cell_sizes",
                "arm " + std::to_string(k) + " has the wrong number of periods");
            return out;
        }
        for (int s = 0; s < periods; ++s)
            if (design.cell_sizes[k][s] < 0)
                add("negative_cell_size", "arm " + std::to_string(k) +
                                              " period " + std::to_string(s + 1));
    }
    if (static_cast<int>(design.entry_period.size()) != arms ||
        static_cast<int>(design.exit_period.size()) != arms) {
        add("entry_exit_size", "entry/exit periods must have one entry per arm");
    } else {
        for (int k = 0; k < arms; ++k) {
            const std::string arm = "arm " + std::to_string(k);
            const int entry = design.entry_period[k];
            const int exit = design.exit_period[k];
            if (entry < 0 || exit >= periods || entry > exit) {
                add("bad_entry_exit", arm + " has an invalid entry/exit window");
                continue;
            }
            for (int s = 0; s < periods; ++s) {
                const int n = design.cell_sizes[k][s];
                if (s < entry && n > 0)
                    add("arm_present_before_entry",
                        arm + " has patients in period " + std::to_string(s + 1) +
                            " before its entry");
                else if (s > exit && n > 0)
                    add("arm_present_after_exit",
                        arm + " has patients in period " + std::to_string(s + 1) +
                            " after its exit");
                else if (s >= entry && s <= exit && n == 0)
                    add("arm_absent_while_open",
                        arm + " is open in period " + std::to_string(s + 1) +
                            " but has no patients");
            }
        }
    }
    for (int s = 0; s < periods; ++s)
        if (design.period_size(s) == 0)
            add("empty_period", "period " + std::to_string(s + 1) + " has no patients");
    if (static_cast<int>(design.block_sizes.size()) != periods) {
        add("block_sizes_length", "need one block size per period");
    } else {
        for (int s = 0; s < periods; ++s) {
            if (design.block_sizes[s] <= 0) {
                add("nonpositive_block",
                    "block size of period " + std::to_string(s + 1) + " must be positive");
            } else if (design.randomization == RandomizationKind::permuted_block &&
                       design.period_size(s) > 0 && block_quota(design, s).empty()) {
                add("block_quota_not_integer",
                    "block size of period " + std::to_string(s + 1) +
                        " does not split into integer per-arm quotas");
            }
        }
    }
    return out;
}

struct Scenario {
    Endpoint endpoint = Endpoint::continuous;
    /// Control response on the model scale (mean or log-odds).
    double eta0 = 0.0;
    /// Effect per arm on the model scale; theta[0] is the control and is 0.
    std::vector<double> theta;
    double sigma = 1.0;
    TrendPattern pattern = TrendPattern::step;
    /// Trend strength per arm on the model scale.
    std::vector<double> lambda;
    /// Inverse-U turning point (patient index); 0 selects N1 + N2/2.
    int peak_index = 0;
    EntryTimeMode entry_time_mode = EntryTimeMode::deterministic;
};

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double inverse_link(Endpoint endpoint, double eta) {
    return endpoint == Endpoint::binary ? inv_logit(eta) : eta;
}

inline double link(Endpoint endpoint, double mean) {
    return endpoint == Endpoint::binary ? logit(mean) : mean;
}

/// Trend-shape constants that depend only on the design.
struct TrendFrame {
    int total = 0;         // N
    int first_period = 0;  // N1
    int peak = 0;          // N_p
};

inline TrendFrame trend_frame(const Scenario& scenario, const TrialDesign& design) {
    TrendFrame f;
    f.total = design.total_size();
    f.first_period = design.period_size(0);
    const int rest = f.total - f.first_period;
    f.peak = scenario.peak_index > 0 ? scenario.peak_index
                                     : f.first_period + rest / 2;
    return f;
}

/// Model-scale time trend at entry time t (t = j under deterministic entry).
/// The inverse-U form flips the sign of the linear ramp after the peak.
inline double time_trend_value(TrendPattern pattern, double lambda, double t,
                               int total, int first_period, int peak) {
    if (total <= 1) throw std::invalid_argument("trend needs N > 1");
    const double ramp = lambda * (t - 1.0) / (total - 1.0);
    switch (pattern) {
        case TrendPattern::linear:
            return ramp;
        case TrendPattern::step:
            return t > first_period ? lambda : 0.0;
        case TrendPattern::inverse_u:
            return t <= peak ? ramp : -ramp;
    }
    return 0.0;
}

inline std::vector<Violation> validate_scenario(const Scenario& scenario,
                                                const TrialDesign& design) {
    std::vector<Violation> out;
    const auto arms = static_cast<std::size_t>(design.num_arms());
    if (scenario.theta.size() != arms)
        out.push_back({"theta_size", "theta needs one entry per arm"});
    else if (scenario.theta[0] != 0.0)
        out.push_back({"control_effect_nonzero", "theta[0] must be 0"});
    if (scenario.lambda.size() != arms)
        out.push_back({"lambda_size", "lambda needs one entry per arm"});
    if (scenario.endpoint == Endpoint::continuous && !(scenario.sigma > 0.0))
        out.push_back({"nonpositive_sigma", "sigma must be positive"});
    const int n = design.total_size();
    if (scenario.peak_index < 0 || scenario.peak_index > n)
        out.push_back({"peak_out_of_range", "peak_index must lie in [1, N]"});
    if (n <= 1) out.push_back({"trial_too_small", "need N > 1"});
    return out;
}

/// Expected response of `arm` for patient j on the natural scale.
inline double true_mean(const Scenario& scenario, const TrialDesign& design,
                        int arm, int j) {
    if (arm < 0 || arm >= design.num_arms() ||
        arm >= static_cast<int>(scenario.theta.size()) ||
        arm >= static_cast<int>(scenario.lambda.size()))
        throw std::out_of_range("arm index out of range");
    const TrendFrame f = trend_frame(scenario, design);
    if (j < 1 || j > f.total) throw std::out_of_range("patient index out of range");
    const double eta = scenario.eta0 + scenario.theta[arm] +
                       time_trend_value(scenario.pattern, scenario.lambda[arm], j,
                                        f.total, f.first_period, f.peak);
    return inverse_link(scenario.endpoint, eta);
}

inline const char* to_string(Endpoint e) {
    return e == Endpoint::binary ? "binary" : "continuous";
}

inline const char* to_string(TrendPattern p) {
    switch (p) {
        case TrendPattern::linear: return "linear";
        case TrendPattern::step: return "step";
        case TrendPattern::inverse_u: return "inverse_u";
    }
    return "?";
}

}  // namespace ncc
