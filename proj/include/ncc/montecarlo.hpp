#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <regex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ncc/datagen.hpp"
#include "ncc/design.hpp"
#include "ncc/inference.hpp"
#include "ncc/rng.hpp"

namespace ncc {

enum class Hypothesis { h0, h1 };

inline const char* to_string(Hypothesis h) { return h == Hypothesis::h0 ? "H0" : "H1"; }

/// Symbolic arm-1 period-2 response values at which the arm's trend equals
/// the control trend on the odds-ratio, risk-difference or risk-ratio scale.
enum class Marker { none, or_equal, rd_equal, rr_equal };

struct AxisValue {
    double value = 0.0;
    Marker marker = Marker::none;
};

/// A swept scenario parameter. Recognised names: `lambda` (every arm),
/// `lambda<k>`, `theta<k>`, `odds_ratio<k>`, `x_arm<k>_period2`,
/// `peak_index` and `sigma`.
struct Axis {
    std::string parameter;
    std::vector<AxisValue> values;
};

struct ScenarioGrid {
    TrialDesign design;
    /// Effects as under the alternative; H0 zeroes the tested arm's effect.
    Scenario base;
    std::vector<TrendPattern> patterns;    // empty: base pattern only
    std::vector<Hypothesis> hypotheses;    // empty: base effects as given
    std::vector<Axis> axes;
    std::vector<AnalysisModel> models;
    int replicates = 10000;
    std::uint64_t seed = 1;
    double alpha = 0.025;
    /// Offset added to scenario ids, so several grids can share one table.
    int id_offset = 0;
};

struct GridPoint {
    int id = 0;
    Scenario scenario;
    Hypothesis hypothesis = Hypothesis::h0;
    double theta_true = 0.0;
};

namespace detail {

inline bool parse_indexed(const std::string& name, const std::string& prefix,
                          const std::string& suffix, int& index) {
    const std::regex re("^" + prefix + "([0-9]+)" + suffix + "$");
    std::smatch m;
    if (!std::regex_match(name, m, re)) return false;
    index = std::stoi(m[1].str());
    return true;
}

inline bool is_response_axis(const std::string& name) {
    int k;
    return parse_indexed(name, "x_arm", "_period2", k);
}

inline void check_arm(int k, const Scenario& s, const std::string& name) {
    if (k < 0 || k >= static_cast<int>(s.lambda.size()) ||
        k >= static_cast<int>(s.theta.size()))
        throw std::invalid_argument("axis '" + name + "' names an arm out of range");
}

inline double resolve_marker(const Scenario& s, int arm, Marker marker) {
    const double p01 = inverse_link(s.endpoint, s.eta0);
    const double p02 = inverse_link(s.endpoint, s.eta0 + s.lambda[0]);
    const double pk1 = inverse_link(s.endpoint, s.eta0 + s.theta[arm]);
    switch (marker) {
        case Marker::or_equal:
            return inverse_link(s.endpoint, s.eta0 + s.theta[arm] + s.lambda[0]);
        case Marker::rd_equal: return pk1 + (p02 - p01);
        case Marker::rr_equal: return pk1 * p02 / p01;
        case Marker::none: break;
    }
    throw std::logic_error("unresolved marker");
}

}  // namespace detail

inline void apply_axis(Scenario& s, const std::string& name, const AxisValue& v) {
    int k = 0;
    if (v.marker != Marker::none && !detail::is_response_axis(name))
        throw std::invalid_argument("markers are only valid for x_arm<k>_period2 axes");
    if (name == "lambda") {
        std::fill(s.lambda.begin(), s.lambda.end(), v.value);
    } else if (detail::parse_indexed(name, "lambda", "", k)) {
        detail::check_arm(k, s, name);
        s.lambda[k] = v.value;
    } else if (detail::parse_indexed(name, "theta", "", k)) {
        detail::check_arm(k, s, name);
        s.theta[k] = v.value;
    } else if (detail::parse_indexed(name, "odds_ratio", "", k)) {
        detail::check_arm(k, s, name);
        if (!(v.value > 0.0)) throw std::invalid_argument("odds ratios must be > 0");
        s.theta[k] = std::log(v.value);
    } else if (detail::parse_indexed(name, "x_arm", "_period2", k)) {
        detail::check_arm(k, s, name);
        const double x =
            v.marker == Marker::none ? v.value : detail::resolve_marker(s, k, v.marker);
        if (s.endpoint == Endpoint::binary && !(x > 0.0 && x < 1.0))
            throw std::invalid_argument("response rate must lie in (0, 1)");
        s.lambda[k] = link(s.endpoint, x) - s.eta0 - s.theta[k];
    } else if (name == "peak_index") {
        s.peak_index = static_cast<int>(v.value);
    } else if (name == "sigma") {
        s.sigma = v.value;
    } else {
        throw std::invalid_argument("unknown axis parameter '" + name + "'");
    }
}

inline int tested_arm_of(const ScenarioGrid& grid) {
    return grid.models.empty() ? 2 : grid.models.front().tested_arm;
}

/// Cartesian product over patterns, hypotheses and axes (last axis fastest).
/// Response axes are applied after all other axes of a point.
inline std::vector<GridPoint> expand_grid(const ScenarioGrid& grid) {
    const int tested = tested_arm_of(grid);
    std::vector<TrendPattern> patterns = grid.patterns;
    if (patterns.empty()) patterns.push_back(grid.base.pattern);
    std::vector<std::pair<bool, Hypothesis>> hyps;
    if (grid.hypotheses.empty())
        hyps.push_back({false, Hypothesis::h0});
    else
        for (Hypothesis h : grid.hypotheses) hyps.push_back({true, h});

    std::size_t combos = 1;
    for (const auto& axis : grid.axes) {
        if (axis.values.empty())
            throw std::invalid_argument("axis '" + axis.parameter + "' has no values");
        combos *= axis.values.size();
    }

    std::vector<GridPoint> out;
    for (TrendPattern pattern : patterns) {
        for (const auto& [explicit_h, h] : hyps) {
            for (std::size_t c = 0; c < combos; ++c) {
                GridPoint pt;
                pt.id = grid.id_offset + static_cast<int>(out.size());
                Scenario s = grid.base;
                s.pattern = pattern;
                if (tested >= static_cast<int>(s.theta.size()))
                    throw std::invalid_argument("tested arm out of range");
                if (explicit_h && h == Hypothesis::h0) s.theta[tested] = 0.0;

                std::vector<std::size_t> pick(grid.axes.size());
                std::size_t rem = c;
                for (std::size_t a = grid.axes.size(); a-- > 0;) {
                    pick[a] = rem % grid.axes[a].values.size();
                    rem /= grid.axes[a].values.size();
                }
                for (int pass = 0; pass < 2; ++pass) {
                    for (std::size_t a = 0; a < grid.axes.size(); ++a) {
                        const bool response = detail::is_response_axis(grid.axes[a].parameter);
                        if (response != (pass == 1)) continue;
                        apply_axis(s, grid.axes[a].parameter, grid.axes[a].values[pick[a]]);
                    }
                }
                pt.scenario = s;
                pt.theta_true = s.theta[tested];
                pt.hypothesis = explicit_h ? h
                                           : (pt.theta_true > 0.0 ? Hypothesis::h1
                                                                  : Hypothesis::h0);
                out.push_back(std::move(pt));
            }
        }
    }
    return out;
}

struct SummaryStats {
    int n_reps = 0;
    double reject_rate = 0.0;
    double mc_se = 0.0;
    double mean_estimate = 0.0;
    double bias = 0.0;
    double rmse = 0.0;
};

/// Rejection rate over every replicate; bias and RMSE over the finite
/// estimates (failed fits carry NaN).
inline SummaryStats summarize(std::span<const double> estimates,
                              std::span<const std::uint8_t> rejections,
                              double theta_true) {
    if (rejections.empty()) throw std::invalid_argument("summarize needs replicates");
    SummaryStats s;
    s.n_reps = static_cast<int>(rejections.size());
    double hits = 0.0;
    for (auto r : rejections) hits += r ? 1.0 : 0.0;
    s.reject_rate = hits / s.n_reps;
    s.mc_se = std::sqrt(s.reject_rate * (1.0 - s.reject_rate) / s.n_reps);

    double sum = 0.0, sq = 0.0;
    int used = 0;
    for (double e : estimates) {
        if (!std::isfinite(e)) continue;
        sum += e;
        sq += (e - theta_true) * (e - theta_true);
        ++used;
    }
    if (used == 0) {
        s.mean_estimate = s.bias = s.rmse = std::numeric_limits<double>::quiet_NaN();
    } else {
        s.mean_estimate = sum / used;
        s.bias = s.mean_estimate - theta_true;
        s.rmse = std::sqrt(sq / used);
    }
    return s;
}

struct ModelSummary {
    AnalysisModel model;
    SummaryStats stats;
    int n_failures = 0;
};

struct ScenarioSummary {
    GridPoint point;
    std::vector<ModelSummary> models;
};

/// Per-replicate outputs of every model on one grid point.
struct ReplicateTable {
    std::vector<std::vector<double>> estimate;        // [model][rep]
    std::vector<std::vector<std::uint8_t>> reject;    // [model][rep]
    std::vector<std::vector<std::uint8_t>> failed;    // [model][rep]
};

/// Runs every grid point for `replicates` replicates. Each replicate draws
/// one dataset from its derived seed and applies every model to it. Work is
/// shared by `workers` threads; results are stored per replicate index and
/// reduced in index order, so output does not depend on the worker count.
inline std::vector<ScenarioSummary> run_grid(const ScenarioGrid& grid, int workers) {
    if (grid.replicates < 1) throw std::invalid_argument("replicates must be >= 1");
    if (grid.models.empty()) throw std::invalid_argument("grid has no analysis models");
    const std::vector<GridPoint> points = expand_grid(grid);
    if (const auto v = validate_design(grid.design); !v.empty())
        throw std::invalid_argument("invalid design: " + v.front().code);
    for (const auto& pt : points)
        if (const auto v = validate_scenario(pt.scenario, grid.design); !v.empty())
            throw std::invalid_argument("invalid scenario " + std::to_string(pt.id) +
                                        ": " + v.front().code);
    const std::size_t m = grid.models.size();
    const auto reps = static_cast<std::size_t>(grid.replicates);

    std::vector<ReplicateTable> tables(points.size());
    for (auto& t : tables) {
        t.estimate.assign(m, std::vector<double>(reps));
        t.reject.assign(m, std::vector<std::uint8_t>(reps));
        t.failed.assign(m, std::vector<std::uint8_t>(reps));
    }

    const std::size_t total = points.size() * reps;
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::atomic<bool> stop{false};
    auto work = [&]() {
        try {
            for (std::size_t task = next++; task < total && !stop; task = next++) {
                const std::size_t p = task / reps, r = task % reps;
                const GridPoint& pt = points[p];
                const std::uint64_t seed =
                    rng::derive_seed(grid.seed, static_cast<std::uint64_t>(pt.id), r);
                const TrialDataset data = generate_trial(pt.scenario, grid.design, seed);
                for (std::size_t i = 0; i < m; ++i) {
                    const TestOutcome t = test_theta2(data, grid.models[i], grid.alpha);
                    tables[p].estimate[i][r] = t.failed
                                                   ? std::numeric_limits<double>::quiet_NaN()
                                                   : t.fit.estimate();
                    tables[p].reject[i][r] = t.reject;
                    tables[p].failed[i][r] = t.failed;
                }
            }
        } catch (...) {
            stop = true;
            const std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    };
    const int n_threads = std::max(1, workers);
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_threads; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);

    std::vector<ScenarioSummary> out;
    for (std::size_t p = 0; p < points.size(); ++p) {
        ScenarioSummary s;
        s.point = points[p];
        for (std::size_t i = 0; i < m; ++i) {
            ModelSummary ms;
            ms.model = grid.models[i];
            ms.stats = summarize(tables[p].estimate[i], tables[p].reject[i],
                                 points[p].theta_true);
            for (auto f : tables[p].failed[i]) ms.n_failures += f;
            s.models.push_back(ms);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace ncc
