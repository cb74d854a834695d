#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "ncc/datagen.hpp"

namespace ncc {

enum class ModelKind {
    alltc_step,
    alltci_step,
    tc_step,
    alltc_linear,
    alltci_linear,
    tc_linear,
    pooled,
    separate,
};

enum class VarianceMode { homoscedastic, per_period };

struct AnalysisModel {
    ModelKind kind = ModelKind::alltc_step;
    VarianceMode variance_mode = VarianceMode::homoscedastic;
    int tested_arm = 2;
};

inline bool has_period_factor(ModelKind kind) {
    return kind == ModelKind::alltc_step || kind == ModelKind::alltci_step ||
           kind == ModelKind::tc_step;
}

inline const char* to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::alltc_step: return "alltc_step";
        case ModelKind::alltci_step: return "alltci_step";
        case ModelKind::tc_step: return "tc_step";
        case ModelKind::alltc_linear: return "alltc_linear";
        case ModelKind::alltci_linear: return "alltci_linear";
        case ModelKind::tc_linear: return "tc_linear";
        case ModelKind::pooled: return "pooled";
        case ModelKind::separate: return "separate";
    }
    return "?";
}

inline const char* to_string(VarianceMode mode) {
    return mode == VarianceMode::per_period ? "per_period" : "homoscedastic";
}

struct DesignMatrix {
    Eigen::VectorXd response;
    Eigen::MatrixXd predictors;
    std::vector<std::string> columns;
    /// Dataset rows used, and their period and arm.
    std::vector<int> rows;
    std::vector<int> row_period;
    std::vector<int> row_arm;
    /// Column holding the tested arm's effect.
    int tested_column = -1;
};

inline DesignMatrix build_design_matrix(const TrialDataset& data,
                                        const AnalysisModel& model) {
    const int tested = model.tested_arm;
    if (tested <= 0 || tested >= data.num_arms)
        throw std::invalid_argument("tested arm out of range");

    std::set<int> tested_periods;
    for (const auto& r : data.records)
        if (r.arm == tested) tested_periods.insert(r.period);

    const ModelKind kind = model.kind;
    const bool all_arms = kind == ModelKind::alltc_step ||
                          kind == ModelKind::alltci_step ||
                          kind == ModelKind::alltc_linear ||
                          kind == ModelKind::alltci_linear;
    const bool step = has_period_factor(kind);
    const bool linear = kind == ModelKind::alltc_linear ||
                        kind == ModelKind::alltci_linear ||
                        kind == ModelKind::tc_linear;
    const bool interaction =
        kind == ModelKind::alltci_step || kind == ModelKind::alltci_linear;

    DesignMatrix dm;
    for (int i = 0; i < static_cast<int>(data.records.size()); ++i) {
        const auto& r = data.records[i];
        bool keep = all_arms || r.arm == 0 || r.arm == tested;
        if (kind == ModelKind::separate)
            keep = (r.arm == 0 && tested_periods.count(r.period)) || r.arm == tested;
        if (!keep) continue;
        dm.rows.push_back(i);
        dm.row_period.push_back(r.period);
        dm.row_arm.push_back(r.arm);
    }

    // Candidate columns; all-zero ones are dropped so absent cells (an arm
    // that never meets a period) do not make the design singular.
    enum class Term { intercept, arm, period, time, arm_period, arm_time };
    struct Column {
        std::string name;
        Term term;
        int arm = 0;
        int period = 0;
    };
    std::vector<Column> candidates{{"intercept", Term::intercept}};
    const std::string tested_name = "arm" + std::to_string(tested);
    for (int k = 1; k < data.num_arms; ++k)
        if (all_arms || k == tested)
            candidates.push_back({"arm" + std::to_string(k), Term::arm, k});
    if (step)
        for (int s = 1; s < data.num_periods; ++s)
            candidates.push_back({"period" + std::to_string(s + 1), Term::period, 0, s});
    if (linear) candidates.push_back({"j", Term::time});
    if (interaction) {
        for (int k = 1; k < data.num_arms; ++k) {
            if (k == tested) continue;
            const std::string arm = "arm" + std::to_string(k);
            if (step) {
                for (int s = 1; s < data.num_periods; ++s)
                    candidates.push_back(
                        {arm + ":period" + std::to_string(s + 1), Term::arm_period, k, s});
            } else {
                candidates.push_back({arm + ":j", Term::arm_time, k});
            }
        }
    }
    auto value = [](const Column& c, const PatientRecord& r) {
        switch (c.term) {
            case Term::intercept: return 1.0;
            case Term::arm: return r.arm == c.arm ? 1.0 : 0.0;
            case Term::period: return r.period == c.period ? 1.0 : 0.0;
            case Term::time: return static_cast<double>(r.index);
            case Term::arm_period: return r.arm == c.arm && r.period == c.period ? 1.0 : 0.0;
            case Term::arm_time: return r.arm == c.arm ? static_cast<double>(r.index) : 0.0;
        }
        return 0.0;
    };

    const auto n = static_cast<Eigen::Index>(dm.rows.size());
    dm.response.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) dm.response[i] = data.records[dm.rows[i]].y;

    std::vector<const Column*> kept;
    for (const auto& c : candidates) {
        bool nonzero = false;
        for (Eigen::Index i = 0; i < n && !nonzero; ++i)
            nonzero = value(c, data.records[dm.rows[i]]) != 0.0;
        if (!nonzero) continue;
        if (c.name == tested_name) dm.tested_column = static_cast<int>(kept.size());
        dm.columns.push_back(c.name);
        kept.push_back(&c);
    }
    dm.predictors.resize(n, static_cast<Eigen::Index>(kept.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        const PatientRecord& r = data.records[dm.rows[i]];
        for (std::size_t c = 0; c < kept.size(); ++c)
            dm.predictors(i, static_cast<Eigen::Index>(c)) = value(*kept[c], r);
    }
    return dm;
}

enum Diagnostic : unsigned {
    diag_none = 0,
    diag_separation_suspected = 1u << 0,
    diag_singular_design = 1u << 1,
    diag_degenerate_variance = 1u << 2,
};

struct FitResult {
    std::vector<std::string> names;
    std::vector<double> estimates;
    std::vector<double> std_errors;
    int tested_index = -1;
    double one_sided_p = 1.0;
    /// Residual degrees of freedom of the t reference; infinity for Wald tests.
    double df = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
    unsigned diagnostics = diag_none;

    double estimate() const {
        return tested_index >= 0 ? estimates[tested_index]
                                 : std::numeric_limits<double>::quiet_NaN();
    }
    double std_error() const {
        return tested_index >= 0 ? std_errors[tested_index]
                                 : std::numeric_limits<double>::quiet_NaN();
    }
    bool has(Diagnostic d) const { return (diagnostics & d) != 0; }
};

inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

inline double t_upper_tail(double t, double df) {
    if (std::isinf(df)) return normal_upper_tail(t);
    const boost::math::students_t dist(df);
    return boost::math::cdf(boost::math::complement(dist, t));
}

namespace detail {

/// Column-pivoted QR with the rank tolerance taken relative to the largest
/// pivot (the largest column norm after pivoting).
inline Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted_qr(const Eigen::MatrixXd& x) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x.rows(), x.cols());
    qr.setThreshold(1e-10);
    qr.compute(x);
    return qr;
}

/// (X'X)^-1 from the R factor: P R^-1 R^-T P^T.
inline Eigen::MatrixXd unscaled_covariance(
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
    const Eigen::Index p = qr.cols();
    const Eigen::MatrixXd r =
        qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(
        Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd inner = r_inv * r_inv.transpose();
    return qr.colsPermutation() * inner * qr.colsPermutation().transpose();
}

inline FitResult singular_fit(const DesignMatrix& dm) {
    FitResult f;
    f.names = dm.columns;
    f.tested_index = dm.tested_column;
    const auto p = dm.columns.size();
    f.estimates.assign(p, std::numeric_limits<double>::quiet_NaN());
    f.std_errors.assign(p, std::numeric_limits<double>::quiet_NaN());
    f.diagnostics = diag_singular_design;
    return f;
}

}  // namespace detail

/// Ordinary least squares with a one-sided t test of the tested column.
/// Per-period mode replaces the pooled residual variance by one variance per
/// period and uses Welch-Satterthwaite degrees of freedom for the contrast.
inline FitResult fit_linear(const DesignMatrix& dm,
                            VarianceMode mode = VarianceMode::homoscedastic) {
    const Eigen::MatrixXd& x = dm.predictors;
    const Eigen::VectorXd& y = dm.response;
    const Eigen::Index n = x.rows(), p = x.cols();
    if (p == 0 || n <= p || dm.tested_column < 0) return detail::singular_fit(dm);
    const auto qr = detail::pivoted_qr(x);
    if (qr.rank() < p) return detail::singular_fit(dm);

    FitResult f;
    f.names = dm.columns;
    f.tested_index = dm.tested_column;
    f.iterations = 1;
    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd resid = y - x * beta;
    const Eigen::MatrixXd xtx_inv = detail::unscaled_covariance(qr);
    f.estimates.assign(beta.data(), beta.data() + p);
    f.std_errors.resize(p);

    const int t = dm.tested_column;
    double var_t = 0.0;
    if (mode == VarianceMode::homoscedastic) {
        f.df = static_cast<double>(n - p);
        const double sigma2 = resid.squaredNorm() / f.df;
        for (Eigen::Index c = 0; c < p; ++c)
            f.std_errors[c] = std::sqrt(sigma2 * xtx_inv(c, c));
        var_t = sigma2 * xtx_inv(t, t);
    } else {
        // Var(beta) = (X'X)^-1 X' diag(sigma2_s) X (X'X)^-1, with sigma2_s
        // from the residuals of period s on n_s minus its cell count df.
        const int periods = *std::max_element(dm.row_period.begin(), dm.row_period.end()) + 1;
        std::vector<double> rss(periods, 0.0);
        std::vector<int> count(periods, 0);
        std::vector<std::set<int>> arms(periods);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int s = dm.row_period[i];
            rss[s] += resid[i] * resid[i];
            ++count[s];
            arms[s].insert(dm.row_arm[i]);
        }
        std::vector<double> sigma2(periods, 0.0), dof(periods, 0.0);
        for (int s = 0; s < periods; ++s) {
            if (count[s] == 0) continue;
            dof[s] = count[s] - static_cast<double>(arms[s].size());
            if (dof[s] <= 0) return detail::singular_fit(dm);
            sigma2[s] = rss[s] / dof[s];
        }
        const Eigen::MatrixXd a = x * xtx_inv;  // n x p
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) w[i] = sigma2[dm.row_period[i]];
        const Eigen::MatrixXd cov = a.transpose() * w.asDiagonal() * a;
        for (Eigen::Index c = 0; c < p; ++c) f.std_errors[c] = std::sqrt(cov(c, c));
        var_t = cov(t, t);
        std::vector<double> part(periods, 0.0);
        for (Eigen::Index i = 0; i < n; ++i)
            part[dm.row_period[i]] += sigma2[dm.row_period[i]] * a(i, t) * a(i, t);
        double denom = 0.0;
        for (int s = 0; s < periods; ++s)
            if (dof[s] > 0) denom += part[s] * part[s] / dof[s];
        f.df = denom > 0.0 ? var_t * var_t / denom : 0.0;
    }

    // Residuals at rounding level mean the response is an exact linear fit.
    const bool exact = resid.norm() <= 1e-12 * std::max(1.0, y.norm());
    if (exact || !(var_t > 0.0) || !(f.df > 0.0)) {
        f.diagnostics |= diag_degenerate_variance;
        f.converged = false;
        f.one_sided_p = 1.0;
        return f;
    }
    f.converged = true;
    f.one_sided_p = t_upper_tail(beta[t] / std::sqrt(var_t), f.df);
    return f;
}

struct LogisticOptions {
    int max_iterations = 25;
    double tolerance = 1e-8;
    double separation_eps = 1e-10;
};

/// Logistic regression by iteratively reweighted least squares with a Wald
/// one-sided test of the tested column.
inline FitResult fit_logistic(const DesignMatrix& dm, const LogisticOptions& opt = {}) {
    const Eigen::MatrixXd& x = dm.predictors;
    const Eigen::VectorXd& y = dm.response;
    const Eigen::Index n = x.rows(), p = x.cols();
    if (p == 0 || n <= p || dm.tested_column < 0) return detail::singular_fit(dm);

    FitResult f;
    f.names = dm.columns;
    f.tested_index = dm.tested_column;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd mu(n), w(n), sqrt_w(n), z(n);
    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        for (Eigen::Index i = 0; i < n; ++i) {
            mu[i] = inv_logit(eta[i]);
            w[i] = std::max(mu[i] * (1.0 - mu[i]), std::numeric_limits<double>::min());
            sqrt_w[i] = std::sqrt(w[i]);
            z[i] = sqrt_w[i] * (eta[i] + (y[i] - mu[i]) / w[i]);
        }
        const auto qr = detail::pivoted_qr(sqrt_w.asDiagonal() * x);
        f.iterations = iter;
        if (qr.rank() < p) {
            f.diagnostics |= diag_singular_design;
            break;
        }
        const Eigen::VectorXd next = qr.solve(z);
        const double change = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        eta = x * beta;
        if (change < opt.tolerance) {
            f.converged = true;
            break;
        }
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        mu[i] = inv_logit(eta[i]);
        if (mu[i] < opt.separation_eps || mu[i] > 1.0 - opt.separation_eps)
            f.diagnostics |= diag_separation_suspected;
        w[i] = mu[i] * (1.0 - mu[i]);
    }
    f.estimates.assign(beta.data(), beta.data() + p);
    f.std_errors.assign(p, std::numeric_limits<double>::quiet_NaN());
    if (f.has(diag_singular_design)) {
        f.converged = false;
        return f;
    }
    const auto qr = detail::pivoted_qr(w.cwiseSqrt().asDiagonal() * x);
    if (qr.rank() < p) {
        f.diagnostics |= diag_singular_design;
        f.converged = false;
        return f;
    }
    const Eigen::MatrixXd cov = detail::unscaled_covariance(qr);
    for (Eigen::Index c = 0; c < p; ++c) f.std_errors[c] = std::sqrt(cov(c, c));
    if (!f.converged) return f;
    const int t = dm.tested_column;
    f.one_sided_p = normal_upper_tail(beta[t] / f.std_errors[t]);
    return f;
}

/// Score vector X'(y - p) at the fitted coefficients.
inline Eigen::VectorXd logistic_score(const DesignMatrix& dm, const FitResult& fit) {
    const Eigen::Map<const Eigen::VectorXd> beta(fit.estimates.data(),
                                                 static_cast<Eigen::Index>(fit.estimates.size()));
    const Eigen::VectorXd eta = dm.predictors * beta;
    Eigen::VectorXd r(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) r[i] = dm.response[i] - inv_logit(eta[i]);
    return dm.predictors.transpose() * r;
}

/// Weights of the step model's tested-arm estimate on the six cell means of a
/// two-period trial: rows arm 0..2, columns period 1..2.
struct WeightMatrix {
    std::array<std::array<double, 2>, 3> w{};
    double rho = 0.0;

    double operator()(int arm, int period) const { return w.at(arm).at(period); }
};

inline WeightMatrix ncc_weights(int n01, int n02, int n11, int n12) {
    if (n01 < 1 || n02 < 1 || n11 < 1 || n12 < 1)
        throw std::invalid_argument("cell counts must be positive");
    const double rho =
        (1.0 / n02) / (1.0 / n01 + 1.0 / n02 + 1.0 / n11 + 1.0 / n12);
    WeightMatrix m;
    m.rho = rho;
    m.w[0] = {-rho, rho - 1.0};
    m.w[1] = {rho, -rho};
    m.w[2] = {0.0, 1.0};
    return m;
}

inline WeightMatrix ncc_weights(const CellStats& cells) {
    return ncc_weights(cells.n(0, 0), cells.n(0, 1), cells.n(1, 0), cells.n(1, 1));
}

/// Model-based period-2 control response: the concurrent control mean shrunk
/// towards the period-1 control mean shifted by arm 1's period change.
inline double estimate_control_response(const CellStats& cells) {
    if (cells.count.size() < 2 || cells.count[0].size() < 2)
        throw std::invalid_argument("need two arms and two periods");
    for (int k = 0; k < 2; ++k)
        for (int s = 0; s < 2; ++s)
            if (cells.n(k, s) == 0) throw std::invalid_argument("empty cell");
    const double rho = ncc_weights(cells).rho;
    return (1.0 - rho) * cells.y(0, 1) +
           rho * (cells.y(0, 0) + (cells.y(1, 1) - cells.y(1, 0)));
}

inline double estimate_control_response(const TrialDataset& data) {
    return estimate_control_response(cell_stats(data));
}

struct TestOutcome {
    bool reject = false;
    /// Fit failed to produce a usable test (non-convergence, singularity).
    bool failed = false;
    FitResult fit;
};

/// One-sided test of H0: theta_tested <= 0 at level alpha.
inline TestOutcome test_theta2(const TrialDataset& data, const AnalysisModel& model,
                               double alpha) {
    if (model.variance_mode == VarianceMode::per_period &&
        (data.endpoint != Endpoint::continuous || !has_period_factor(model.kind)))
        throw std::invalid_argument(
            "per-period variance needs a continuous endpoint and a period factor");
    const DesignMatrix dm = build_design_matrix(data, model);
    TestOutcome out;
    out.fit = data.endpoint == Endpoint::continuous ? fit_linear(dm, model.variance_mode)
                                                    : fit_logistic(dm);
    out.failed = !out.fit.converged;
    out.reject = !out.failed && out.fit.one_sided_p < alpha;
    return out;
}

}  // namespace ncc
