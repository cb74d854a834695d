#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncc/design.hpp"
#include "ncc/inference.hpp"
#include "ncc/montecarlo.hpp"

namespace ncc {

using json = nlohmann::json;

/// Configuration problem tied to one field of the document.
class ConfigError : public std::runtime_error {
   public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error("config field '" + field + "': " + what),
          field_(std::move(field)) {}
    const std::string& field() const { return field_; }

   private:
    std::string field_;
};

namespace config_detail {

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline std::string join(const std::string& path, std::size_t index) {
    return path + "[" + std::to_string(index) + "]";
}

inline const json& require(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.is_object()) throw ConfigError(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(join(path, key), "missing");
    return *it;
}

inline double number(const json& v, const std::string& field) {
    if (!v.is_number()) throw ConfigError(field, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(field, "expected a finite number");
    return x;
}

inline int integer(const json& v, const std::string& field) {
    if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
    return v.get<int>();
}

inline std::string string(const json& v, const std::string& field) {
    if (!v.is_string()) throw ConfigError(field, "expected a string");
    return v.get<std::string>();
}

inline const json& array(const json& v, const std::string& field) {
    if (!v.is_array()) throw ConfigError(field, "expected an array");
    return v;
}

inline std::vector<double> numbers(const json& v, const std::string& field) {
    std::vector<double> out;
    for (std::size_t i = 0; i < array(v, field).size(); ++i)
        out.push_back(number(v[i], join(field, i)));
    return out;
}

inline std::vector<int> integers(const json& v, const std::string& field) {
    std::vector<int> out;
    for (std::size_t i = 0; i < array(v, field).size(); ++i)
        out.push_back(integer(v[i], join(field, i)));
    return out;
}

template <class Enum>
Enum choice(const json& v, const std::string& field,
            std::initializer_list<std::pair<const char*, Enum>> options) {
    const std::string s = string(v, field);
    std::string allowed;
    for (const auto& [name, value] : options) {
        if (s == name) return value;
        allowed += allowed.empty() ? name : std::string(", ") + name;
    }
    throw ConfigError(field, "unknown value '" + s + "' (expected one of " + allowed + ")");
}

inline TrendPattern pattern(const json& v, const std::string& field) {
    return choice<TrendPattern>(v, field,
                                {{"linear", TrendPattern::linear},
                                 {"step", TrendPattern::step},
                                 {"inverse_u", TrendPattern::inverse_u}});
}

}  // namespace config_detail

inline TrialDesign parse_design(const json& j, const std::string& path = "design") {
    using namespace config_detail;
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    const std::string cells_field = join(path, "cell_sizes");
    const json& cells = array(require(j, path, "cell_sizes"), cells_field);
    std::vector<std::vector<int>> cell_sizes;
    for (std::size_t k = 0; k < cells.size(); ++k)
        cell_sizes.push_back(integers(cells[k], join(cells_field, k)));
    const auto blocks =
        integers(require(j, path, "block_sizes"), join(path, "block_sizes"));
    RandomizationKind kind = RandomizationKind::permuted_block;
    if (j.contains("randomization"))
        kind = choice<RandomizationKind>(j["randomization"], join(path, "randomization"),
                                         {{"permuted_block", RandomizationKind::permuted_block},
                                          {"simple", RandomizationKind::simple}});
    TrialDesign d = make_design(std::move(cell_sizes), blocks, kind);
    // Entry/exit periods are 1-based in files.
    for (const char* key : {"entry_period", "exit_period"}) {
        if (!j.contains(key)) continue;
        auto periods = integers(j[key], join(path, key));
        for (int& p : periods) p -= 1;
        (std::string(key) == "entry_period" ? d.entry_period : d.exit_period) = periods;
    }
    if (const auto v = validate_design(d); !v.empty())
        throw ConfigError(path, v.front().code + ": " + v.front().message);
    return d;
}

/// Binary scenarios may give `p0` and `odds_ratio` instead of `eta0` and
/// `theta`; they are converted to the log-odds scale here.
inline Scenario parse_scenario(const json& j, const std::string& path = "scenario") {
    using namespace config_detail;
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    Scenario s;
    s.endpoint = choice<Endpoint>(require(j, path, "endpoint"), join(path, "endpoint"),
                                  {{"continuous", Endpoint::continuous},
                                   {"binary", Endpoint::binary}});
    const bool natural = j.contains("p0") || j.contains("odds_ratio");
    if (natural) {
        if (s.endpoint != Endpoint::binary)
            throw ConfigError(join(path, "p0"), "p0/odds_ratio are for binary endpoints");
        if (j.contains("eta0") || j.contains("theta"))
            throw ConfigError(join(path, "p0"), "give either p0/odds_ratio or eta0/theta");
        const double p0 = number(require(j, path, "p0"), join(path, "p0"));
        if (!(p0 > 0.0 && p0 < 1.0)) throw ConfigError(join(path, "p0"), "must lie in (0, 1)");
        s.eta0 = logit(p0);
        const auto ors = numbers(require(j, path, "odds_ratio"), join(path, "odds_ratio"));
        for (std::size_t k = 0; k < ors.size(); ++k) {
            if (!(ors[k] > 0.0))
                throw ConfigError(join(join(path, "odds_ratio"), k), "must be > 0");
            s.theta.push_back(std::log(ors[k]));
        }
    } else {
        s.eta0 = number(require(j, path, "eta0"), join(path, "eta0"));
        s.theta = numbers(require(j, path, "theta"), join(path, "theta"));
    }
    if (j.contains("sigma")) s.sigma = number(j["sigma"], join(path, "sigma"));
    if (s.endpoint == Endpoint::continuous && !(s.sigma > 0.0))
        throw ConfigError(join(path, "sigma"), "must be > 0");
    s.pattern = pattern(require(j, path, "trend_pattern"), join(path, "trend_pattern"));
    s.lambda = numbers(require(j, path, "lambda"), join(path, "lambda"));
    if (j.contains("peak_index")) s.peak_index = integer(j["peak_index"], join(path, "peak_index"));
    if (j.contains("entry_time_mode"))
        s.entry_time_mode = choice<EntryTimeMode>(
            j["entry_time_mode"], join(path, "entry_time_mode"),
            {{"deterministic", EntryTimeMode::deterministic},
             {"random_uniform", EntryTimeMode::random_uniform}});
    return s;
}

inline AnalysisModel parse_model(const json& j, const std::string& field, int tested_arm) {
    using namespace config_detail;
    AnalysisModel m;
    m.tested_arm = tested_arm;
    const json& kind = j.is_object() ? require(j, field, "kind") : j;
    const std::string kind_field = j.is_object() ? join(field, "kind") : field;
    m.kind = choice<ModelKind>(kind, kind_field,
                               {{"alltc_step", ModelKind::alltc_step},
                                {"alltci_step", ModelKind::alltci_step},
                                {"tc_step", ModelKind::tc_step},
                                {"alltc_linear", ModelKind::alltc_linear},
                                {"alltci_linear", ModelKind::alltci_linear},
                                {"tc_linear", ModelKind::tc_linear},
                                {"pooled", ModelKind::pooled},
                                {"separate", ModelKind::separate}});
    if (j.is_object() && j.contains("variance_mode"))
        m.variance_mode = choice<VarianceMode>(
            j["variance_mode"], join(field, "variance_mode"),
            {{"homoscedastic", VarianceMode::homoscedastic},
             {"per_period", VarianceMode::per_period}});
    return m;
}

inline AxisValue parse_axis_value(const json& v, const std::string& field) {
    using namespace config_detail;
    if (v.is_string())
        return {0.0, choice<Marker>(v, field,
                                    {{"or_equal", Marker::or_equal},
                                     {"rd_equal", Marker::rd_equal},
                                     {"rr_equal", Marker::rr_equal}})};
    return {number(v, field), Marker::none};
}

/// One grid (no `panels` key) from a configuration object.
inline ScenarioGrid parse_grid(const json& j) {
    using namespace config_detail;
    if (!j.is_object()) throw ConfigError("", "configuration must be a JSON object");
    ScenarioGrid g;
    g.design = parse_design(require(j, "", "design"));
    g.base = parse_scenario(require(j, "", "scenario"));
    if (const auto v = validate_scenario(g.base, g.design); !v.empty())
        throw ConfigError("scenario", v.front().code + ": " + v.front().message);

    int tested = 2;
    if (j.contains("tested_arm")) tested = integer(j["tested_arm"], "tested_arm");
    if (tested < 1 || tested >= g.design.num_arms())
        throw ConfigError("tested_arm", "must name a treatment arm of the design");

    if (j.contains("patterns"))
        for (std::size_t i = 0; i < array(j["patterns"], "patterns").size(); ++i)
            g.patterns.push_back(pattern(j["patterns"][i], join("patterns", i)));
    if (j.contains("hypotheses"))
        for (std::size_t i = 0; i < array(j["hypotheses"], "hypotheses").size(); ++i)
            g.hypotheses.push_back(choice<Hypothesis>(j["hypotheses"][i],
                                                      join("hypotheses", i),
                                                      {{"H0", Hypothesis::h0},
                                                       {"H1", Hypothesis::h1}}));
    if (j.contains("axes")) {
        const json& axes = array(j["axes"], "axes");
        for (std::size_t a = 0; a < axes.size(); ++a) {
            const std::string field = join("axes", a);
            Axis axis;
            axis.parameter = string(require(axes[a], field, "parameter"), join(field, "parameter"));
            const std::string vfield = join(field, "values");
            const json& values = array(require(axes[a], field, "values"), vfield);
            if (values.empty()) throw ConfigError(vfield, "needs at least one value");
            for (std::size_t i = 0; i < values.size(); ++i)
                axis.values.push_back(parse_axis_value(values[i], join(vfield, i)));
            g.axes.push_back(std::move(axis));
        }
    }
    const json& models = array(require(j, "", "models"), "models");
    if (models.empty()) throw ConfigError("models", "needs at least one model");
    for (std::size_t i = 0; i < models.size(); ++i) {
        AnalysisModel m = parse_model(models[i], join("models", i), tested);
        if (m.variance_mode == VarianceMode::per_period &&
            (g.base.endpoint != Endpoint::continuous || !has_period_factor(m.kind)))
            throw ConfigError(join("models", i),
                              "per_period variance needs a continuous endpoint and a step model");
        g.models.push_back(m);
    }
    if (j.contains("replicates")) g.replicates = integer(j["replicates"], "replicates");
    if (g.replicates < 1) throw ConfigError("replicates", "must be >= 1");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError("seed", "expected a nonnegative integer");
        g.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("alpha")) g.alpha = number(j["alpha"], "alpha");
    if (!(g.alpha > 0.0 && g.alpha < 1.0)) throw ConfigError("alpha", "must lie in (0, 1)");

    // Expanding here surfaces bad axis names or values as config errors.
    try {
        for (const auto& pt : expand_grid(g))
            if (const auto v = validate_scenario(pt.scenario, g.design); !v.empty())
                throw ConfigError("axes", "grid point " + std::to_string(pt.id) + ": " +
                                              v.front().code);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("axes", e.what());
    }
    return g;
}

/// All grids of a configuration. A `panels` array holds JSON merge patches
/// applied to the rest of the document, one grid per panel; scenario ids run
/// on across panels.
inline std::vector<ScenarioGrid> parse_config(const json& j) {
    if (!j.is_object()) throw ConfigError("", "configuration must be a JSON object");
    std::vector<ScenarioGrid> grids;
    if (!j.contains("panels")) {
        grids.push_back(parse_grid(j));
        return grids;
    }
    const json& panels = config_detail::array(j["panels"], "panels");
    json base = j;
    base.erase("panels");
    int offset = 0;
    for (std::size_t p = 0; p < panels.size(); ++p) {
        json merged = base;
        merged.merge_patch(panels[p]);
        try {
            grids.push_back(parse_grid(merged));
        } catch (const ConfigError& e) {
            throw ConfigError(config_detail::join("panels", p) + ":" + e.field(), e.what());
        }
        grids.back().id_offset = offset;
        offset += static_cast<int>(expand_grid(grids.back()).size());
    }
    return grids;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config not found: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
}

inline std::string format_number(double x) {
    if (std::isnan(x)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

inline const char* summary_csv_header() {
    return "scenario_id,endpoint,pattern,lambda0,lambda1,lambda2,theta1,theta2,"
           "hypothesis,model,variance_mode,n_reps,reject_rate,mc_se,mean_est,bias,"
           "rmse,n_failures";
}

inline void write_summary_csv(std::ostream& out,
                              const std::vector<ScenarioSummary>& summaries,
                              bool header = true) {
    if (header) out << summary_csv_header() << '\n';
    for (const auto& s : summaries) {
        const Scenario& sc = s.point.scenario;
        auto at = [](const std::vector<double>& v, std::size_t k) {
            return k < v.size() ? format_number(v[k]) : std::string("NA");
        };
        for (const auto& m : s.models) {
            out << s.point.id << ',' << to_string(sc.endpoint) << ','
                << to_string(sc.pattern) << ',' << at(sc.lambda, 0) << ','
                << at(sc.lambda, 1) << ',' << at(sc.lambda, 2) << ','
                << at(sc.theta, 1) << ',' << at(sc.theta, 2) << ','
                << to_string(s.point.hypothesis) << ',' << to_string(m.model.kind) << ','
                << to_string(m.model.variance_mode) << ',' << m.stats.n_reps << ','
                << format_number(m.stats.reject_rate) << ','
                << format_number(m.stats.mc_se) << ','
                << format_number(m.stats.mean_estimate) << ','
                << format_number(m.stats.bias) << ',' << format_number(m.stats.rmse)
                << ',' << m.n_failures << '\n';
        }
    }
}

inline json to_json(const ScenarioSummary& s) {
    json j;
    const Scenario& sc = s.point.scenario;
    j["scenario_id"] = s.point.id;
    j["endpoint"] = to_string(sc.endpoint);
    j["pattern"] = to_string(sc.pattern);
    j["lambda"] = sc.lambda;
    j["theta"] = sc.theta;
    j["eta0"] = sc.eta0;
    j["hypothesis"] = to_string(s.point.hypothesis);
    j["theta_true"] = s.point.theta_true;
    auto num = [](double x) { return std::isnan(x) ? json(nullptr) : json(x); };
    for (const auto& m : s.models) {
        j["models"].push_back({{"model", to_string(m.model.kind)},
                               {"variance_mode", to_string(m.model.variance_mode)},
                               {"n_reps", m.stats.n_reps},
                               {"reject_rate", m.stats.reject_rate},
                               {"mc_se", m.stats.mc_se},
                               {"mean_est", num(m.stats.mean_estimate)},
                               {"bias", num(m.stats.bias)},
                               {"rmse", num(m.stats.rmse)},
                               {"n_failures", m.n_failures}});
    }
    return j;
}

inline json to_json(const FitResult& f) {
    auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
    json j;
    for (std::size_t c = 0; c < f.names.size(); ++c)
        j["coefficients"].push_back(
            {{"name", f.names[c]}, {"estimate", num(f.estimates[c])},
             {"std_error", num(f.std_errors[c])}});
    j["tested"] = f.tested_index >= 0 ? json(f.names[f.tested_index]) : json(nullptr);
    j["estimate"] = num(f.estimate());
    j["one_sided_p"] = f.one_sided_p;
    j["df"] = num(f.df);
    j["converged"] = f.converged;
    j["iterations"] = f.iterations;
    json flags = json::array();
    if (f.has(diag_separation_suspected)) flags.push_back("separation_suspected");
    if (f.has(diag_singular_design)) flags.push_back("singular_design");
    if (f.has(diag_degenerate_variance)) flags.push_back("degenerate_variance");
    j["diagnostics"] = flags;
    return j;
}

}  // namespace ncc
