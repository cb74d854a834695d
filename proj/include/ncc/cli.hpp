#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ncc/config.hpp"
#include "ncc/datagen.hpp"
#include "ncc/inference.hpp"
#include "ncc/montecarlo.hpp"

namespace ncc::cli {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_runtime = 3 };

enum class OutputFormat { csv, json };

struct RunConfig {
    std::string config_path;
    std::optional<int> replicates;
    std::optional<std::uint64_t> seed;
    std::string out_path;  // empty: stdout, no provenance sidecar
    int workers = 1;
    OutputFormat format = OutputFormat::csv;
};

inline std::string sidecar_path(const std::string& out_path) {
    return out_path + ".provenance.json";
}

/// Seed precedence: --seed, then the config's `seed`, then NCC_SIM_SEED.
inline std::optional<std::uint64_t> env_seed() {
    const char* env = std::getenv("NCC_SIM_SEED");
    if (!env || !*env) return std::nullopt;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError("NCC_SIM_SEED", "expected a nonnegative integer");
    return v;
}

/// Config document with command-line overrides applied.
inline json effective_config(json doc, const RunConfig& rc) {
    if (rc.replicates) {
        if (*rc.replicates < 1) throw ConfigError("--reps", "must be >= 1");
        doc["replicates"] = *rc.replicates;
    }
    if (rc.seed) {
        doc["seed"] = *rc.seed;
    } else if (!doc.contains("seed")) {
        if (const auto s = env_seed()) doc["seed"] = *s;
    }
    return doc;
}

inline std::vector<ScenarioSummary> run_all(const std::vector<ScenarioGrid>& grids,
                                            int workers) {
    std::vector<ScenarioSummary> all;
    for (const auto& g : grids) {
        auto part = run_grid(g, workers);
        all.insert(all.end(), part.begin(), part.end());
    }
    return all;
}

inline void write_results(std::ostream& out, const std::vector<ScenarioSummary>& results,
                          OutputFormat format) {
    if (format == OutputFormat::csv) {
        write_summary_csv(out, results);
    } else {
        json arr = json::array();
        for (const auto& s : results) arr.push_back(to_json(s));
        out << arr.dump(2) << '\n';
    }
}

/// Loads, overrides, validates and runs a configuration, writing the summary
/// table and (with an output path) a provenance sidecar that is itself a
/// runnable configuration.
inline int cmd_run(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    json doc;
    std::vector<ScenarioGrid> grids;
    try {
        doc = effective_config(load_json_file(rc.config_path), rc);
        grids = parse_config(doc);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_config;
    }
    if (rc.workers < 1) {
        err << "error: --workers must be >= 1\n";
        return exit_config;
    }
    try {
        const auto results = run_all(grids, rc.workers);
        if (rc.out_path.empty()) {
            write_results(out, results, rc.format);
            return exit_ok;
        }
        std::ofstream file(rc.out_path, std::ios::binary);
        if (!file) throw std::runtime_error("cannot write " + rc.out_path);
        write_results(file, results, rc.format);

        // Seed and replicate count are always written out, so the sidecar
        // reruns identically even when they came from defaults.
        json sidecar = doc;
        if (!sidecar.contains("seed")) sidecar["seed"] = grids.front().seed;
        if (!sidecar.contains("replicates")) sidecar["replicates"] = grids.front().replicates;
        json prov;
        prov["source_config"] = rc.config_path;
        prov["master_seed"] = grids.front().seed;
        prov["replicates"] = grids.front().replicates;
        prov["workers"] = rc.workers;
        prov["format"] = rc.format == OutputFormat::csv ? "csv" : "json";
        json overrides = json::object();
        if (rc.replicates) overrides["reps"] = *rc.replicates;
        if (rc.seed) overrides["seed"] = *rc.seed;
        prov["overrides"] = overrides;
        sidecar["provenance"] = prov;
        std::ofstream side(sidecar_path(rc.out_path), std::ios::binary);
        if (!side) throw std::runtime_error("cannot write " + sidecar_path(rc.out_path));
        side << sidecar.dump(2) << '\n';
        out << "wrote " << rc.out_path << " and " << sidecar_path(rc.out_path) << '\n';
        return exit_ok;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}

inline std::string format_weights(const WeightMatrix& w) {
    std::ostringstream os;
    char buf[96];
    std::snprintf(buf, sizeof buf, "rho=%.4f\n", w.rho);
    os << buf << "arm period1 period2\n";
    for (int k = 0; k < 3; ++k) {
        // Adding 0.0 keeps negative zero from printing as "-0.0000".
        std::snprintf(buf, sizeof buf, "%d %.4f %.4f\n", k, w(k, 0) + 0.0, w(k, 1) + 0.0);
        os << buf;
    }
    return os.str();
}

inline int cmd_weights(long long n01, long long n02, long long n11, long long n12,
                       std::ostream& out, std::ostream& err) {
    for (long long n : {n01, n02, n11, n12}) {
        if (n < 1 || n > std::numeric_limits<int>::max()) {
            err << "error: cell counts must be positive integers\n";
            return exit_config;
        }
    }
    out << format_weights(ncc_weights(static_cast<int>(n01), static_cast<int>(n02),
                                      static_cast<int>(n11), static_cast<int>(n12)));
    return exit_ok;
}

inline std::string figure_config_path(const std::string& config_dir, int figure) {
    return (std::filesystem::path(config_dir) / ("fig" + std::to_string(figure) + ".json"))
        .string();
}

inline int cmd_figure(int figure, const std::string& config_dir, RunConfig rc,
                      std::ostream& out, std::ostream& err) {
    if (figure < 3 || figure > 6) {
        err << "error: unknown figure " << figure << " (expected 3, 4, 5 or 6)\n";
        return exit_config;
    }
    rc.config_path = figure_config_path(config_dir, figure);
    return cmd_run(rc, out, err);
}

inline int cmd_validate(const std::string& config_path, std::ostream& out,
                        std::ostream& err) {
    try {
        const auto grids = parse_config(load_json_file(config_path));
        std::size_t points = 0;
        for (const auto& g : grids) points += expand_grid(g).size();
        out << "ok: " << grids.size() << " grid(s), " << points << " scenario(s)\n";
        return exit_ok;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_config;
    }
}

/// Scenario `scenario_id` of a configuration, for single-trial commands.
inline std::pair<TrialDesign, Scenario> pick_scenario(const json& doc, int scenario_id) {
    for (const auto& g : parse_config(doc))
        for (const auto& pt : expand_grid(g))
            if (pt.id == scenario_id) return {g.design, pt.scenario};
    throw ConfigError("--scenario", "no scenario with id " + std::to_string(scenario_id));
}

inline int cmd_simulate(const std::string& config_path, int scenario_id,
                        std::uint64_t seed, const std::string& out_path,
                        bool sequence_only, std::ostream& out, std::ostream& err) {
    std::pair<TrialDesign, Scenario> picked;
    try {
        picked = pick_scenario(load_json_file(config_path), scenario_id);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_config;
    }
    try {
        std::ofstream file;
        if (!out_path.empty()) {
            file.open(out_path, std::ios::binary);
            if (!file) throw std::runtime_error("cannot write " + out_path);
        }
        std::ostream& dest = out_path.empty() ? out : file;
        if (sequence_only)
            write_sequence_csv(dest, assign_arms(picked.first, seed));
        else
            write_dataset_csv(dest, generate_trial(picked.second, picked.first, seed));
        return exit_ok;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}

inline int cmd_analyze(const std::string& data_path, Endpoint endpoint,
                       const AnalysisModel& model, double alpha, std::ostream& out,
                       std::ostream& err) {
    std::ifstream in(data_path);
    if (!in) {
        err << "error: data not found: " << data_path << '\n';
        return exit_config;
    }
    try {
        const TrialDataset data = read_dataset_csv(in, endpoint);
        const TestOutcome t = test_theta2(data, model, alpha);
        json j = to_json(t.fit);
        j["model"] = to_string(model.kind);
        j["variance_mode"] = to_string(model.variance_mode);
        j["alpha"] = alpha;
        j["reject"] = t.reject;
        out << j.dump(2) << '\n';
        return exit_ok;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}

}  // namespace ncc::cli
