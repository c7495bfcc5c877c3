#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tdse/npestim.hpp"
#include "tdse/series.hpp"
#include "tdse/simulate.hpp"
#include "tdse/validate.hpp"

namespace tdse {

/// Declarative run configuration: sectioned key/value file, all keys known in
/// advance, unknown keys rejected at parse time.
struct RunConfig {
    // [input]
    std::string input_path;
    ColumnSpec columns;

    // [season]
    std::string season; // "MM-DD:MM-DD[,MM-DD:MM-DD...]"; empty means whole year

    // [trend]
    int span_days = 1049;
    int robust_iters = 2;

    // [estimation]
    int degree_a = 4;
    std::string lambda_policy = "auto"; // "auto" or a positive number
    double lambda_value = 0.0;
    int n_knots = 12;
    TailFactor tail_factor = TailFactor::plug_in;
    double central_p_lo = 0.01;
    double central_p_hi = 0.99;
    UpperTailPolicy upper_tail_policy = UpperTailPolicy::quadratic;
    KernelType kernel = KernelType::epanechnikov;
    double bandwidth = 0.0; // 0 = automatic

    // [extremes]
    int min_blocks = 10;
    bool equip_lower = true;
    bool equip_upper = true;

    // [simulation]
    SimConfig sim;

    // [validation]
    std::vector<double> probs = default_prob_ladder();
    std::vector<double> lower_cluster_probs{0.01, 0.02};
    std::vector<double> upper_cluster_probs{0.98, 0.99};
    ValidationTolerances tolerances;

    // [output]
    std::string out_dir = "out";
    std::string ensemble_format = "csv"; // "csv" or "binary"
    bool emit_plot_data = false;

    // raw section.key → value text, kept for the manifest echo
    std::map<std::string, std::string> raw;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string strip_value(const std::string& raw, const std::string& where) {
    std::string v = trim(raw);
    if (!v.empty() && v.front() == '"') {
        const auto close = v.find('"', 1);
        if (close == std::string::npos)
            throw std::invalid_argument("config: unterminated string for " + where);
        const std::string rest = trim(v.substr(close + 1));
        if (!rest.empty() && rest.front() != '#')
            throw std::invalid_argument("config: trailing text after string for " + where);
        return v.substr(1, close - 1);
    }
    const auto hash = v.find('#');
    if (hash != std::string::npos) v = trim(v.substr(0, hash));
    if (v.empty()) throw std::invalid_argument("config: empty value for " + where);
    return v;
}

inline double config_double(const std::string& v, const std::string& where) {
    double out = 0.0;
    if (!parse_double(v, out))
        throw std::invalid_argument("config: bad number '" + v + "' for " + where);
    return out;
}

inline int config_int(const std::string& v, const std::string& where) {
    int out = 0;
    const auto* end = v.data() + v.size();
    const auto rc = std::from_chars(v.data(), end, out);
    if (rc.ec != std::errc{} || rc.ptr != end)
        throw std::invalid_argument("config: bad integer '" + v + "' for " + where);
    return out;
}

inline std::uint64_t config_u64(const std::string& v, const std::string& where) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto rc = std::from_chars(v.data(), end, out);
    if (rc.ec != std::errc{} || rc.ptr != end)
        throw std::invalid_argument("config: bad unsigned integer '" + v + "' for " + where);
    return out;
}

inline bool config_bool(const std::string& v, const std::string& where) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw std::invalid_argument("config: bad boolean '" + v + "' for " + where + " (true/false)");
}

inline std::vector<double> config_double_list(const std::string& v, const std::string& where) {
    std::string body = v;
    if (body.size() < 2 || body.front() != '[' || body.back() != ']')
        throw std::invalid_argument("config: expected [a, b, ...] for " + where);
    body = body.substr(1, body.size() - 2);
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= body.size()) {
        const auto comma = body.find(',', pos);
        const std::string item = trim(std::string_view(body).substr(
            pos, (comma == std::string::npos ? body.size() : comma) - pos));
        if (!item.empty()) out.push_back(config_double(item, where));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw std::invalid_argument("config: empty list for " + where);
    return out;
}

} // namespace detail

inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(line_no) +
                                            ": malformed section header");
            section = t.substr(1, t.size() - 2);
            if (section != "input" && section != "season" && section != "trend" &&
                section != "estimation" && section != "extremes" && section != "simulation" &&
                section != "validation" && section != "output")
                throw std::invalid_argument("config: unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value");
        const std::string key = detail::trim(std::string_view(t).substr(0, eq));
        const std::string where = section + "." + key;
        const std::string value = detail::strip_value(t.substr(eq + 1), where);
        if (section.empty())
            throw std::invalid_argument("config: key '" + key + "' outside any section");
        if (cfg.raw.count(where))
            throw std::invalid_argument("config: duplicate key " + where);
        cfg.raw[where] = value;

        if (section == "input") {
            if (key == "path") cfg.input_path = value;
            else if (key == "date_column") cfg.columns.date = value;
            else if (key == "value_column") cfg.columns.value = value;
            else throw std::invalid_argument("config: unknown key " + where);
        } else if (section == "season") {
            if (key == "ranges") cfg.season = value;
            else throw std::invalid_argument("config: unknown key " + where);
        } else if (section == "trend") {
            if (key == "span_days") cfg.span_days = detail::config_int(value, where);
            else if (key == "robust_iters") cfg.robust_iters = detail::config_int(value, where);
            else throw std::invalid_argument("config: unknown key " + where);
        } else if (section == "estimation") {
            if (key == "degree_a") cfg.degree_a = detail::config_int(value, where);
            else if (key == "lambda") {
                if (value == "auto") {
                    cfg.lambda_policy = "auto";
                } else {
                    cfg.lambda_policy = "fixed";
                    cfg.lambda_value = detail::config_double(value, where);
                }
            } else if (key == "n_knots") cfg.n_knots = detail::config_int(value, where);
            else if (key == "tail_factor") {
                if (value == "plug_in") cfg.tail_factor = TailFactor::plug_in;
                else if (value == "lemma") cfg.tail_factor = TailFactor::lemma;
                else throw std::invalid_argument("config: " + where + " must be plug_in or lemma");
            } else if (key == "central_p_lo") cfg.central_p_lo = detail::config_double(value, where);
            else if (key == "central_p_hi") cfg.central_p_hi = detail::config_double(value, where);
            else if (key == "upper_tail") {
                if (value == "quadratic") cfg.upper_tail_policy = UpperTailPolicy::quadratic;
                else if (value == "use_central") cfg.upper_tail_policy = UpperTailPolicy::use_central;
                else throw std::invalid_argument("config: " + where + " must be quadratic or use_central");
            } else if (key == "kernel") {
                if (value == "epanechnikov") cfg.kernel = KernelType::epanechnikov;
                else if (value == "gaussian") cfg.kernel = KernelType::gaussian;
                else throw std::invalid_argument("config: " + where + " must be epanechnikov or gaussian");
            } else if (key == "bandwidth") cfg.bandwidth = detail::config_double(value, where);
            else throw std::invalid_argument("config: unknown key " + where);
        } else if (section == "extremes") {
            if (key == "min_blocks") cfg.min_blocks = detail::config_int(value, where);
            else if (key == "equip_lower") cfg.equip_lower = detail::config_bool(value, where);
            else if (key == "equip_upper") cfg.equip_upper = detail::config_bool(value, where);
            else throw std::invalid_argument("config: unknown key " + where);
        } else if (section == "simulation") {
            if (key == "n_paths") cfg.sim.n_paths = detail::config_int(value, where);
            else if (key == "path_length")
                cfg.sim.path_length = static_cast<std::size_t>(detail::config_u64(value, where));
            else if (key == "seed") cfg.sim.seed = detail::config_u64(value, where);
            else if (key == "variant") {
                if (value == "model1") cfg.sim.variant = ModelVariant::model1;
                else if (value == "model2") cfg.sim.variant = ModelVariant::model2;
                else if (value == "model3") cfg.sim.variant = ModelVariant::model3;
                else throw std::invalid_argument("config: " + where + " must be model1, model2 or model3");
            } else if (key == "boundary_policy") {
                if (value == "resample") cfg.sim.boundary_policy = BoundaryPolicy::resample;
                else if (value == "clamp") cfg.sim.boundary_policy = BoundaryPolicy::clamp;
                else throw std::invalid_argument("config: " + where + " must be resample or clamp");
            } else if (key == "max_resamples") cfg.sim.max_resamples = detail::config_int(value, where);
            else if (key == "burn_in") cfg.sim.burn_in = detail::config_int(value, where);
            else if (key == "threads") cfg.sim.threads = detail::config_int(value, where);
            else if (key == "keep_z") cfg.sim.keep_z = detail::config_bool(value, where);
            else throw std::invalid_argument("config: unknown key " + where);
        } else if (section == "validation") {
            if (key == "probs") cfg.probs = detail::config_double_list(value, where);
            else if (key == "lower_cluster_probs")
                cfg.lower_cluster_probs = detail::config_double_list(value, where);
            else if (key == "upper_cluster_probs")
                cfg.upper_cluster_probs = detail::config_double_list(value, where);
            else if (key == "quantile_band_sd")
                cfg.tolerances.quantile_band_sd = detail::config_double(value, where);
            else if (key == "tail_band_factor")
                cfg.tolerances.tail_band_factor = detail::config_double(value, where);
            else if (key == "density_mean_band_sd")
                cfg.tolerances.density_mean_band_sd = detail::config_double(value, where);
            else if (key == "density_var_log_ratio")
                cfg.tolerances.density_var_log_ratio = detail::config_double(value, where);
            else if (key == "cluster_rate_tol")
                cfg.tolerances.cluster_rate_tol = detail::config_double(value, where);
            else throw std::invalid_argument("config: unknown key " + where);
        } else if (section == "output") {
            if (key == "dir") cfg.out_dir = value;
            else if (key == "ensemble_format") {
                if (value != "csv" && value != "binary")
                    throw std::invalid_argument("config: " + where + " must be csv or binary");
                cfg.ensemble_format = value;
            } else if (key == "emit_plot_data") cfg.emit_plot_data = detail::config_bool(value, where);
            else throw std::invalid_argument("config: unknown key " + where);
        }
    }

    if (cfg.span_days < 3) throw std::invalid_argument("config: trend.span_days too small");
    if (cfg.robust_iters < 0) throw std::invalid_argument("config: trend.robust_iters negative");
    if (cfg.degree_a < 0 || cfg.degree_a > 4)
        throw std::invalid_argument("config: estimation.degree_a must be in [0, 4]");
    if (cfg.lambda_policy == "fixed" && !(cfg.lambda_value > 0.0))
        throw std::invalid_argument("config: estimation.lambda must be positive");
    if (cfg.n_knots < 4) throw std::invalid_argument("config: estimation.n_knots must be >= 4");
    if (!(cfg.central_p_lo > 0.0 && cfg.central_p_hi < 1.0 && cfg.central_p_lo < cfg.central_p_hi))
        throw std::invalid_argument("config: estimation central quantiles must satisfy 0 < lo < hi < 1");
    if (cfg.min_blocks < 1) throw std::invalid_argument("config: extremes.min_blocks must be >= 1");
    if (!cfg.season.empty()) SeasonSpec::parse(cfg.season); // validates the text
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("config file not found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    RunConfig cfg = parse_config(ss.str());
    if (!cfg.input_path.empty() && !std::filesystem::exists(cfg.input_path)) {
        // Resolve relative to the config file before giving up.
        const auto sibling = std::filesystem::path(path).parent_path() / cfg.input_path;
        if (std::filesystem::exists(sibling))
            cfg.input_path = sibling.string();
        else
            throw std::invalid_argument("config: input path not found: " + cfg.input_path);
    }
    return cfg;
}

} // namespace tdse
