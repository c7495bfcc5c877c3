#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdse/diagnostics.hpp"
#include "tdse/gev.hpp"
#include "tdse/model.hpp"
#include "tdse/series.hpp"
#include "tdse/simulate.hpp"
#include "tdse/trend.hpp"
#include "tdse/validate.hpp"

namespace tdse {

using json = nlohmann::json;

/// Everything `fit` persists and `simulate` consumes: the assembled model,
/// the GEV fits behind the boundaries, the trend curves, and the calendar
/// layout of the observation blocks.
struct FittedModel {
    PiecewiseDiffusion model;
    std::optional<GevParams> gev_lower;
    std::optional<GevParams> gev_upper;
    std::optional<TrendCurve> mean_trend;
    std::optional<TrendCurve> scale_trend;
    std::vector<std::size_t> block_lengths;
    std::string season_text;
    std::string start_date;
    std::string data_hash;
    std::uint64_t n_records = 0;
    json config_echo = json::object();
};

namespace detail {

// JSON has no literal for non-finite doubles; they round-trip through null.
inline json json_num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double num_from(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

template <std::size_t N>
json json_arr(const std::array<double, N>& a) {
    json out = json::array();
    for (double v : a) out.push_back(json_num(v));
    return out;
}

template <std::size_t N>
void arr_from(const json& j, std::array<double, N>& out) {
    if (!j.is_array() || j.size() != N)
        throw std::invalid_argument("model file: array field has the wrong length");
    for (std::size_t i = 0; i < N; ++i) out[i] = num_from(j[i]);
}

} // namespace detail

inline json to_json(const DriftParams& d) {
    return {{"alpha", d.alpha}, {"beta", d.beta}, {"se", detail::json_arr(d.se)}};
}

inline DriftParams drift_from_json(const json& j) {
    DriftParams d;
    d.alpha = j.at("alpha").get<double>();
    d.beta = j.at("beta").get<double>();
    detail::arr_from(j.at("se"), d.se);
    return d;
}

inline json to_json(const CentralPoly& c) {
    return {{"coeffs", detail::json_arr(c.coeffs)}, {"lo", c.lo},        {"hi", c.hi},
            {"mid", c.mid},                         {"halfwidth", c.halfwidth},
            {"se", detail::json_arr(c.se)}};
}

inline CentralPoly central_from_json(const json& j) {
    CentralPoly c;
    detail::arr_from(j.at("coeffs"), c.coeffs);
    c.lo = j.at("lo").get<double>();
    c.hi = j.at("hi").get<double>();
    c.mid = j.at("mid").get<double>();
    c.halfwidth = j.at("halfwidth").get<double>();
    detail::arr_from(j.at("se"), c.se);
    return c;
}

inline json to_json(const TailQuadratic& t) {
    return {{"coeffs", detail::json_arr(t.coeffs)},
            {"side", t.side == TailSide::lower ? "lower" : "upper"},
            {"junction", t.junction},
            {"endpoint", t.endpoint}};
}

inline TailQuadratic tail_from_json(const json& j) {
    TailQuadratic t;
    detail::arr_from(j.at("coeffs"), t.coeffs);
    const auto side = j.at("side").get<std::string>();
    if (side != "lower" && side != "upper")
        throw std::invalid_argument("model file: unknown tail side '" + side + "'");
    t.side = side == "lower" ? TailSide::lower : TailSide::upper;
    t.junction = j.at("junction").get<double>();
    t.endpoint = j.at("endpoint").get<double>();
    return t;
}

inline json to_json(const BoundaryInfo& b) {
    return {{"r_lower", detail::json_num(b.r_lower)},
            {"r_upper", detail::json_num(b.r_upper)},
            {"source", b.source == BoundaryInfo::Source::gev ? "gev" : "manual"},
            {"xi_lower", detail::json_num(b.xi_lower)},
            {"xi_upper", detail::json_num(b.xi_upper)}};
}

inline BoundaryInfo boundaries_from_json(const json& j) {
    BoundaryInfo b;
    b.r_lower = detail::num_from(j.at("r_lower"));
    b.r_upper = detail::num_from(j.at("r_upper"));
    if (std::isnan(b.r_lower)) b.r_lower = -std::numeric_limits<double>::infinity();
    if (std::isnan(b.r_upper)) b.r_upper = std::numeric_limits<double>::infinity();
    b.source = j.at("source").get<std::string>() == "manual" ? BoundaryInfo::Source::manual
                                                             : BoundaryInfo::Source::gev;
    b.xi_lower = detail::num_from(j.at("xi_lower"));
    b.xi_upper = detail::num_from(j.at("xi_upper"));
    return b;
}

inline json to_json(const GevParams& g) {
    json ci = json::array();
    for (const auto& pair : g.ci90) {
        ci.push_back(json::array({detail::json_num(pair[0]), detail::json_num(pair[1])}));
    }
    return {{"mu", g.mu},
            {"sigma", g.sigma},
            {"xi", g.xi},
            {"se", detail::json_arr(g.se)},
            {"ci90", ci},
            {"tail", g.tail == Tail::upper ? "upper" : "lower"},
            {"n_blocks", g.n_blocks},
            {"loglik", g.loglik}};
}

inline GevParams gev_from_json(const json& j) {
    GevParams g;
    g.mu = j.at("mu").get<double>();
    g.sigma = j.at("sigma").get<double>();
    g.xi = j.at("xi").get<double>();
    detail::arr_from(j.at("se"), g.se);
    const auto& ci = j.at("ci90");
    if (!ci.is_array() || ci.size() != 3)
        throw std::invalid_argument("model file: ci90 must hold three intervals");
    for (std::size_t i = 0; i < 3; ++i) {
        g.ci90[i][0] = detail::num_from(ci[i][0]);
        g.ci90[i][1] = detail::num_from(ci[i][1]);
    }
    g.tail = j.at("tail").get<std::string>() == "upper" ? Tail::upper : Tail::lower;
    g.n_blocks = j.at("n_blocks").get<int>();
    g.loglik = j.at("loglik").get<double>();
    return g;
}

inline json to_json(const TrendCurve& c) {
    return {{"fitted", c.fitted},
            {"span_days", c.span_days},
            {"kind", c.kind == TrendKind::mean ? "mean" : "scale"},
            {"robust_iters", c.robust_iters},
            {"n_floored", c.n_floored}};
}

inline TrendCurve trend_from_json(const json& j) {
    TrendCurve c;
    c.fitted = j.at("fitted").get<std::vector<double>>();
    c.grid.resize(c.fitted.size());
    std::iota(c.grid.begin(), c.grid.end(), 0.0);
    c.span_days = j.at("span_days").get<int>();
    c.kind = j.at("kind").get<std::string>() == "scale" ? TrendKind::scale : TrendKind::mean;
    c.robust_iters = j.at("robust_iters").get<int>();
    c.n_floored = j.at("n_floored").get<int>();
    return c;
}

inline json model_to_json(const FittedModel& fm) {
    json j;
    j["format_version"] = kModelFormatVersion;
    j["library_version"] = kVersion;
    j["drift"] = to_json(fm.model.drift);
    j["central"] = to_json(fm.model.central);
    j["lower_tail"] = fm.model.lower_tail ? to_json(*fm.model.lower_tail) : json(nullptr);
    j["upper_tail"] = fm.model.upper_tail ? to_json(*fm.model.upper_tail) : json(nullptr);
    j["boundaries"] = to_json(fm.model.boundaries);
    j["gev_lower"] = fm.gev_lower ? to_json(*fm.gev_lower) : json(nullptr);
    j["gev_upper"] = fm.gev_upper ? to_json(*fm.gev_upper) : json(nullptr);
    j["mean_trend"] = fm.mean_trend ? to_json(*fm.mean_trend) : json(nullptr);
    j["scale_trend"] = fm.scale_trend ? to_json(*fm.scale_trend) : json(nullptr);
    j["layout"] = {{"block_lengths", fm.block_lengths},
                   {"season", fm.season_text},
                   {"start_date", fm.start_date}};
    j["provenance"] = {{"data_hash", fm.data_hash},
                       {"n_records", fm.n_records},
                       {"config", fm.config_echo}};
    return j;
}

inline FittedModel model_from_json(const json& j) {
    if (!j.contains("format_version") || !j["format_version"].is_number_integer())
        throw std::invalid_argument("model file: missing format_version");
    const int ver = j["format_version"].get<int>();
    if (ver != kModelFormatVersion)
        throw std::invalid_argument("model file: format_version " + std::to_string(ver) +
                                    " unsupported (expected " +
                                    std::to_string(kModelFormatVersion) + ")");
    FittedModel fm;
    fm.model.drift = drift_from_json(j.at("drift"));
    fm.model.central = central_from_json(j.at("central"));
    if (!j.at("lower_tail").is_null()) fm.model.lower_tail = tail_from_json(j["lower_tail"]);
    if (!j.at("upper_tail").is_null()) fm.model.upper_tail = tail_from_json(j["upper_tail"]);
    fm.model.boundaries = boundaries_from_json(j.at("boundaries"));
    if (!j.at("gev_lower").is_null()) fm.gev_lower = gev_from_json(j["gev_lower"]);
    if (!j.at("gev_upper").is_null()) fm.gev_upper = gev_from_json(j["gev_upper"]);
    if (!j.at("mean_trend").is_null()) fm.mean_trend = trend_from_json(j["mean_trend"]);
    if (!j.at("scale_trend").is_null()) fm.scale_trend = trend_from_json(j["scale_trend"]);
    const auto& layout = j.at("layout");
    fm.block_lengths = layout.at("block_lengths").get<std::vector<std::size_t>>();
    fm.season_text = layout.at("season").get<std::string>();
    fm.start_date = layout.at("start_date").get<std::string>();
    const auto& prov = j.at("provenance");
    fm.data_hash = prov.at("data_hash").get<std::string>();
    fm.n_records = prov.at("n_records").get<std::uint64_t>();
    fm.config_echo = prov.at("config");
    return fm;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot open for writing: " + path);
    out << text;
    if (!out) throw std::invalid_argument("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_model(const std::string& path, const FittedModel& fm) {
    write_text_file(path, model_to_json(fm).dump(2) + "\n");
}

inline FittedModel read_model(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("model file " + path + ": " + e.what());
    }
    return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Ensemble files
// ---------------------------------------------------------------------------

inline void write_ensemble_csv(const std::string& path, const Ensemble& ens) {
    std::ostringstream out;
    out << "path,t_index,value\n";
    for (std::size_t p = 0; p < ens.n_paths(); ++p)
        for (std::size_t t = 0; t < ens.paths[p].size(); ++t)
            out << p << ',' << t << ',' << detail::format_double(ens.paths[p][t]) << '\n';
    write_text_file(path, out.str());
}

inline Ensemble read_ensemble_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty ensemble file: " + path);
    if (line != "path,t_index,value")
        throw std::invalid_argument("ensemble file " + path + ": unexpected header '" + line + "'");
    Ensemble ens;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 3)
            throw std::invalid_argument("ensemble file " + path + " row " + std::to_string(row) +
                                        ": expected 3 fields");
        auto parse_index = [&](std::string_view s) {
            std::size_t v = 0;
            const auto* end = s.data() + s.size();
            const auto rc = std::from_chars(s.data(), end, v);
            if (rc.ec != std::errc{} || rc.ptr != end)
                throw std::invalid_argument("ensemble file " + path + " row " +
                                            std::to_string(row) + ": bad index '" +
                                            std::string(s) + "'");
            return v;
        };
        const std::size_t p = parse_index(fields[0]);
        const std::size_t t = parse_index(fields[1]);
        double value = 0.0;
        if (!detail::parse_double(fields[2], value))
            throw std::invalid_argument("ensemble file " + path + " row " + std::to_string(row) +
                                        ": bad value '" + std::string(fields[2]) + "'");
        if (p >= ens.paths.size()) ens.paths.resize(p + 1);
        if (t != ens.paths[p].size())
            throw std::invalid_argument("ensemble file " + path + " row " + std::to_string(row) +
                                        ": t_index out of order");
        ens.paths[p].push_back(value);
    }
    if (ens.paths.empty()) throw std::invalid_argument("ensemble file " + path + ": no data rows");
    for (std::size_t p = 1; p < ens.paths.size(); ++p)
        if (ens.paths[p].size() != ens.paths[0].size())
            throw std::invalid_argument("ensemble file " + path + ": ragged path lengths");
    ens.config.n_paths = static_cast<int>(ens.paths.size());
    ens.config.path_length = ens.paths[0].size();
    return ens;
}

inline constexpr char kEnsembleMagic[4] = {'T', 'D', 'S', 'E'};

inline void write_ensemble_binary(const std::string& path, const Ensemble& ens) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot open for writing: " + path);
    out.write(kEnsembleMagic, 4);
    const std::uint32_t version = 1;
    const std::uint64_t np = ens.n_paths();
    const std::uint64_t len = ens.path_length();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&np), sizeof np);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    for (const auto& p : ens.paths)
        out.write(reinterpret_cast<const char*>(p.data()),
                  static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!out) throw std::invalid_argument("write failed: " + path);
}

inline Ensemble read_ensemble_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kEnsembleMagic, 4) != 0)
        throw std::invalid_argument("ensemble file " + path + ": bad magic");
    std::uint32_t version = 0;
    std::uint64_t np = 0, len = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&np), sizeof np);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || version != 1)
        throw std::invalid_argument("ensemble file " + path + ": unsupported version");
    if (np == 0 || len == 0) throw std::invalid_argument("ensemble file " + path + ": empty");
    Ensemble ens;
    ens.paths.assign(np, std::vector<double>(len));
    for (auto& p : ens.paths) {
        in.read(reinterpret_cast<char*>(p.data()),
                static_cast<std::streamsize>(len * sizeof(double)));
        if (!in) throw std::invalid_argument("ensemble file " + path + ": truncated");
    }
    ens.config.n_paths = static_cast<int>(np);
    ens.config.path_length = len;
    return ens;
}

// ---------------------------------------------------------------------------
// Trend and report emission
// ---------------------------------------------------------------------------

inline void write_trend_csv(const std::string& path, const TrendCurve& curve,
                            const std::vector<Date>* dates = nullptr) {
    std::ostringstream out;
    out << "t_index,date,fitted\n";
    for (std::size_t i = 0; i < curve.fitted.size(); ++i) {
        out << i << ',';
        if (dates && i < dates->size()) out << date_to_string((*dates)[i]);
        out << ',' << detail::format_double(curve.fitted[i]) << '\n';
    }
    write_text_file(path, out.str());
}

inline json to_json(const QuantileTable& t) {
    return {{"probs", t.probs},
            {"observed", t.observed},
            {"simulated", t.simulated},
            {"spread", t.spread}};
}

inline json to_json(const DensityEstimate& d) {
    return {{"x", d.x},          {"f", d.f},       {"bandwidth", d.bandwidth},
            {"mode", d.mode},    {"mean", d.mean}, {"variance", d.variance}};
}

inline json to_json(const ClusterSummary& c) {
    json hist = json::object();
    json counts = json::object();
    for (const auto& [len, freq] : c.length_histogram) hist[std::to_string(len)] = freq;
    for (const auto& [len, cnt] : c.length_counts) counts[std::to_string(len)] = cnt;
    json j{{"threshold", c.threshold},
           {"direction", to_string(c.direction)},
           {"length_histogram", hist},
           {"length_counts", counts},
           {"n_clusters", c.n_clusters},
           {"total_exceedance_days", c.total_exceedance_days}};
    j["mean_length"] = c.mean_length ? json(*c.mean_length) : json(nullptr);
    j["declusterization_rate"] =
        c.declusterization_rate ? json(*c.declusterization_rate) : json(nullptr);
    return j;
}

inline json to_json(const GevRecovery& r) {
    return {{"observed_fit", to_json(r.observed_fit)},
            {"direction", r.direction == ExtremeDirection::max ? "max" : "min"},
            {"mu_hat", r.mu_hat},
            {"sigma_hat", r.sigma_hat},
            {"xi_hat", r.xi_hat},
            {"n_paths", r.n_paths},
            {"n_failed", r.n_failed},
            {"frac_in_ci90", detail::json_arr(r.frac_in_ci90)},
            {"median_hat", detail::json_arr(r.median_hat)},
            {"degraded", r.degraded}};
}

inline json report_to_json(const ValidationReport& rep) {
    json j;
    j["all_pass"] = rep.all_pass;
    j["cluster_thresholds"] = rep.cluster_thresholds;
    j["observed"] = json::object();
    j["observed"]["density"] = rep.observed_density.x.empty() ? json(nullptr)
                                                              : to_json(rep.observed_density);
    j["observed"]["clusters"] = json::array();
    for (const auto& c : rep.observed_clusters) j["observed"]["clusters"].push_back(to_json(c));
    j["observed"]["gev"] = json::object();
    for (const auto& [key, fit] : rep.observed_gev) j["observed"]["gev"][key] = to_json(fit);
    j["skipped"] = rep.skipped;
    j["variants"] = json::array();
    for (const auto& v : rep.variants) {
        json vj;
        vj["label"] = v.label;
        vj["pass"] = v.pass;
        vj["quantiles"] = to_json(v.quantiles);
        vj["density"] = v.density.x.empty() ? json(nullptr) : to_json(v.density);
        vj["gev"] = json::array();
        for (const auto& g : v.gev) vj["gev"].push_back(to_json(g));
        vj["clusters"] = json::array();
        for (const auto& c : v.clusters) vj["clusters"].push_back(to_json(c));
        vj["flags"] = json::array();
        for (const auto& f : v.flags)
            vj["flags"].push_back({{"name", f.name}, {"pass", f.pass}, {"detail", f.detail}});
        vj["skipped"] = v.skipped;
        j["variants"].push_back(std::move(vj));
    }
    return j;
}

/// Quantile table CSV: one row per prob, observed column, then one
/// simulated/spread column pair per variant.
inline void write_quantile_csv(const std::string& path, const ValidationReport& rep) {
    std::ostringstream out;
    out << "prob,observed";
    for (const auto& v : rep.variants) out << ",sim_" << v.label << ",spread_" << v.label;
    out << '\n';
    if (!rep.variants.empty()) {
        const auto& probs = rep.variants.front().quantiles.probs;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            out << detail::format_double(probs[i]) << ','
                << detail::format_double(rep.variants.front().quantiles.observed[i]);
            for (const auto& v : rep.variants)
                out << ',' << detail::format_double(v.quantiles.simulated[i]) << ','
                    << detail::format_double(v.quantiles.spread[i]);
            out << '\n';
        }
    }
    write_text_file(path, out.str());
}

inline void write_cluster_csv(const std::string& path, const ValidationReport& rep) {
    std::ostringstream out;
    out << "source,threshold,direction,length,count,frequency\n";
    auto emit = [&](const std::string& source, const ClusterSummary& c) {
        for (const auto& [len, cnt] : c.length_counts)
            out << source << ',' << detail::format_double(c.threshold) << ','
                << to_string(c.direction) << ',' << len << ',' << cnt << ','
                << detail::format_double(c.length_histogram.at(len)) << '\n';
    };
    for (const auto& c : rep.observed_clusters) emit("observed", c);
    for (const auto& v : rep.variants)
        for (const auto& c : v.clusters) emit(v.label, c);
    write_text_file(path, out.str());
}

inline void write_density_csv(const std::string& path, const DensityEstimate& d) {
    std::ostringstream out;
    out << "x,density\n";
    for (std::size_t i = 0; i < d.x.size(); ++i)
        out << detail::format_double(d.x[i]) << ',' << detail::format_double(d.f[i]) << '\n';
    write_text_file(path, out.str());
}

inline void write_gev_samples_csv(const std::string& path, const ValidationReport& rep) {
    std::ostringstream out;
    out << "variant,direction,parameter,value\n";
    for (const auto& v : rep.variants) {
        for (const auto& g : v.gev) {
            const char* dir = g.direction == ExtremeDirection::max ? "max" : "min";
            for (double x : g.mu_hat) out << v.label << ',' << dir << ",mu," << detail::format_double(x) << '\n';
            for (double x : g.sigma_hat) out << v.label << ',' << dir << ",sigma," << detail::format_double(x) << '\n';
            for (double x : g.xi_hat) out << v.label << ',' << dir << ",xi," << detail::format_double(x) << '\n';
        }
    }
    write_text_file(path, out.str());
}

} // namespace tdse
