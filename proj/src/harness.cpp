#include "mclab/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mclab/rank1.hpp"

namespace mclab {

namespace {

bool identity_range(const std::pair<double, double>& range) {
    return range.first == -1.0 && range.second == 1.0;
}

double to_unit_range(double v, const std::pair<double, double>& range) {
    if (identity_range(range)) return v;
    return -1.0 + 2.0 * (v - range.first) / (range.second - range.first);
}

double from_unit_range(double x, const std::pair<double, double>& range) {
    if (identity_range(range)) return x;
    return range.first + (x + 1.0) * (range.second - range.first) / 2.0;
}

// The affine maps are not exact floating-point inverses, so writing the
// naive preimage can drift an ulp and break re-ingestion.  Values that came
// from ingestion always have an exact preimage within a few ulps of the
// naive one; prefer it so emit-then-ingest is the identity.
double raw_preimage(double x, const std::pair<double, double>& range) {
    double v = from_unit_range(x, range);
    if (identity_range(range)) return v;
    if (to_unit_range(v, range) == x) return v;
    double below = v, above = v;
    for (int step = 0; step < 64; ++step) {
        below = std::nextafter(below, -std::numeric_limits<double>::infinity());
        above = std::nextafter(above, std::numeric_limits<double>::infinity());
        if (to_unit_range(below, range) == x) return below;
        if (to_unit_range(above, range) == x) return above;
    }
    return v;
}

}  // namespace

RatingTriples ingest_triples(const std::string& path, const TripleFormat& format) {
    if (format.index_base != 0 && format.index_base != 1)
        throw config_error("index base must be 0 or 1");
    if (!(format.value_range.first < format.value_range.second))
        throw config_error("value range must have lo < hi");
    std::ifstream in(path);
    if (!in) throw data_error("cannot open triple file: " + path);

    RatingTriples out;
    out.value_range = format.value_range;
    std::unordered_set<std::uint64_t> seen;
    std::string line;
    std::size_t line_no = 0;
    std::uint64_t max_row = 0, max_col = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;

        std::string fields[3];
        std::size_t count = 0;
        if (format.delimiter == 0) {
            std::istringstream ss(line);
            std::string tok;
            while (ss >> tok) {
                if (count == 3) { count = 4; break; }
                fields[count++] = tok;
            }
        } else {
            std::size_t start = 0;
            while (true) {
                std::size_t pos = line.find(format.delimiter, start);
                std::string tok = line.substr(start, pos - start);
                if (count == 3) { count = 4; break; }
                fields[count++] = tok;
                if (pos == std::string::npos) break;
                start = pos + 1;
            }
        }
        auto fail = [&](const std::string& why) {
            throw data_error("line " + std::to_string(line_no) + ": " + why);
        };
        if (count != 3) fail("expected <row> <col> <value>");

        auto parse_index = [&](const std::string& tok) -> std::uint64_t {
            std::uint64_t value = 0;
            const char* b = tok.data();
            const char* e = b + tok.size();
            while (b != e && (*b == ' ' || *b == '\t')) ++b;
            auto [p, ec] = std::from_chars(b, e, value);
            while (p != e && (*p == ' ' || *p == '\t')) ++p;
            if (ec != std::errc() || p != e) fail("bad index '" + tok + "'");
            return value;
        };
        std::uint64_t row = parse_index(fields[0]);
        std::uint64_t col = parse_index(fields[1]);
        if (row < static_cast<std::uint64_t>(format.index_base) ||
            col < static_cast<std::uint64_t>(format.index_base))
            fail("index below the configured base");
        row -= format.index_base;
        col -= format.index_base;
        if (row > 0xFFFFFFFFull || col > 0xFFFFFFFFull) fail("index out of range");

        double value;
        try {
            std::size_t used = 0;
            value = std::stod(fields[2], &used);
            while (used < fields[2].size() &&
                   (fields[2][used] == ' ' || fields[2][used] == '\t'))
                ++used;
            if (used != fields[2].size()) fail("bad value '" + fields[2] + "'");
        } catch (const std::logic_error&) {
            fail("bad value '" + fields[2] + "'");
            throw;  // unreachable
        }
        if (value < format.value_range.first || value > format.value_range.second)
            fail("value outside the declared range");

        if (!seen.insert(row << 32 | col).second) fail("duplicate entry");
        out.entries.emplace_back(static_cast<std::uint32_t>(row),
                                 static_cast<std::uint32_t>(col),
                                 to_unit_range(value, format.value_range));
        max_row = std::max(max_row, row);
        max_col = std::max(max_col, col);
    }
    if (out.entries.empty()) throw data_error("triple file holds no entries: " + path);
    out.rows = max_row + 1;
    out.cols = max_col + 1;
    return out;
}

void emit_triples(const std::string& path, const RatingTriples& triples,
                  const TripleFormat& format) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write triple file: " + path);
    char delim = format.delimiter == 0 ? ' ' : format.delimiter;
    out << "# rows " << triples.rows << " cols " << triples.cols << "\n";
    for (auto [i, a, x] : triples.entries) {
        out << (i + format.index_base) << delim << (a + format.index_base) << delim
            << format_double(raw_preimage(x, format.value_range)) << "\n";
    }
    if (!out) throw data_error("failed writing triple file: " + path);
}

ObservationSet observations_from_triples(const RatingTriples& triples) {
    ObservationSet obs;
    obs.n = triples.rows;
    obs.m = triples.cols;
    obs.edges.reserve(triples.entries.size());
    obs.values.reserve(triples.entries.size());
    for (auto [i, a, x] : triples.entries) {
        obs.edges.emplace_back(i, a);
        obs.values.push_back(x);
    }
    obs.epsilon = static_cast<double>(obs.size()) / static_cast<double>(obs.n);
    return obs;
}

std::array<ObservationSet, 3> make_comparison_matrices(const RatingTriples& triples,
                                                       std::size_t r, std::uint64_t seed,
                                                       const FactorDistribution& fresh_dist) {
    std::array<ObservationSet, 3> out;
    out[0] = observations_from_triples(triples);

    out[1] = out[0];
    for (std::size_t e = 0; e < out[1].size(); ++e)
        out[1].values[e] = 2.0 * rng::unit(seed, rng::Stream::iid_values, e) - 1.0;

    // A fresh low-rank instance on the same grid; nudge alpha until the
    // rounded column count lands exactly on the data's.
    double alpha = static_cast<double>(triples.cols) / static_cast<double>(triples.rows);
    GroundTruthInstance fresh;
    for (int tries = 0;; ++tries) {
        fresh = generate_instance(triples.rows, alpha, r, fresh_dist, fresh_dist,
                                  rng::derive(seed, rng::Stream::comparison, 0));
        if (fresh.m == triples.cols) break;
        if (tries > 8) throw numerical_error("could not match the column count");
        alpha = fresh.m < triples.cols ? std::nextafter(alpha, 2.0 * alpha + 1.0)
                                       : std::nextafter(alpha, 0.0);
    }
    out[2] = out[0];
    for (std::size_t e = 0; e < out[2].size(); ++e) {
        auto [i, a] = out[2].edges[e];
        out[2].values[e] = fresh.entry(i, a);
    }
    return out;
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "rank1") return Algorithm::rank1;
    if (name == "walkrank") return Algorithm::walkrank;
    if (name == "als") return Algorithm::als;
    throw config_error("unknown algorithm: " + name);
}

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::rank1: return "rank1";
        case Algorithm::walkrank: return "walkrank";
        case Algorithm::als: return "als";
    }
    throw config_error("unknown algorithm id");
}

void ExperimentSpec::validate() const {
    if (instances_per_point < 1) throw config_error("instances_per_point must be >= 1");
    if (!(rho >= 0.0 && rho <= 1.0)) throw config_error("rho must lie in [0, 1]");
    if (delta < 0.0) throw config_error("delta must be nonnegative");
    if (sweeps < 1) throw config_error("sweeps must be >= 1");
    if (quantize_step < 0.0 || quantize_step > 2.0)
        throw config_error("quantize_step must lie in [0, 2]");
    FactorDistribution::named(p0_name).validate();
    FactorDistribution::named(q0_name).validate();
    for (double a : alpha_grid)
        if (!(a > 0.0)) throw config_error("alpha must be positive");
    for (double e : epsilon_grid)
        if (!(e > 0.0)) throw config_error("epsilon must be positive");
    for (std::size_t n : n_grid)
        if (n < 1) throw config_error("n must be >= 1");
    for (std::size_t rr : r_grid)
        if (rr < 1) throw config_error("rank must be >= 1");
}

namespace {

nlohmann::json spec_to_json(const ExperimentSpec& s) {
    nlohmann::json j;
    j["n"] = s.n_grid;
    j["alpha"] = s.alpha_grid;
    j["r"] = s.r_grid;
    j["epsilon"] = s.epsilon_grid;
    j["algorithm"] = algorithm_name(s.algorithm);
    j["p0"] = s.p0_name;
    j["q0"] = s.q0_name;
    j["instances"] = s.instances_per_point;
    j["seed"] = s.seed_base;
    j["delta"] = s.delta;
    j["rho"] = s.rho;
    j["max_steps"] = s.max_steps;
    j["target_cost"] = s.target_cost;
    j["quantize_step"] = s.quantize_step;
    j["lambda"] = s.lambda;
    j["sweeps"] = s.sweeps;
    j["init_scale"] = s.init_scale;
    j["holdout"] = s.holdout;
    return j;
}

}  // namespace

std::string ExperimentSpec::canonical_json() const {
    return spec_to_json(*this).dump();  // object keys are stored sorted
}

ExperimentSpec ExperimentSpec::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("bad spec JSON: ") + e.what());
    }
    if (!j.is_object()) throw config_error("spec JSON must be an object");

    ExperimentSpec s;
    auto grab = [&](const char* key, auto& target) {
        if (!j.contains(key)) return;
        try {
            j.at(key).get_to(target);
        } catch (const nlohmann::json::exception&) {
            throw config_error(std::string("bad spec value for '") + key + "'");
        }
        j.erase(key);
    };
    // Grid keys accept a scalar or an array.
    auto grab_grid = [&](const char* key, auto& grid) {
        if (!j.contains(key)) return;
        using Elem = typename std::decay_t<decltype(grid)>::value_type;
        try {
            if (j.at(key).is_array())
                j.at(key).get_to(grid);
            else
                grid = {j.at(key).get<Elem>()};
        } catch (const nlohmann::json::exception&) {
            throw config_error(std::string("bad spec value for '") + key + "'");
        }
        j.erase(key);
    };
    grab_grid("n", s.n_grid);
    grab_grid("alpha", s.alpha_grid);
    grab_grid("r", s.r_grid);
    grab_grid("epsilon", s.epsilon_grid);
    std::string algo = algorithm_name(s.algorithm);
    grab("algorithm", algo);
    s.algorithm = algorithm_from_name(algo);
    grab("p0", s.p0_name);
    grab("q0", s.q0_name);
    grab("instances", s.instances_per_point);
    grab("seed", s.seed_base);
    grab("jobs", s.jobs);
    grab("timings", s.timings);
    grab("output", s.output);
    grab("delta", s.delta);
    grab("rho", s.rho);
    grab("max_steps", s.max_steps);
    grab("target_cost", s.target_cost);
    grab("quantize_step", s.quantize_step);
    grab("lambda", s.lambda);
    grab("sweeps", s.sweeps);
    grab("init_scale", s.init_scale);
    grab("holdout", s.holdout);
    if (!j.empty())
        throw config_error("unknown spec key: " + j.begin().key());
    return s;
}

ExperimentSpec ExperimentSpec::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open spec file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string format_double(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc()) throw numerical_error("double formatting failed");
    return std::string(buf, end);
}

namespace {

std::string fnv_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 0; i < 16; ++i) buf[i] = hex[(h >> (60 - 4 * i)) & 0xF];
    buf[16] = '\0';
    return buf;
}

struct PointBounds {
    std::optional<double> theorem1, discrete, lower, rank1opt;
};

PointBounds point_bounds(const ExperimentSpec& spec, std::size_t r, double alpha,
                         double epsilon) {
    PointBounds out;
    FactorDistribution p0 = FactorDistribution::named(spec.p0_name);
    FactorDistribution q0 = FactorDistribution::named(spec.q0_name);
    double delta = spec.algorithm == Algorithm::walkrank ? spec.delta : 0.0;

    BoundInputs inputs;
    inputs.r = r;
    inputs.epsilon = epsilon;
    inputs.alpha = alpha;
    inputs.delta_tol = delta;
    inputs.p0 = p0;
    inputs.q0 = q0;
    out.theorem1 = theorem1_bound(inputs).value;
    if (p0.is_discrete() && q0.is_discrete()) {
        if (p0.alphabet.size() == q0.alphabet.size())
            out.discrete = discrete_alphabet_bound(r, p0.alphabet.size(),
                                                   inputs.eps_tilde(), delta);
        try {
            out.lower = lower_bound(inputs).value;
        } catch (const config_error&) {
            // enumeration guard tripped; leave the column empty
        }
    }
    if (r == 1)
        out.rank1opt = rank1_optimal_distortion(epsilon, alpha, rank1_baseline_d0(p0, q0));
    return out;
}

struct RunOutcome {
    ExperimentRow row;
    bool failed = false;
};

RunOutcome run_single(const ExperimentSpec& spec, std::size_t n, double alpha, std::size_t r,
                      double epsilon, std::uint64_t seed, const PointBounds& bounds) {
    RunOutcome out;
    ExperimentRow& row = out.row;
    row.n = n;
    row.alpha = alpha;
    row.r = r;
    row.epsilon = epsilon;
    row.algorithm = algorithm_name(spec.algorithm);
    row.seed = seed;
    row.bound_theorem1 = bounds.theorem1;
    row.bound_discrete = bounds.discrete;
    row.bound_lower = bounds.lower;
    row.bound_rank1opt = bounds.rank1opt;

    try {
        FactorDistribution p0 = FactorDistribution::named(spec.p0_name);
        FactorDistribution q0 = FactorDistribution::named(spec.q0_name);
        GroundTruthInstance truth = generate_instance(n, alpha, r, p0, q0, seed);
        row.m = truth.m;
        ObservationSet obs = sample_observations(truth, epsilon, seed);

        DistortionReport report;
        switch (spec.algorithm) {
            case Algorithm::rank1: {
                Rank1Completion comp = complete_rank1(obs);
                report = rank1_report(truth, comp, obs);
                break;
            }
            case Algorithm::walkrank: {
                WalkRankConfig cfg;
                cfg.delta = spec.delta;
                cfg.rho = spec.rho;
                cfg.max_steps = spec.max_steps;
                cfg.target_cost = spec.target_cost;
                cfg.seed = seed;
                if (spec.quantize_step > 0.0) {
                    cfg = quantized_config(cfg, r, spec.quantize_step);
                } else if (p0.is_discrete()) {
                    cfg.alphabet = p0.alphabet;
                } else {
                    throw config_error(
                        "walkrank on continuous factors needs quantize_step > 0");
                }
                report = run_walkrank(truth, obs, cfg).second;
                break;
            }
            case Algorithm::als: {
                DescentConfig cfg;
                cfg.r = r;
                cfg.lambda = spec.lambda;
                cfg.sweeps = spec.sweeps;
                cfg.init_scale = spec.init_scale;
                cfg.seed = seed;
                ObservationSet keep, held;
                if (spec.holdout > 0) {
                    std::tie(keep, held) = split_holdout(obs, spec.holdout, seed);
                    cfg.holdout = &held;
                    report = run_descent(truth, keep, cfg).report;
                } else {
                    report = run_descent(truth, obs, cfg).report;
                }
                break;
            }
        }
        auto keep_finite = [](double x) -> std::optional<double> {
            if (std::isnan(x)) return std::nullopt;
            return x;
        };
        row.rmse = keep_finite(report.rmse);
        row.fit_error = keep_finite(report.fit_error);
        row.prediction_error = keep_finite(report.prediction_error);
        row.steps = report.steps;
        if (spec.timings) row.wall_ms = report.wall_ms;
    } catch (const error& e) {
        if (row.m == 0) row.m = column_count(n, alpha);
        row.error = e.what();
        out.failed = true;
    }
    return out;
}

void append_row(std::string& csv, const ExperimentRow& row, const std::string& config_hash) {
    auto num = [](const std::optional<double>& x) {
        return x ? format_double(*x) : std::string();
    };
    csv += std::to_string(row.n);
    csv += ',';
    csv += std::to_string(row.m);
    csv += ',';
    csv += format_double(row.alpha);
    csv += ',';
    csv += std::to_string(row.r);
    csv += ',';
    csv += format_double(row.epsilon);
    csv += ',';
    csv += csv_escape(row.algorithm);
    csv += ',';
    csv += std::to_string(row.seed);
    csv += ',';
    csv += num(row.rmse);
    csv += ',';
    csv += num(row.fit_error);
    csv += ',';
    csv += num(row.prediction_error);
    csv += ',';
    csv += row.steps ? std::to_string(*row.steps) : std::string();
    csv += ',';
    csv += num(row.wall_ms);
    csv += ',';
    csv += num(row.bound_theorem1);
    csv += ',';
    csv += num(row.bound_discrete);
    csv += ',';
    csv += num(row.bound_lower);
    csv += ',';
    csv += csv_escape(row.error);
    csv += ',';
    csv += num(row.bound_rank1opt);
    csv += ',';
    csv += config_hash;
    csv += ',';
    csv += kVersion;
    csv += '\n';
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();

    struct Point {
        std::size_t n, r;
        double alpha, epsilon;
        PointBounds bounds;
    };
    std::vector<Point> points;
    for (std::size_t n : spec.n_grid)
        for (double alpha : spec.alpha_grid)
            for (std::size_t r : spec.r_grid)
                for (double epsilon : spec.epsilon_grid)
                    points.push_back({n, r, alpha, epsilon, {}});
    for (Point& p : points) p.bounds = point_bounds(spec, p.r, p.alpha, p.epsilon);

    ExperimentResult result;
    result.config_hash = fnv_hash(spec.canonical_json());
    std::size_t total = points.size() * spec.instances_per_point;
    result.rows.resize(total);
    std::vector<char> failed(total, 0);
    parallel_for(spec.jobs, total, [&](std::size_t run) {
        const Point& p = points[run / spec.instances_per_point];
        std::uint64_t seed = rng::derive(spec.seed_base, rng::Stream::experiment, run);
        RunOutcome outcome =
            run_single(spec, p.n, p.alpha, p.r, p.epsilon, seed, p.bounds);
        result.rows[run] = std::move(outcome.row);
        failed[run] = outcome.failed ? 1 : 0;
    });
    for (char f : failed) result.failed_runs += f;

    const char* header =
        "n,m,alpha,r,epsilon,algorithm,seed,rmse,fit_error,prediction_error,steps,"
        "wall_ms,bound_theorem1,bound_discrete,bound_lower,error,bound_rank1opt,"
        "config_hash,version\n";
    result.csv = header;
    for (const ExperimentRow& row : result.rows)
        append_row(result.csv, row, result.config_hash);

    // Per-point mean/stderr companion table over the successful runs.
    result.aggregate_csv =
        "n,m,alpha,r,epsilon,algorithm,instances,failures,rmse_mean,rmse_stderr,"
        "fit_mean,fit_stderr,pred_mean,pred_stderr,steps_mean,bound_theorem1,"
        "bound_discrete,bound_lower,bound_rank1opt,config_hash,version\n";
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
        const Point& p = points[pi];
        auto begin = pi * spec.instances_per_point;
        auto stat = [&](auto field) -> std::pair<std::optional<double>, std::optional<double>> {
            double sum = 0.0, sum2 = 0.0;
            std::size_t k = 0;
            for (std::size_t e = 0; e < spec.instances_per_point; ++e) {
                const auto& value = field(result.rows[begin + e]);
                if (!value) continue;
                sum += *value;
                sum2 += *value * *value;
                ++k;
            }
            if (k == 0) return {std::nullopt, std::nullopt};
            double mean = sum / static_cast<double>(k);
            if (k == 1) return {mean, std::nullopt};
            double var = std::max(sum2 - static_cast<double>(k) * mean * mean, 0.0) /
                         static_cast<double>(k - 1);
            return {mean, std::sqrt(var / static_cast<double>(k))};
        };
        auto [rmse_m, rmse_s] = stat([](const ExperimentRow& r) { return r.rmse; });
        auto [fit_m, fit_s] = stat([](const ExperimentRow& r) { return r.fit_error; });
        auto [pred_m, pred_s] =
            stat([](const ExperimentRow& r) { return r.prediction_error; });
        auto [steps_m, steps_s] = stat([](const ExperimentRow& r) {
            return r.steps ? std::optional<double>(static_cast<double>(*r.steps))
                           : std::nullopt;
        });
        (void)steps_s;
        std::size_t fails = 0;
        for (std::size_t e = 0; e < spec.instances_per_point; ++e)
            if (!result.rows[begin + e].error.empty()) ++fails;

        auto num = [](const std::optional<double>& x) {
            return x ? format_double(*x) : std::string();
        };
        std::string& agg = result.aggregate_csv;
        agg += std::to_string(p.n);
        agg += ',';
        agg += std::to_string(result.rows[begin].m);
        agg += ',';
        agg += format_double(p.alpha);
        agg += ',';
        agg += std::to_string(p.r);
        agg += ',';
        agg += format_double(p.epsilon);
        agg += ',';
        agg += algorithm_name(spec.algorithm);
        agg += ',';
        agg += std::to_string(spec.instances_per_point);
        agg += ',';
        agg += std::to_string(fails);
        agg += ',';
        agg += num(rmse_m);
        agg += ',';
        agg += num(rmse_s);
        agg += ',';
        agg += num(fit_m);
        agg += ',';
        agg += num(fit_s);
        agg += ',';
        agg += num(pred_m);
        agg += ',';
        agg += num(pred_s);
        agg += ',';
        agg += num(steps_m);
        agg += ',';
        agg += num(p.bounds.theorem1);
        agg += ',';
        agg += num(p.bounds.discrete);
        agg += ',';
        agg += num(p.bounds.lower);
        agg += ',';
        agg += num(p.bounds.rank1opt);
        agg += ',';
        agg += result.config_hash;
        agg += ',';
        agg += kVersion;
        agg += '\n';
    }
    return result;
}

}  // namespace mclab
