// Command-line front door for the matrix-completion laboratory.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mclab/harness.hpp"
#include "mclab/rank1.hpp"

namespace {

using nlohmann::json;

struct GlobalOpts {
    std::uint64_t seed = 0;
    std::string out;             // empty -> stdout
    std::string format = "csv";  // csv | json
    unsigned jobs = 1;
    bool timings = false;
};

struct InstanceOpts {
    std::size_t n = 1000;
    double alpha = 1.0;
    std::size_t r = 1;
    std::string p0 = "pm1";
    std::string q0 = "pm1";
};

struct TripleOpts {
    std::string path;
    std::string delimiter = "space";
    int index_base = 0;
    std::vector<double> range{-1.0, 1.0};
};

void add_instance_opts(CLI::App* cmd, InstanceOpts& o) {
    cmd->add_option("--n", o.n, "number of rows");
    cmd->add_option("--alpha", o.alpha, "columns per row (m = round(n*alpha))");
    cmd->add_option("--r", o.r, "rank of the ground truth");
    cmd->add_option("--p0", o.p0, "row factor law: pm1, ternary, uniform, alphabetN");
    cmd->add_option("--q0", o.q0, "column factor law");
}

void add_triple_opts(CLI::App* cmd, TripleOpts& o, bool required) {
    auto* in = cmd->add_option("--in", o.path, "triple file to ingest");
    if (required) in->required();
    cmd->add_option("--delimiter", o.delimiter, "space, comma, tab, or a single character");
    cmd->add_option("--index-base", o.index_base, "0 or 1")->check(CLI::Range(0, 1));
    cmd->add_option("--range", o.range, "source value range lo hi")->expected(2);
}

mclab::TripleFormat triple_format(const TripleOpts& o) {
    mclab::TripleFormat fmt;
    if (o.delimiter == "space" || o.delimiter == "whitespace" || o.delimiter.empty())
        fmt.delimiter = 0;
    else if (o.delimiter == "comma")
        fmt.delimiter = ',';
    else if (o.delimiter == "tab")
        fmt.delimiter = '\t';
    else if (o.delimiter.size() == 1)
        fmt.delimiter = o.delimiter[0];
    else
        throw mclab::config_error("unrecognized delimiter: " + o.delimiter);
    fmt.index_base = o.index_base;
    if (!(o.range[0] < o.range[1]))
        throw mclab::config_error("value range must have lo < hi");
    fmt.value_range = {o.range[0], o.range[1]};
    return fmt;
}

void write_output(const std::string& out, const std::string& text) {
    if (out.empty()) {
        std::fwrite(text.data(), 1, text.size(), stdout);
        return;
    }
    std::ofstream f(out, std::ios::binary);
    if (!f) throw mclab::data_error("cannot open output file: " + out);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw mclab::data_error("failed writing output file: " + out);
}

std::string render_json(const json& j) { return j.dump(2) + "\n"; }

mclab::GroundTruthInstance build_instance(const InstanceOpts& o, std::uint64_t seed) {
    return mclab::generate_instance(o.n, o.alpha, o.r,
                                    mclab::FactorDistribution::named(o.p0),
                                    mclab::FactorDistribution::named(o.q0), seed);
}

std::string render_triples(const mclab::ObservationSet& obs) {
    std::string text = "# rows " + std::to_string(obs.n) + " cols " +
                       std::to_string(obs.m) + "\n";
    for (std::size_t e = 0; e < obs.size(); ++e) {
        text += std::to_string(obs.edges[e].first);
        text += ' ';
        text += std::to_string(obs.edges[e].second);
        text += ' ';
        text += mclab::format_double(obs.values[e]);
        text += '\n';
    }
    return text;
}

int cmd_generate(const GlobalOpts& g, const InstanceOpts& inst) {
    mclab::GroundTruthInstance truth = build_instance(inst, g.seed);
    if (g.format == "json") {
        json j;
        j["n"] = truth.n;
        j["m"] = truth.m;
        j["alpha"] = truth.alpha;
        j["r"] = truth.r;
        j["seed"] = truth.seed;
        j["p0"] = truth.p0.name;
        j["q0"] = truth.q0.name;
        j["u"] = truth.u;
        j["v"] = truth.v;
        write_output(g.out, render_json(j));
    } else {
        std::string text = "i,a,value\n";
        for (std::size_t i = 0; i < truth.n; ++i)
            for (std::size_t a = 0; a < truth.m; ++a) {
                text += std::to_string(i);
                text += ',';
                text += std::to_string(a);
                text += ',';
                text += mclab::format_double(truth.entry(i, a));
                text += '\n';
            }
        write_output(g.out, text);
    }
    return 0;
}

int cmd_sample(const GlobalOpts& g, const InstanceOpts& inst, double epsilon) {
    mclab::GroundTruthInstance truth = build_instance(inst, g.seed);
    mclab::ObservationSet obs = mclab::sample_observations(truth, epsilon, g.seed);
    if (g.format == "json") {
        json entries = json::array();
        for (std::size_t e = 0; e < obs.size(); ++e)
            entries.push_back({obs.edges[e].first, obs.edges[e].second, obs.values[e]});
        json j;
        j["n"] = obs.n;
        j["m"] = obs.m;
        j["epsilon"] = obs.epsilon;
        j["entries"] = entries;
        write_output(g.out, render_json(j));
    } else {
        write_output(g.out, render_triples(obs));
    }
    return 0;
}

struct CompleteOpts {
    InstanceOpts inst;
    TripleOpts triples;
    double epsilon = 2.0;
    std::string algorithm = "rank1";
    std::size_t fit_rank = 0;  // 0 -> instance rank
    // walkrank
    double delta = 0.0;
    double rho = 0.1;
    std::uint64_t max_steps = 0;
    std::uint64_t target_cost = 0;
    double quantize_step = 0.0;
    // als
    double lambda = -1.0;
    std::size_t sweeps = 50;
    double init_scale = 0.5;
    std::size_t holdout = 0;
};

json report_to_json(const mclab::DistortionReport& rep, bool timings) {
    json j;
    auto put = [&](const char* key, double x) {
        if (!std::isnan(x)) j[key] = x;
    };
    put("rmse", rep.rmse);
    put("fit_error", rep.fit_error);
    put("prediction_error", rep.prediction_error);
    j["steps"] = rep.steps;
    if (timings) j["wall_ms"] = rep.wall_ms;
    if (!rep.cost_trajectory.empty()) {
        json traj = json::array();
        for (auto [step, cost] : rep.cost_trajectory) traj.push_back({step, cost});
        j["trajectory"] = traj;
    }
    return j;
}

int cmd_complete(const GlobalOpts& g, const CompleteOpts& o) {
    std::optional<mclab::GroundTruthInstance> truth;
    mclab::ObservationSet obs;
    std::size_t rank = o.fit_rank;
    if (!o.triples.path.empty()) {
        mclab::RatingTriples triples = mclab::ingest_triples(o.triples.path, triple_format(o.triples));
        obs = mclab::observations_from_triples(triples);
        if (rank == 0) rank = o.inst.r;
    } else {
        truth = build_instance(o.inst, g.seed);
        obs = mclab::sample_observations(*truth, o.epsilon, g.seed);
        if (rank == 0) rank = truth->r;
    }

    mclab::Algorithm algo = mclab::algorithm_from_name(o.algorithm);
    mclab::DistortionReport rep;
    json extra = json::object();
    switch (algo) {
        case mclab::Algorithm::rank1: {
            mclab::Rank1Completion comp = mclab::complete_rank1(obs);
            if (truth) {
                rep = mclab::rank1_report(*truth, comp, obs);
            } else {
                double ss = 0.0;
                for (std::size_t e = 0; e < obs.size(); ++e) {
                    double d = comp.entry(obs.edges[e].first, obs.edges[e].second) -
                               obs.values[e];
                    ss += d * d;
                }
                rep.fit_error = std::sqrt(ss / static_cast<double>(obs.size()));
                rep.rmse = std::nan("");
                rep.prediction_error = std::nan("");
            }
            extra["determined_fraction"] = comp.determined_fraction();
            break;
        }
        case mclab::Algorithm::walkrank: {
            mclab::WalkRankConfig cfg;
            cfg.delta = o.delta;
            cfg.rho = o.rho;
            cfg.max_steps = o.max_steps;
            cfg.target_cost = o.target_cost;
            cfg.seed = g.seed;
            mclab::FactorDistribution p0 = mclab::FactorDistribution::named(o.inst.p0);
            if (o.quantize_step > 0.0)
                cfg = mclab::quantized_config(cfg, rank, o.quantize_step);
            else if (truth && p0.is_discrete())
                cfg.alphabet = p0.alphabet;
            else if (!truth)
                throw mclab::config_error(
                    "ingested data needs --quantize-step for this search");
            if (truth)
                rep = mclab::run_walkrank(*truth, obs, cfg).second;
            else
                rep = mclab::run_walkrank(obs, rank, cfg).second;
            break;
        }
        case mclab::Algorithm::als: {
            mclab::DescentConfig cfg;
            cfg.r = rank;
            cfg.lambda = o.lambda;
            cfg.sweeps = o.sweeps;
            cfg.init_scale = o.init_scale;
            cfg.seed = g.seed;
            cfg.jobs = g.jobs;
            mclab::ObservationSet keep = obs, held;
            if (o.holdout > 0) {
                std::tie(keep, held) = mclab::split_holdout(obs, o.holdout, g.seed);
                cfg.holdout = &held;
            }
            mclab::DescentResult res = truth ? mclab::run_descent(*truth, keep, cfg)
                                             : mclab::run_descent(keep, cfg);
            rep = res.report;
            extra["lambda_used"] = res.lambda_used;
            json traj = json::array();
            for (const mclab::SweepStats& s : res.trajectory) {
                json row;
                row["fit_error"] = s.fit_error;
                if (!std::isnan(s.prediction_error))
                    row["prediction_error"] = s.prediction_error;
                row["energy"] = s.energy;
                traj.push_back(row);
            }
            extra["trajectory"] = traj;
            break;
        }
    }

    if (g.format == "json") {
        json j;
        j["algorithm"] = o.algorithm;
        j["n"] = obs.n;
        j["m"] = obs.m;
        j["r"] = rank;
        j["epsilon"] = obs.epsilon;
        j["seed"] = g.seed;
        json body = report_to_json(rep, g.timings);
        j.update(body);
        j.update(extra);
        write_output(g.out, render_json(j));
    } else {
        std::string text =
            "algorithm,n,m,r,epsilon,seed,rmse,fit_error,prediction_error,steps,wall_ms\n";
        auto num = [](double x) { return std::isnan(x) ? std::string() : mclab::format_double(x); };
        text += o.algorithm;
        text += ',' + std::to_string(obs.n) + ',' + std::to_string(obs.m) + ',' +
                std::to_string(rank) + ',' + mclab::format_double(obs.epsilon) + ',' +
                std::to_string(g.seed) + ',' + num(rep.rmse) + ',' + num(rep.fit_error) +
                ',' + num(rep.prediction_error) + ',' + std::to_string(rep.steps) + ',' +
                (g.timings ? mclab::format_double(rep.wall_ms) : std::string()) + '\n';
        write_output(g.out, text);
    }
    return 0;
}

struct BoundOpts {
    std::size_t r = 1;
    double epsilon = 2.0;
    double alpha = 1.0;
    double delta = 0.0;
    std::string p0 = "pm1";
    std::string q0 = "pm1";
    double quantize_step = 0.0;
    bool tight = false;
    std::size_t starts = 32;
    std::size_t rounds = 3;
    bool literal_mean = false;
};

int cmd_bounds(const GlobalOpts& g, const BoundOpts& o) {
    mclab::BoundInputs inputs;
    inputs.r = o.r;
    inputs.epsilon = o.epsilon;
    inputs.alpha = o.alpha;
    inputs.delta_tol = o.delta;
    inputs.p0 = mclab::FactorDistribution::named(o.p0);
    inputs.q0 = mclab::FactorDistribution::named(o.q0);
    inputs.validate();

    json j;
    j["r"] = o.r;
    j["epsilon"] = o.epsilon;
    j["alpha"] = o.alpha;
    j["delta"] = o.delta;
    j["eps_tilde"] = inputs.eps_tilde();
    mclab::BoundValue t1 = mclab::theorem1_bound(inputs);
    j["theorem1"] = t1.value;
    j["theorem1_trivial"] = t1.trivial;

    bool discrete = inputs.p0.is_discrete() && inputs.q0.is_discrete();
    if (discrete) {
        const mclab::DiscreteAlphabet& ap = inputs.p0.alphabet;
        const mclab::DiscreteAlphabet& aq = inputs.q0.alphabet;
        if (ap.points == aq.points) {
            j["discrete"] = mclab::discrete_alphabet_bound(o.r, ap.size(),
                                                           inputs.eps_tilde(), o.delta);
            mclab::BoundValue simp = mclab::simplified_upper_bound(
                mclab::entropy_gap_bound(ap, o.r), mclab::entropy_gap_bound(aq, o.r),
                mclab::max_product_deviation(ap, o.r), inputs);
            j["simplified"] = simp.value;
        }
        mclab::LowerBoundValue lo = mclab::lower_bound(inputs, o.literal_mean);
        j["lower"] = lo.value;
        j["lower_coarse"] = lo.coarse;
        j["xi"] = lo.xi;
        j["zeta"] = lo.zeta;
        j["c_tilde"] = lo.c_tilde;
    }
    if (o.quantize_step > 0.0) {
        mclab::ContinuousBound c =
            mclab::continuous_bound(o.r, inputs.eps_tilde(), o.delta, o.quantize_step);
        j["continuous"] = c.value;
        j["continuous_points"] = c.n_points;
    } else if (!discrete) {
        mclab::ContinuousBound c =
            mclab::continuous_bound_preset(o.r, inputs.eps_tilde(), o.delta);
        j["continuous"] = c.value;
        j["continuous_points"] = c.n_points;
        j["continuous_step"] = c.delta_step;
    }
    if (o.tight) {
        if (!discrete)
            throw mclab::config_error("the tight bound needs discrete factor laws");
        mclab::TightBoundOptions opts;
        opts.starts = o.starts;
        opts.rounds = o.rounds;
        opts.seed = g.seed;
        opts.jobs = g.jobs;
        mclab::TightBoundValue tv = mclab::tight_upper_bound(inputs, opts);
        j["tight"] = tv.value;
        j["tight_phi"] = tv.phi_residual;
    }

    if (g.format == "json") {
        write_output(g.out, render_json(j));
    } else {
        static const char* cols[] = {"r",       "epsilon",     "alpha",
                                     "delta",   "eps_tilde",   "theorem1",
                                     "simplified", "discrete", "continuous",
                                     "lower",   "lower_coarse", "tight"};
        std::string head, row;
        for (const char* c : cols) {
            if (!head.empty()) {
                head += ',';
                row += ',';
            }
            head += c;
            if (j.contains(c)) {
                const json& v = j.at(c);
                row += v.is_number_integer()
                           ? std::to_string(v.get<long long>())
                           : mclab::format_double(v.get<double>());
            }
        }
        write_output(g.out, head + "\n" + row + "\n");
    }
    return 0;
}

int cmd_experiment(const GlobalOpts& g, mclab::ExperimentSpec spec) {
    spec.jobs = g.jobs;
    spec.timings = g.timings;
    if (!g.out.empty()) spec.output = g.out;
    mclab::ExperimentResult result = mclab::run_experiment(spec);
    if (g.format == "json") {
        json rows = json::array();
        for (const mclab::ExperimentRow& r : result.rows) {
            json row;
            row["n"] = r.n;
            row["m"] = r.m;
            row["alpha"] = r.alpha;
            row["r"] = r.r;
            row["epsilon"] = r.epsilon;
            row["algorithm"] = r.algorithm;
            row["seed"] = r.seed;
            auto put = [&](const char* key, const std::optional<double>& x) {
                if (x) row[key] = *x;
            };
            put("rmse", r.rmse);
            put("fit_error", r.fit_error);
            put("prediction_error", r.prediction_error);
            if (r.steps) row["steps"] = *r.steps;
            put("wall_ms", r.wall_ms);
            put("bound_theorem1", r.bound_theorem1);
            put("bound_discrete", r.bound_discrete);
            put("bound_lower", r.bound_lower);
            put("bound_rank1opt", r.bound_rank1opt);
            if (!r.error.empty()) row["error"] = r.error;
            rows.push_back(row);
        }
        json j;
        j["config_hash"] = result.config_hash;
        j["version"] = mclab::kVersion;
        j["failed_runs"] = result.failed_runs;
        j["rows"] = rows;
        write_output(spec.output, render_json(j));
    } else {
        write_output(spec.output, result.csv);
        if (!spec.output.empty()) {
            std::filesystem::path p(spec.output);
            std::filesystem::path agg = p.parent_path() / (p.stem().string() + ".agg" +
                                                           p.extension().string());
            write_output(agg.string(), result.aggregate_csv);
        }
    }
    if (result.failed_runs > 0)
        std::cerr << result.failed_runs << " run(s) recorded an error\n";
    return 0;
}

struct CompareOpts {
    TripleOpts triples;
    std::size_t rank = 3;
    std::size_t fit_rank = 0;  // 0 -> rank
    double lambda = -1.0;
    std::size_t sweeps = 50;
    double init_scale = 0.5;
    std::size_t holdout = 0;  // 0 -> |E| / 10
};

int cmd_compare(const GlobalOpts& g, const CompareOpts& o) {
    mclab::RatingTriples triples = mclab::ingest_triples(o.triples.path, triple_format(o.triples));
    std::array<mclab::ObservationSet, 3> sets =
        mclab::make_comparison_matrices(triples, o.rank, g.seed);
    static const char* names[3] = {"data", "iid", "lowrank"};

    std::size_t holdout = o.holdout > 0 ? o.holdout : sets[0].size() / 10;
    if (holdout == 0 || holdout >= sets[0].size())
        throw mclab::config_error("holdout must leave entries on both sides");

    mclab::DescentConfig cfg;
    cfg.r = o.fit_rank > 0 ? o.fit_rank : o.rank;
    cfg.lambda = o.lambda;
    cfg.sweeps = o.sweeps;
    cfg.init_scale = o.init_scale;
    cfg.seed = g.seed;
    cfg.jobs = g.jobs;

    json per_matrix = json::object();
    std::string csv = "matrix,sweep,fit_error,prediction_error,energy\n";
    for (int s = 0; s < 3; ++s) {
        auto [keep, held] = mclab::split_holdout(sets[s], holdout, g.seed);
        cfg.holdout = &held;
        mclab::DescentResult res = mclab::run_descent(keep, cfg);
        json traj = json::array();
        for (std::size_t t = 0; t < res.trajectory.size(); ++t) {
            const mclab::SweepStats& st = res.trajectory[t];
            traj.push_back({st.fit_error, st.prediction_error, st.energy});
            csv += names[s];
            csv += ',' + std::to_string(t + 1) + ',' + mclab::format_double(st.fit_error) +
                   ',' + mclab::format_double(st.prediction_error) + ',' +
                   mclab::format_double(st.energy) + '\n';
        }
        per_matrix[names[s]] = traj;
    }

    if (g.format == "json") {
        json j;
        j["rows"] = sets[0].n;
        j["cols"] = sets[0].m;
        j["entries"] = sets[0].size();
        j["rank"] = o.rank;
        j["fit_rank"] = cfg.r;
        j["holdout"] = holdout;
        j["seed"] = g.seed;
        j["trajectories"] = per_matrix;
        write_output(g.out, render_json(j));
    } else {
        write_output(g.out, csv);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"matrix-completion laboratory"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--seed", g.seed, "base seed for all randomness");
    app.add_option("--out", g.out, "output path (default: stdout)");
    app.add_option("--format", g.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--timings", g.timings, "fill wall-clock columns (non-deterministic)");

    InstanceOpts gen_inst;
    CLI::App* gen = app.add_subcommand("generate", "emit a random low-rank instance");
    add_instance_opts(gen, gen_inst);

    InstanceOpts sample_inst;
    double sample_epsilon = 2.0;
    CLI::App* sample = app.add_subcommand("sample", "emit sampled entries of an instance");
    add_instance_opts(sample, sample_inst);
    sample->add_option("--epsilon", sample_epsilon, "observed entries per row");

    CompleteOpts comp;
    CLI::App* complete = app.add_subcommand("complete", "reconstruct from sampled entries");
    add_instance_opts(complete, comp.inst);
    add_triple_opts(complete, comp.triples, false);
    complete->add_option("--epsilon", comp.epsilon, "observed entries per row (synthetic)");
    complete->add_option("--algorithm", comp.algorithm, "rank1, walkrank, or als")
        ->check(CLI::IsMember({"rank1", "walkrank", "als"}));
    complete->add_option("--fit-rank", comp.fit_rank, "fitted rank (default: instance rank)");
    complete->add_option("--delta", comp.delta, "violation tolerance");
    complete->add_option("--rho", comp.rho, "walk-move probability");
    complete->add_option("--max-steps", comp.max_steps, "step budget (0 = auto)");
    complete->add_option("--target-cost", comp.target_cost, "stop at this violation count");
    complete->add_option("--quantize-step", comp.quantize_step,
                         "grid step for quantized search (0 = factor alphabet)");
    complete->add_option("--lambda", comp.lambda, "ridge weight (<0 = auto)");
    complete->add_option("--sweeps", comp.sweeps, "descent sweeps");
    complete->add_option("--init-scale", comp.init_scale, "initial factor amplitude");
    complete->add_option("--holdout", comp.holdout, "entries withheld for prediction error");

    BoundOpts bnd;
    CLI::App* bounds = app.add_subcommand("bounds", "evaluate the analytic distortion bounds");
    bounds->add_option("--r", bnd.r, "rank");
    bounds->add_option("--epsilon", bnd.epsilon, "observed entries per row");
    bounds->add_option("--alpha", bnd.alpha, "columns per row");
    bounds->add_option("--delta", bnd.delta, "admissible per-entry deviation");
    bounds->add_option("--p0", bnd.p0, "row factor law");
    bounds->add_option("--q0", bnd.q0, "column factor law");
    bounds->add_option("--quantize-step", bnd.quantize_step,
                       "evaluate the quantization bound at this step");
    bounds->add_flag("--tight", bnd.tight, "run the coupling optimizer");
    bounds->add_option("--starts", bnd.starts, "optimizer restarts");
    bounds->add_option("--rounds", bnd.rounds, "optimizer alternation rounds");
    bounds->add_flag("--literal-mean", bnd.literal_mean,
                     "unsquared residual in the lower-bound constant");

    mclab::ExperimentSpec spec;
    std::string spec_path;
    std::vector<std::size_t> exp_n, exp_r;
    std::vector<double> exp_alpha, exp_epsilon;
    std::string exp_algorithm;
    CLI::App* experiment = app.add_subcommand("experiment", "run a sweep to CSV");
    experiment->add_option("--spec", spec_path, "JSON spec file (flags override)");
    experiment->add_option("--n", exp_n, "row counts");
    experiment->add_option("--alpha", exp_alpha, "aspect ratios");
    experiment->add_option("--r", exp_r, "ranks");
    experiment->add_option("--epsilon", exp_epsilon, "observations per row");
    experiment->add_option("--algorithm", exp_algorithm, "rank1, walkrank, or als")
        ->check(CLI::IsMember({"rank1", "walkrank", "als"}));
    std::optional<std::size_t> exp_instances;
    experiment->add_option("--instances", exp_instances, "instances per grid point");
    std::optional<std::string> exp_p0, exp_q0;
    experiment->add_option("--p0", exp_p0, "row factor law");
    experiment->add_option("--q0", exp_q0, "column factor law");
    std::optional<double> exp_delta, exp_rho, exp_lambda, exp_init, exp_qstep;
    std::optional<std::uint64_t> exp_max_steps, exp_target;
    std::optional<std::size_t> exp_sweeps, exp_holdout;
    experiment->add_option("--delta", exp_delta, "violation tolerance");
    experiment->add_option("--rho", exp_rho, "walk-move probability");
    experiment->add_option("--max-steps", exp_max_steps, "step budget (0 = auto)");
    experiment->add_option("--target-cost", exp_target, "stop at this violation count");
    experiment->add_option("--quantize-step", exp_qstep, "grid step for quantized search");
    experiment->add_option("--lambda", exp_lambda, "ridge weight (<0 = auto)");
    experiment->add_option("--sweeps", exp_sweeps, "descent sweeps");
    experiment->add_option("--init-scale", exp_init, "initial factor amplitude");
    experiment->add_option("--holdout", exp_holdout, "withheld entries per run");

    CompareOpts cmp;
    CLI::App* compare = app.add_subcommand(
        "compare", "fit real data against iid and fresh low-rank matched matrices");
    add_triple_opts(compare, cmp.triples, true);
    compare->add_option("--rank", cmp.rank, "rank of the fresh comparison instance");
    compare->add_option("--fit-rank", cmp.fit_rank, "fitted rank (default: --rank)");
    compare->add_option("--lambda", cmp.lambda, "ridge weight (<0 = auto)");
    compare->add_option("--sweeps", cmp.sweeps, "descent sweeps");
    compare->add_option("--init-scale", cmp.init_scale, "initial factor amplitude");
    compare->add_option("--holdout", cmp.holdout, "withheld entries (0 = a tenth)");

    try {
        app.parse(argc, argv);

        if (gen->parsed()) return cmd_generate(g, gen_inst);
        if (sample->parsed()) return cmd_sample(g, sample_inst, sample_epsilon);
        if (complete->parsed()) return cmd_complete(g, comp);
        if (bounds->parsed()) return cmd_bounds(g, bnd);
        if (experiment->parsed()) {
            if (!spec_path.empty()) spec = mclab::ExperimentSpec::from_json_file(spec_path);
            if (!exp_n.empty()) spec.n_grid = exp_n;
            if (!exp_alpha.empty()) spec.alpha_grid = exp_alpha;
            if (!exp_r.empty()) spec.r_grid = exp_r;
            if (!exp_epsilon.empty()) spec.epsilon_grid = exp_epsilon;
            if (!exp_algorithm.empty())
                spec.algorithm = mclab::algorithm_from_name(exp_algorithm);
            if (exp_instances) spec.instances_per_point = *exp_instances;
            if (exp_p0) spec.p0_name = *exp_p0;
            if (exp_q0) spec.q0_name = *exp_q0;
            if (exp_delta) spec.delta = *exp_delta;
            if (exp_rho) spec.rho = *exp_rho;
            if (exp_max_steps) spec.max_steps = *exp_max_steps;
            if (exp_target) spec.target_cost = *exp_target;
            if (exp_qstep) spec.quantize_step = *exp_qstep;
            if (exp_lambda) spec.lambda = *exp_lambda;
            if (exp_sweeps) spec.sweeps = *exp_sweeps;
            if (exp_init) spec.init_scale = *exp_init;
            if (exp_holdout) spec.holdout = *exp_holdout;
            if (app.count("--seed") > 0) spec.seed_base = g.seed;
            return cmd_experiment(g, spec);
        }
        if (compare->parsed()) return cmd_compare(g, cmp);
        return 1;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const mclab::config_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const mclab::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const mclab::error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected failure: " << e.what() << "\n";
        return 3;
    }
}
