#include "mclab/rank1.hpp"

#include <cmath>
#include <utility>

namespace mclab {

double Rank1Completion::determined_fraction() const {
    double det = 0.0;
    // Tally rows/columns per component; determined pairs live inside one.
    std::vector<std::size_t> rows(comp_sizes.size(), 0), cols(comp_sizes.size(), 0);
    for (std::size_t c : row_comp) ++rows[c];
    for (std::size_t c : col_comp) ++cols[c];
    for (std::size_t c = 0; c < comp_sizes.size(); ++c)
        det += static_cast<double>(rows[c]) * static_cast<double>(cols[c]);
    return det / (static_cast<double>(n) * static_cast<double>(m));
}

Rank1Completion complete_rank1(const ObservationSet& obs) {
    obs.validate();
    for (std::size_t e = 0; e < obs.size(); ++e)
        if (obs.values[e] == 0.0)
            throw data_error("rank-1 completion requires nonzero observed values");

    Rank1Completion out;
    out.n = obs.n;
    out.m = obs.m;
    out.row_logmag.assign(obs.n, 0.0);
    out.col_logmag.assign(obs.m, 0.0);
    out.row_sign.assign(obs.n, 1);
    out.col_sign.assign(obs.m, 1);
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    out.row_comp.assign(obs.n, kNone);
    out.col_comp.assign(obs.m, kNone);

    // CSR adjacency carrying edge ids so propagation can read values.
    std::vector<std::size_t> row_off(obs.n + 1, 0), col_off(obs.m + 1, 0);
    for (auto [i, a] : obs.edges) {
        ++row_off[i + 1];
        ++col_off[a + 1];
    }
    for (std::size_t i = 0; i < obs.n; ++i) row_off[i + 1] += row_off[i];
    for (std::size_t a = 0; a < obs.m; ++a) col_off[a + 1] += col_off[a];
    std::vector<std::uint32_t> row_edge(obs.size()), col_edge(obs.size());
    {
        std::vector<std::size_t> rp(row_off.begin(), row_off.end() - 1);
        std::vector<std::size_t> cp(col_off.begin(), col_off.end() - 1);
        for (std::uint32_t e = 0; e < obs.size(); ++e) {
            auto [i, a] = obs.edges[e];
            row_edge[rp[i]++] = e;
            col_edge[cp[a]++] = e;
        }
    }

    // Checks a settled edge against the propagated factors: signs must agree
    // exactly, log-magnitudes to 1e-9 relative (exact chains, e.g. +-1 data,
    // stay exactly equal).
    auto check_edge = [&](std::uint32_t e) {
        auto [i, a] = obs.edges[e];
        double y = obs.values[e];
        int sign = y > 0.0 ? 1 : -1;
        auto clash = [&] {
            return inconsistency_error("observed entry (" + std::to_string(i) + ", " +
                                           std::to_string(a) +
                                           ") contradicts the connected component",
                                       i, a);
        };
        if (sign != out.row_sign[i] * out.col_sign[a]) throw clash();
        double want = std::log(std::abs(y));
        double have = out.row_logmag[i] + out.col_logmag[a];
        double tol = 1e-9 * std::max(1.0, std::abs(want));
        if (std::abs(have - want) > tol) throw clash();
    };

    std::vector<std::uint32_t> stack;  // vertex << 1 | side (rows even)
    auto explore = [&](bool seed_is_row, std::uint32_t seed_vertex, std::size_t label) {
        ComponentLabeling::Size size;
        stack.clear();
        stack.push_back(seed_vertex << 1 | (seed_is_row ? 0u : 1u));
        // Gauge: the seed vertex gets magnitude 1, sign +.
        if (seed_is_row)
            out.row_comp[seed_vertex] = label;
        else
            out.col_comp[seed_vertex] = label;
        while (!stack.empty()) {
            std::uint32_t code = stack.back();
            stack.pop_back();
            std::uint32_t v = code >> 1;
            if ((code & 1u) == 0) {
                ++size.rows;
                size.edges += row_off[v + 1] - row_off[v];
                for (std::size_t k = row_off[v]; k < row_off[v + 1]; ++k) {
                    std::uint32_t e = row_edge[k];
                    std::uint32_t a = obs.edges[e].second;
                    if (out.col_comp[a] != kNone) {
                        check_edge(e);
                        continue;
                    }
                    double y = obs.values[e];
                    out.col_comp[a] = label;
                    out.col_logmag[a] = std::log(std::abs(y)) - out.row_logmag[v];
                    out.col_sign[a] = static_cast<std::int8_t>((y > 0.0 ? 1 : -1) *
                                                               out.row_sign[v]);
                    stack.push_back(a << 1 | 1u);
                }
            } else {
                ++size.cols;
                for (std::size_t k = col_off[v]; k < col_off[v + 1]; ++k) {
                    std::uint32_t e = col_edge[k];
                    std::uint32_t i = obs.edges[e].first;
                    if (out.row_comp[i] != kNone) {
                        check_edge(e);
                        continue;
                    }
                    double y = obs.values[e];
                    out.row_comp[i] = label;
                    out.row_logmag[i] = std::log(std::abs(y)) - out.col_logmag[v];
                    out.row_sign[i] = static_cast<std::int8_t>((y > 0.0 ? 1 : -1) *
                                                               out.col_sign[v]);
                    stack.push_back(i << 1);
                }
            }
        }
        return size;
    };

    for (std::uint32_t i = 0; i < obs.n; ++i)
        if (out.row_comp[i] == kNone)
            out.comp_sizes.push_back(explore(true, i, out.comp_sizes.size()));
    for (std::uint32_t a = 0; a < obs.m; ++a)
        if (out.col_comp[a] == kNone)
            out.comp_sizes.push_back(explore(false, a, out.comp_sizes.size()));
    return out;
}

double rank1_optimal_distortion(double epsilon, double alpha, double d0) {
    if (d0 < 0.0) throw config_error("baseline distortion must be nonnegative");
    auto sol = giant_component_fixed_point(epsilon, alpha, 1e-13);
    return std::sqrt(1.0 - sol.xi * sol.zeta) * d0;
}

DistortionReport rank1_report(const GroundTruthInstance& truth, const Rank1Completion& comp,
                              const ObservationSet& obs) {
    if (truth.r != 1)
        throw config_error("rank-1 report requires a rank-1 truth instance");
    if (comp.n != truth.n || comp.m != truth.m)
        throw config_error("completion dimensions do not match the truth");

    // || M - Mhat ||_F^2 with Mhat supported on same-component pairs splits
    // into a global term plus one correction per component:
    //   Su2 * Sv2 + sum_c [ -2 (sum_i u_i uhat_i)(sum_a v_a vhat_a)
    //                       + (sum_i uhat_i^2)(sum_a vhat_a^2) ]
    std::size_t n_comp = comp.comp_sizes.size();
    std::vector<double> ru(n_comp, 0.0), ru2(n_comp, 0.0);
    std::vector<double> cv(n_comp, 0.0), cv2(n_comp, 0.0);
    double su2 = 0.0, sv2 = 0.0;
    for (std::size_t i = 0; i < truth.n; ++i) {
        double u = truth.u[i];
        double uh = static_cast<double>(comp.row_sign[i]) * std::exp(comp.row_logmag[i]);
        su2 += u * u;
        ru[comp.row_comp[i]] += u * uh;
        ru2[comp.row_comp[i]] += uh * uh;
    }
    for (std::size_t a = 0; a < truth.m; ++a) {
        double v = truth.v[a];
        double vh = static_cast<double>(comp.col_sign[a]) * std::exp(comp.col_logmag[a]);
        sv2 += v * v;
        cv[comp.col_comp[a]] += v * vh;
        cv2[comp.col_comp[a]] += vh * vh;
    }
    double ss = su2 * sv2;
    for (std::size_t c = 0; c < n_comp; ++c) ss += -2.0 * ru[c] * cv[c] + ru2[c] * cv2[c];
    ss = std::max(ss, 0.0);

    DistortionReport report;
    double total = static_cast<double>(truth.n) * static_cast<double>(truth.m);
    report.rmse = std::sqrt(ss / total);

    double fit_ss = 0.0;
    for (std::size_t e = 0; e < obs.size(); ++e) {
        auto [i, a] = obs.edges[e];
        double d = truth.entry(i, a) - comp.entry(i, a);
        fit_ss += d * d;
    }
    report.fit_error = obs.size() ? std::sqrt(fit_ss / static_cast<double>(obs.size())) : 0.0;
    double hidden = total - static_cast<double>(obs.size());
    report.prediction_error =
        hidden > 0.0 ? std::sqrt(std::max(ss - fit_ss, 0.0) / hidden) : 0.0;
    report.steps = 0;
    return report;
}

}  // namespace mclab
