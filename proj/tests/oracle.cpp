#include "oracle.hpp"

#include <cmath>

namespace oracle {

namespace {

// message for one (target i, source j) pair: per head, attention over source
// categories, heads concatenated. alpha_heads, when given, receives the
// scores at [h][(i*C+c)*(R*C) + j*C+c'].
void routed_message(std::size_t regions, std::size_t ncat, std::size_t dim, std::size_t heads,
                    const std::vector<HeadWeights>& w, const std::vector<double>& e_target,
                    std::size_t i, const std::vector<double>& e_source, std::size_t j,
                    std::vector<double>& message,
                    std::vector<std::vector<double>>* alpha_heads) {
    const std::size_t hd = dim / heads;
    message.assign(ncat * dim, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t c = 0; c < ncat; ++c) {
            // query = Q^h * E_target[i, c]
            std::vector<double> query(hd, 0.0);
            for (std::size_t pp = 0; pp < hd; ++pp)
                for (std::size_t k = 0; k < dim; ++k)
                    query[pp] += w[h].q[pp * dim + k] * e_target[(i * ncat + c) * dim + k];

            std::vector<double> scores(ncat, 0.0);
            for (std::size_t cs = 0; cs < ncat; ++cs) {
                std::vector<double> key(hd, 0.0);
                for (std::size_t pp = 0; pp < hd; ++pp)
                    for (std::size_t k = 0; k < dim; ++k)
                        key[pp] += w[h].k[pp * dim + k] * e_source[(j * ncat + cs) * dim + k];
                double dot = 0.0;
                for (std::size_t pp = 0; pp < hd; ++pp) dot += query[pp] * key[pp];
                scores[cs] = dot / std::sqrt(static_cast<double>(hd));
            }
            double mx = scores[0];
            for (double s : scores) mx = s > mx ? s : mx;
            double denom = 0.0;
            for (std::size_t cs = 0; cs < ncat; ++cs) {
                scores[cs] = std::exp(scores[cs] - mx);
                denom += scores[cs];
            }
            for (std::size_t cs = 0; cs < ncat; ++cs) scores[cs] /= denom;

            if (alpha_heads)
                for (std::size_t cs = 0; cs < ncat; ++cs)
                    (*alpha_heads)[h][(i * ncat + c) * (regions * ncat) + j * ncat + cs] = scores[cs];

            for (std::size_t cs = 0; cs < ncat; ++cs) {
                for (std::size_t pp = 0; pp < hd; ++pp) {
                    double value = 0.0;
                    for (std::size_t k = 0; k < dim; ++k)
                        value += w[h].v[pp * dim + k] * e_source[(j * ncat + cs) * dim + k];
                    message[c * dim + h * hd + pp] += scores[cs] * value;
                }
            }
        }
    }
}

std::vector<double> degree_normalize(const std::vector<double>& a, std::size_t n) {
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) deg[i] += a[i * n + j];
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (a[i * n + j] != 0.0 && deg[i] > 0.0 && deg[j] > 0.0)
                out[i * n + j] = a[i * n + j] / std::sqrt(deg[i] * deg[j]);
    return out;
}

}  // namespace

Result forward(std::size_t regions, std::size_t wlen, std::size_t ncat,
               const std::vector<double>& window, const std::vector<double>& adjacency,
               const Params& p, bool classification) {
    const std::size_t dim = p.dim, rc = regions * ncat;

    const std::vector<double> a_norm = degree_normalize(adjacency, regions);
    std::vector<double> gamma(regions * regions, 0.0);
    for (std::size_t i = 0; i < regions; ++i)
        for (std::size_t j = 0; j < regions; ++j)
            gamma[i * regions + j] = (i == j || adjacency[i * regions + j] != 0.0) ? 1.0 : 0.0;
    const std::vector<double> g_norm = degree_normalize(gamma, regions);

    Result res;

    // level 0: E[r,c,:] = x * e_c
    std::vector<std::vector<double>> level(wlen, std::vector<double>(rc * dim, 0.0));
    for (std::size_t t = 0; t < wlen; ++t)
        for (std::size_t r = 0; r < regions; ++r)
            for (std::size_t c = 0; c < ncat; ++c) {
                const double x = window[(r * wlen + t) * ncat + c];
                for (std::size_t k = 0; k < dim; ++k)
                    level[t][(r * ncat + c) * dim + k] = x * p.embed[c * dim + k];
            }
    res.levels.push_back(level);

    // hypergraph normalization (shared across layers and slots)
    std::vector<double> psin;
    if (p.use_hypergraph && p.spatial_layers > 0) {
        const std::size_t ne = p.hyperedges;
        std::vector<double> de(ne, 0.0), dr(regions, 0.0);
        for (std::size_t e = 0; e < ne; ++e)
            for (std::size_t r = 0; r < regions; ++r) {
                const double av = std::fabs(p.psi[e * regions + r]);
                de[e] += av;
                dr[r] += av;
            }
        psin.assign(ne * regions, 0.0);
        for (std::size_t e = 0; e < ne; ++e)
            for (std::size_t r = 0; r < regions; ++r) {
                const double se = 1.0 / std::sqrt(de[e] < 1e-8 ? 1e-8 : de[e]);
                const double sr = 1.0 / std::sqrt(dr[r] < 1e-8 ? 1e-8 : dr[r]);
                psin[e * regions + r] = se * p.psi[e * regions + r] * sr;
            }
    }

    res.alpha_spatial.resize(p.spatial_layers);
    std::vector<double> message;
    for (std::size_t l = 0; l < p.spatial_layers; ++l) {
        res.alpha_spatial[l].assign(wlen, std::vector<std::vector<double>>(
                                              p.heads, std::vector<double>(rc * rc, 0.0)));
        std::vector<std::vector<double>> next(wlen, std::vector<double>(rc * dim, 0.0));
        for (std::size_t t = 0; t < wlen; ++t) {
            for (std::size_t i = 0; i < regions; ++i) {
                std::vector<double> acc(ncat * dim, 0.0);
                for (std::size_t j = 0; j < regions; ++j) {
                    routed_message(regions, ncat, dim, p.heads, p.spatial[l], level[t], i, level[t], j,
                                   message, &res.alpha_spatial[l][t]);
                    const double weight = a_norm[i * regions + j];
                    if (weight != 0.0)
                        for (std::size_t z = 0; z < ncat * dim; ++z) acc[z] += weight * message[z];
                }
                for (std::size_t z = 0; z < ncat * dim; ++z)
                    next[t][i * ncat * dim + z] = acc[z] > 0.0 ? acc[z] : 0.0;
            }
            if (p.use_hypergraph) {
                for (std::size_t c = 0; c < ncat; ++c) {
                    std::vector<double> up(p.hyperedges * dim, 0.0);
                    for (std::size_t e = 0; e < p.hyperedges; ++e)
                        for (std::size_t k = 0; k < dim; ++k) {
                            double s = 0.0;
                            for (std::size_t r = 0; r < regions; ++r)
                                s += psin[e * regions + r] * level[t][(r * ncat + c) * dim + k];
                            up[e * dim + k] = s > 0.0 ? s : 0.0;
                        }
                    for (std::size_t r = 0; r < regions; ++r)
                        for (std::size_t k = 0; k < dim; ++k) {
                            double s = 0.0;
                            for (std::size_t e = 0; e < p.hyperedges; ++e)
                                s += psin[e * regions + r] * up[e * dim + k];
                            next[t][(r * ncat + c) * dim + k] += s > 0.0 ? s : 0.0;
                        }
                }
            }
        }
        level = next;
        res.levels.push_back(level);
    }

    // sum over spatial depths
    std::vector<std::vector<double>> summed(wlen, std::vector<double>(rc * dim, 0.0));
    for (std::size_t t = 0; t < wlen; ++t)
        for (const auto& lv : res.levels)
            for (std::size_t z = 0; z < rc * dim; ++z) summed[t][z] += lv[t][z];

    // temporal stack with its own depth sum
    res.alpha_temporal.resize(p.temporal_layers);
    std::vector<std::vector<double>> tsum = summed;
    std::vector<std::vector<double>> cur = summed;
    for (std::size_t l = 0; l < p.temporal_layers; ++l) {
        res.alpha_temporal[l].assign(wlen, std::vector<std::vector<double>>(
                                               p.heads, std::vector<double>(rc * rc, 0.0)));
        std::vector<std::vector<double>> next(wlen);
        next[0] = cur[0];
        for (std::size_t t = 1; t < wlen; ++t) {
            next[t].assign(rc * dim, 0.0);
            for (std::size_t i = 0; i < regions; ++i) {
                std::vector<double> acc(ncat * dim, 0.0);
                for (std::size_t j = 0; j < regions; ++j) {
                    routed_message(regions, ncat, dim, p.heads, p.temporal[l], cur[t], i, cur[t - 1], j,
                                   message, &res.alpha_temporal[l][t]);
                    const double weight = g_norm[i * regions + j];
                    if (weight != 0.0)
                        for (std::size_t z = 0; z < ncat * dim; ++z) acc[z] += weight * message[z];
                }
                for (std::size_t z = 0; z < ncat * dim; ++z)
                    next[t][i * ncat * dim + z] = acc[z] > 0.0 ? acc[z] : 0.0;
            }
        }
        cur = next;
        for (std::size_t t = 0; t < wlen; ++t)
            for (std::size_t z = 0; z < rc * dim; ++z) tsum[t][z] += cur[t][z];
    }

    // time sum and readout
    std::vector<double> lambda(rc * dim, 0.0);
    for (std::size_t t = 0; t < wlen; ++t)
        for (std::size_t z = 0; z < rc * dim; ++z) lambda[z] += tsum[t][z];

    res.logits.assign(rc, 0.0);
    res.output.assign(rc, 0.0);
    for (std::size_t r = 0; r < regions; ++r)
        for (std::size_t c = 0; c < ncat; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < dim; ++k)
                s += p.readout[c * dim + k] * lambda[(r * ncat + c) * dim + k];
            res.logits[r * ncat + c] = s;
            res.output[r * ncat + c] = classification ? 1.0 / (1.0 + std::exp(-s)) : s;
        }
    return res;
}

}  // namespace oracle
