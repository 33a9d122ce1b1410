// Independent straight-line reference for the full forward pass. Everything
// here is plain loops over std::vector<double>; it deliberately shares no
// code with the library so the two implementations can check each other.
#pragma once

#include <cstddef>
#include <vector>

namespace oracle {

struct HeadWeights {
    std::vector<double> q, k, v;  // each (dim/heads) x dim, row-major
};

struct Params {
    std::size_t dim = 0, heads = 0;
    std::size_t spatial_layers = 0, temporal_layers = 0, hyperedges = 0;
    bool use_hypergraph = true;
    std::vector<double> embed;                        // C x d
    std::vector<std::vector<HeadWeights>> spatial;    // [layer][head]
    std::vector<double> psi;                          // E x R
    std::vector<std::vector<HeadWeights>> temporal;   // [layer][head]
    std::vector<double> readout;                      // C x d
};

struct Result {
    std::vector<double> logits;  // R*C, region-major
    std::vector<double> output;
    // alpha[layer][slot][head] is an (R*C) x (R*C) row-major matrix over
    // ((i,c),(j,c')) pairs; temporal slots index the target slot (1..W-1).
    std::vector<std::vector<std::vector<std::vector<double>>>> alpha_spatial;
    std::vector<std::vector<std::vector<std::vector<double>>>> alpha_temporal;
    // levels[l][slot] is the (R*C) x d embedding after spatial level l
    // (level 0 = type-aware embeddings).
    std::vector<std::vector<std::vector<double>>> levels;
};

// window: R x W x C normalized values; adjacency: R x R binary, no self
// loops. The reference derives its own degree normalizations and the
// self-loop shift graph.
Result forward(std::size_t regions, std::size_t wlen, std::size_t ncat,
               const std::vector<double>& window, const std::vector<double>& adjacency,
               const Params& p, bool classification);

}  // namespace oracle
