#pragma once

#include <cstddef>
#include <string>

#include "stshn/tensor.hpp"

namespace stshn {

// Spatial adjacency over the grid lattice. A is binary with zero diagonal;
// A_norm = D^{-1/2} A D^{-1/2} with isolated rows left all-zero.
struct RegionGraph {
    std::size_t regions = 0;
    Tensor adjacency;   // R x R, entries in {0,1}
    Tensor normalized;  // R x R
};

// Temporal shift adjacency: self-loops plus spatial neighbours, linking each
// region at slot t to slot t+1.
struct ShiftGraph {
    Tensor adjacency;   // R x R, entries in {0,1}, unit diagonal
    Tensor normalized;  // R x R
};

// Neighbourhood rule: cells i != j are adjacent iff both their row and column
// offsets are below ceil(scale/2) in absolute value (8-neighbourhood for
// scale 3). Regions are numbered row-major over the (rows x cols) lattice.
RegionGraph build_region_graph(std::size_t rows, std::size_t cols, std::size_t scale);

Tensor normalize_adjacency(const Tensor& a);

ShiftGraph build_shift_graph(const RegionGraph& rg);

// Debug dump as "i,j,weight" rows, one per nonzero entry.
void dump_adjacency_csv(const Tensor& a, const std::string& path);

}  // namespace stshn
