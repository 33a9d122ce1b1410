#include "stshn/graphs.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "stshn/errors.hpp"

namespace stshn {

RegionGraph build_region_graph(std::size_t rows, std::size_t cols, std::size_t scale) {
    if (scale < 1 || scale % 2 == 0)
        throw ConfigError("region graph scale must be odd and >= 1, got " + std::to_string(scale));
    if (rows == 0 || cols == 0) throw ConfigError("region grid must be non-empty");

    const std::size_t r_count = rows * cols;
    const long reach = static_cast<long>((scale + 1) / 2);  // offsets strictly below this
    RegionGraph g;
    g.regions = r_count;
    g.adjacency = Tensor({r_count, r_count});
    for (std::size_t i = 0; i < r_count; ++i) {
        const long ri = static_cast<long>(i / cols), ci = static_cast<long>(i % cols);
        for (std::size_t j = 0; j < r_count; ++j) {
            if (i == j) continue;
            const long rj = static_cast<long>(j / cols), cj = static_cast<long>(j % cols);
            if (std::labs(ri - rj) < reach && std::labs(ci - cj) < reach) g.adjacency.at(i, j) = 1.0;
        }
    }
    g.normalized = normalize_adjacency(g.adjacency);
    return g;
}

Tensor normalize_adjacency(const Tensor& a) {
    if (a.rank() != 2 || a.rows() != a.cols())
        throw ShapeError("normalize_adjacency: expected square matrix, got " + shape_str(a.shape));
    const std::size_t n = a.rows();
    std::vector<double> dinv(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += a.at(i, j);
        dinv[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;  // isolated rows stay zero
    }
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = dinv[i] * a.at(i, j) * dinv[j];
    return out;
}

ShiftGraph build_shift_graph(const RegionGraph& rg) {
    const std::size_t n = rg.regions;
    ShiftGraph sg;
    sg.adjacency = Tensor({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            sg.adjacency.at(i, j) = (i == j || rg.adjacency.at(i, j) > 0.0) ? 1.0 : 0.0;
    sg.normalized = normalize_adjacency(sg.adjacency);
    return sg;
}

void dump_adjacency_csv(const Tensor& a, const std::string& path) {
    if (a.rank() != 2) throw ShapeError("dump_adjacency_csv: expected rank-2 tensor");
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::fprintf(f, "i,j,weight\n");
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (a.at(i, j) != 0.0) std::fprintf(f, "%zu,%zu,%.17g\n", i, j, a.at(i, j));
    std::fclose(f);
}

}  // namespace stshn
