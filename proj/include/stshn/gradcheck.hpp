#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stshn/tensor.hpp"

namespace stshn {

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tol = 0.0;
    bool pass = false;
    // Name of the parameter with the largest error; empty when there are none.
    std::string worst_name() const;
    double worst_err() const;
};

// Scalar objective over a named parameter set. When `grads` is non-null the
// callee must fill one gradient tensor per parameter, in order.
using GradCheckFn = std::function<double(const std::vector<NamedTensor>&, std::vector<Tensor>* grads)>;

// Compares the analytic gradient of f against central finite differences,
// element by element. Relative error uses denominator max(1, |analytic|,
// |numeric|) so near-zero gradients are judged on an absolute scale.
GradCheckReport grad_check(const GradCheckFn& f, std::vector<NamedTensor> params, double step, double tol);

}  // namespace stshn
