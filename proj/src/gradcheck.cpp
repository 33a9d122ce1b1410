#include "stshn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "stshn/errors.hpp"

namespace stshn {

std::string GradCheckReport::worst_name() const {
    std::string name;
    double worst = -1.0;
    for (const auto& e : entries)
        if (e.max_rel_err > worst) {
            worst = e.max_rel_err;
            name = e.name;
        }
    return name;
}

double GradCheckReport::worst_err() const {
    double worst = 0.0;
    for (const auto& e : entries) worst = std::max(worst, e.max_rel_err);
    return worst;
}

GradCheckReport grad_check(const GradCheckFn& f, std::vector<NamedTensor> params, double step, double tol) {
    if (step <= 0.0) throw ConfigError("grad_check: step must be positive");

    std::vector<Tensor> analytic;
    f(params, &analytic);
    if (analytic.size() != params.size())
        throw ShapeError("grad_check: objective returned " + std::to_string(analytic.size()) +
                         " gradients for " + std::to_string(params.size()) + " parameters");

    GradCheckReport report;
    report.tol = tol;
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!analytic[p].same_shape(params[p].value))
            throw ShapeError("grad_check: gradient shape " + shape_str(analytic[p].shape) +
                             " does not match parameter '" + params[p].name + "' " +
                             shape_str(params[p].value.shape));
        GradCheckEntry entry;
        entry.name = params[p].name;
        for (std::size_t i = 0; i < params[p].value.numel(); ++i) {
            const double saved = params[p].value.data[i];
            params[p].value.data[i] = saved + step;
            const double fp = f(params, nullptr);
            params[p].value.data[i] = saved - step;
            const double fm = f(params, nullptr);
            params[p].value.data[i] = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[p].data[i];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            entry.max_rel_err = std::max(entry.max_rel_err, std::fabs(a - numeric) / denom);
        }
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.worst_err() <= tol;
    return report;
}

}  // namespace stshn
