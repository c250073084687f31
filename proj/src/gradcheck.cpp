#include "milasc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "milasc/errors.hpp"
#include "milasc/rng.hpp"

namespace milasc {

GradCheckResult grad_check(const std::function<double()>& loss,
                           const std::vector<GradCheckTarget>& targets,
                           const GradCheckOptions& options) {
    GradCheckResult result;
    const double h = options.step;
    Rng rng(Rng::mix(options.subsample_seed, 0x67c6697351ff4aebull));

    for (const auto& target : targets) {
        Tensor& x = *target.value;
        const Tensor& g = *target.grad;
        if (!x.same_shape(g)) {
            throw ValidationError("grad_check: gradient shape " + g.shape_str() +
                                  " does not match value shape " + x.shape_str() + " for " +
                                  target.name);
        }

        std::vector<int> coords;
        if (options.max_coords_per_tensor > 0 && options.max_coords_per_tensor < x.size()) {
            coords.resize(static_cast<std::size_t>(x.size()));
            for (int i = 0; i < x.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
            rng.shuffle(coords);
            coords.resize(static_cast<std::size_t>(options.max_coords_per_tensor));
        } else {
            coords.resize(static_cast<std::size_t>(x.size()));
            for (int i = 0; i < x.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
        }

        for (int i : coords) {
            const double saved = x[i];
            x[i] = saved + h;
            const double f_plus = loss();
            x[i] = saved - h;
            const double f_minus = loss();
            x[i] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
                throw NumericalError("grad_check: non-finite loss while probing " + target.name +
                                     " coordinate " + std::to_string(i));
            }
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double analytic = g[i];
            const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1.0});
            const double rel = std::fabs(analytic - numeric) / denom;
            ++result.coords_checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_target = target.name;
                result.worst_coord = i;
            }
        }
    }
    return result;
}

} // namespace milasc
