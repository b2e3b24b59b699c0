#include "dgsct/gradcheck.hpp"

#include <cmath>
#include <vector>

namespace dgsct {

namespace {

void check_step(double h) {
    if (!(h >= 1e-6 && h <= 1e-4)) {
        throw Error("finite_diff_check: step must lie in [1e-6, 1e-4]");
    }
}

double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

// Evaluates inside a throwaway tape so the probe does not append nodes to any
// tape the caller may have open.
double shielded_eval(const std::function<double()>& eval) {
    Tape shield;
    return eval();
}

}  // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    check_step(h);
    const Tensor probe = x.trainable();

    Tensor analytic;
    {
        Tape tape;
        Tensor y = f(probe);
        GradientMap grads = tape.backward(y);
        analytic = grads.contains(probe) ? grads.at(probe) : Tensor::zeros(probe.shape());
    }

    double worst = 0.0;
    const std::vector<double>& base = x.data();
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> up = base;
        std::vector<double> down = base;
        up[i] += h;
        down[i] -= h;
        const Tensor xp(x.shape(), std::move(up));
        const Tensor xm(x.shape(), std::move(down));
        const double fp = shielded_eval([&] { return f(xp).value(); });
        const double fm = shielded_eval([&] { return f(xm).value(); });
        const double numeric = (fp - fm) / (2.0 * h);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

double finite_diff_check_param(const std::function<Tensor()>& loss, Tensor& param, double h) {
    check_step(h);
    if (!param.requires_grad()) {
        throw Error("finite_diff_check_param: parameter does not require gradients");
    }

    Tensor analytic;
    {
        Tape tape;
        Tensor y = loss();
        GradientMap grads = tape.backward(y);
        analytic = grads.contains(param) ? grads.at(param) : Tensor::zeros(param.shape());
    }

    const Tensor original = param;
    const std::vector<double>& base = original.data();
    double worst = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> up = base;
        std::vector<double> down = base;
        up[i] += h;
        down[i] -= h;
        param = Tensor(original.shape(), std::move(up), true);
        const double fp = shielded_eval([&] { return loss().value(); });
        param = Tensor(original.shape(), std::move(down), true);
        const double fm = shielded_eval([&] { return loss().value(); });
        const double numeric = (fp - fm) / (2.0 * h);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    param = original;
    return worst;
}

}  // namespace dgsct
