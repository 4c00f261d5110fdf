#include "cgr/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace cgr {

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& points,
                           double eps, double tol) {
  GradCheckReport report;

  for (const auto& [name, t] : points) {
    (void)name;
    const_cast<Tensor&>(t).zero_grad();
  }

  Tensor y = f();
  if (y.size() != 1) {
    throw std::invalid_argument("grad_check: function output must be scalar");
  }
  if (!std::isfinite(y.item())) {
    report.all_finite = false;
    report.failure = "f(x) is non-finite at the evaluation point";
    return report;
  }
  backward(y);

  // snapshot analytic gradients (absent slot == zero gradient)
  std::vector<std::vector<double>> analytic;
  analytic.reserve(points.size());
  for (const auto& [name, t] : points) {
    (void)name;
    analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0));
  }

  NoGradGuard no_grad;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const auto& name = points[p].first;
    Tensor t = points[p].second;
    double* v = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + eps;
      const double fp = f().item();
      v[i] = saved - eps;
      const double fm = f().item();
      v[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.all_finite = false;
        report.failure = "f non-finite while perturbing " + name + "[" + std::to_string(i) + "]";
        return report;
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-6});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.pass = report.all_finite && report.max_rel_err <= tol;
  return report;
}

}  // namespace cgr
