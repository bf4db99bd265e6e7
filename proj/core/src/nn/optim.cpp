#include "innerloop/nn/optim.hpp"

#include <cmath>

namespace innerloop::nn {

template <class T>
double global_norm(const Params<T>& grads) {
  double sum = 0.0;
  grads.visit([&](std::string_view, const Mat<T>& g) {
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double v = static_cast<double>(g.data()[i]);
      sum += v * v;
    }
  });
  return std::sqrt(sum);
}

double clip_scale(double norm, double max_norm) { return norm > max_norm ? max_norm / norm : 1.0; }

template <class T>
void sgd_step(Params<T>& params, const Params<T>& grads, double eta) {
  std::vector<const Mat<T>*> g;
  grads.visit([&](std::string_view, const Mat<T>& m) { g.push_back(&m); });
  std::size_t i = 0;
  const T step = static_cast<T>(eta);
  params.visit([&](std::string_view, Mat<T>& p) { p.noalias() -= step * *g[i++]; });
}

template <class T>
void adamw_step(Params<T>& params, AdamState<T>& state, const Params<T>& grads, double grad_scale, double lr,
                double weight_decay, double beta1, double beta2, double eps) {
  std::vector<const Mat<T>*> g;
  std::vector<Mat<T>*> m, v;
  grads.visit([&](std::string_view, const Mat<T>& a) { g.push_back(&a); });
  state.m.visit([&](std::string_view, Mat<T>& a) { m.push_back(&a); });
  state.v.visit([&](std::string_view, Mat<T>& a) { v.push_back(&a); });
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  std::size_t k = 0;
  params.visit([&](std::string_view name, Mat<T>& p) {
    const bool decay = weight_decay > 0.0 && name.find("gain") == std::string_view::npos;
    if (decay) p *= static_cast<T>(1.0 - lr * weight_decay);
    auto& mk = *m[k];
    auto& vk = *v[k];
    const auto& gk = *g[k];
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double gi = grad_scale * static_cast<double>(gk.data()[i]);
      const double mi = beta1 * static_cast<double>(mk.data()[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * static_cast<double>(vk.data()[i]) + (1.0 - beta2) * gi * gi;
      mk.data()[i] = static_cast<T>(mi);
      vk.data()[i] = static_cast<T>(vi);
      const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
      p.data()[i] = static_cast<T>(static_cast<double>(p.data()[i]) - update);
    }
    ++k;
  });
}

template double global_norm(const Params<float>&);
template double global_norm(const Params<double>&);
template void sgd_step(Params<float>&, const Params<float>&, double);
template void sgd_step(Params<double>&, const Params<double>&, double);
template void adamw_step(Params<float>&, AdamState<float>&, const Params<float>&, double, double, double, double,
                         double, double);
template void adamw_step(Params<double>&, AdamState<double>&, const Params<double>&, double, double, double, double,
                         double, double);

}  // namespace innerloop::nn
