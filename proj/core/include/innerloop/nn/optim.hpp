#pragma once

#include "innerloop/nn/params.hpp"

namespace innerloop::nn {

// Euclidean norm over every gradient array, accumulated in double.
template <class T>
double global_norm(const Params<T>& grads);

// Scale factor applied to the gradients: min(1, max_norm / norm).
double clip_scale(double norm, double max_norm);

// params -= eta * grads
template <class T>
void sgd_step(Params<T>& params, const Params<T>& grads, double eta);

// Decoupled weight decay (matrices only; norm gains are not decayed)
// followed by a bias-corrected Adam step on grads * grad_scale.
template <class T>
void adamw_step(Params<T>& params, AdamState<T>& state, const Params<T>& grads, double grad_scale, double lr,
                double weight_decay, double beta1, double beta2, double eps);

}  // namespace innerloop::nn
