#pragma once

#include "innerloop/nn/config.hpp"
#include "innerloop/nn/params.hpp"

namespace innerloop::probes {

// One transformer block with linear attention and no normalization.
struct LinearLayer {
  nn::MatD w_mhsa;    // sum_h sum_i W_O^h W_V^h z_i z_i^T (W_K^h)^T W_Q^h
  nn::MatD w_ffn;     // W_2 W_1
  nn::MatD w_linear;  // (I + W_FFN)(I + W_MHSA)
};

// `context` rows are the block's input vectors z_i (layer is 1-based).
LinearLayer build_linear_layer(const nn::Params<double>& params, const nn::ModelConfig& config, int layer,
                               const nn::MatD& context);

}  // namespace innerloop::probes
