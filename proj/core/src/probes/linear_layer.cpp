#include "innerloop/probes/linear_layer.hpp"

#include "innerloop/error.hpp"

namespace innerloop::probes {

LinearLayer build_linear_layer(const nn::Params<double>& p, const nn::ModelConfig& c, int layer,
                               const nn::MatD& context) {
  if (layer < 1 || layer > c.n_layers)
    throw ConfigError("layer " + std::to_string(layer) + " outside [1, " + std::to_string(c.n_layers) + "]");
  if (context.rows() == 0) throw ConfigError("linearized layer needs a non-empty context");
  if (context.cols() != c.d_model) throw ConfigError("context width does not match d_model");
  const auto& lp = p.layers[static_cast<std::size_t>(layer - 1)];
  const int dh = c.d_head();
  const auto d = static_cast<Eigen::Index>(c.d_model);

  const nn::MatD zz = context.transpose() * context;  // sum_i z_i z_i^T
  LinearLayer out;
  out.w_mhsa = nn::MatD::Zero(d, d);
  for (int h = 0; h < c.n_heads; ++h) {
    const auto rows = static_cast<Eigen::Index>(h) * dh;
    const nn::MatD wq = lp.wq.middleRows(rows, dh);
    const nn::MatD wk = lp.wk.middleRows(rows, dh);
    const nn::MatD wv = lp.wv.middleRows(rows, dh);
    const nn::MatD wo = lp.wo.middleCols(rows, dh);
    out.w_mhsa.noalias() += (wo * wv) * zz * (wk.transpose() * wq);
  }
  out.w_ffn = lp.w2 * lp.w1;
  const nn::MatD eye = nn::MatD::Identity(d, d);
  out.w_linear = (eye + out.w_ffn) * (eye + out.w_mhsa);
  if (!out.w_linear.allFinite()) throw NumericError("linearized layer " + std::to_string(layer) + " is not finite");
  return out;
}

}  // namespace innerloop::probes
