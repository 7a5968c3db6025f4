#include "cxr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cxr/error.hpp"

namespace cxr {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     " tensor, got shape " + t.shape_string());
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, const ConvSpec& spec) {
  if (spec.stride == 0 || spec.kernel_size == 0 || spec.filter_count == 0) {
    throw ValueError("conv spec requires positive filter count, kernel size and stride");
  }
  const std::size_t padded = in + 2 * spec.padding;
  if (padded < spec.kernel_size) {
    throw ValueError("conv output extent is not positive: input " + std::to_string(in) +
                     " with padding " + std::to_string(spec.padding) + " is smaller than kernel " +
                     std::to_string(spec.kernel_size));
  }
  return (padded - spec.kernel_size) / spec.stride + 1;
}

Var conv2d(const Var& input, const Var& kernels, const Var& bias, const ConvSpec& spec) {
  const Tensor& in = input.value();
  const Tensor& k = kernels.value();
  const Tensor& b = bias.value();
  require_rank(in, 4, "conv2d input");
  require_rank(k, 4, "conv2d kernels");
  require_rank(b, 1, "conv2d bias");

  const std::size_t B = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
  const std::size_t F = k.extent(0), KC = k.extent(1), K = k.extent(2);
  if (k.extent(2) != k.extent(3)) {
    throw ShapeError("conv2d kernels must be square, got " + k.shape_string());
  }
  if (KC != C) {
    throw ShapeError("conv2d channel mismatch: input " + in.shape_string() + " vs kernels " +
                     k.shape_string());
  }
  if (F != spec.filter_count || K != spec.kernel_size) {
    throw ShapeError("conv2d kernels " + k.shape_string() + " do not match spec (filters " +
                     std::to_string(spec.filter_count) + ", kernel " +
                     std::to_string(spec.kernel_size) + ")");
  }
  if (b.extent(0) != F) {
    throw ShapeError("conv2d bias " + b.shape_string() + " does not match filter count " +
                     std::to_string(F));
  }
  const std::size_t Ho = conv_output_extent(H, spec);
  const std::size_t Wo = conv_output_extent(W, spec);
  const std::size_t s = spec.stride;
  const long p = static_cast<long>(spec.padding);

  Tensor out({B, F, Ho, Wo});
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t f = 0; f < F; ++f) {
      const double bias_f = b[f];
      for (std::size_t y = 0; y < Ho; ++y) {
        for (std::size_t x = 0; x < Wo; ++x) {
          double acc = bias_f;
          const long y0 = static_cast<long>(y * s) - p;
          const long x0 = static_cast<long>(x * s) - p;
          for (std::size_t c = 0; c < C; ++c) {
            const double* in_c = in.data() + ((bi * C + c) * H) * W;
            const double* k_c = k.data() + ((f * C + c) * K) * K;
            for (std::size_t i = 0; i < K; ++i) {
              const long iy = y0 + static_cast<long>(i);
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              const double* in_row = in_c + static_cast<std::size_t>(iy) * W;
              const double* k_row = k_c + i * K;
              for (std::size_t j = 0; j < K; ++j) {
                const long ix = x0 + static_cast<long>(j);
                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                acc += in_row[ix] * k_row[j];
              }
            }
          }
          out.at4(bi, f, y, x) = acc;
        }
      }
    }
  }

  auto rule = [spec](GradNode& self) {
    const Tensor& g = self.grad;
    GradNode& in_node = *self.parents[0];
    GradNode& k_node = *self.parents[1];
    GradNode& b_node = *self.parents[2];
    const Tensor& in = in_node.value;
    const Tensor& k = k_node.value;
    const std::size_t B = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
    const std::size_t F = k.extent(0), K = k.extent(2);
    const std::size_t Ho = g.extent(2), Wo = g.extent(3);
    const std::size_t s = spec.stride;
    const long p = static_cast<long>(spec.padding);

    Tensor din = in_node.requires_grad ? Tensor::zeros(in.shape()) : Tensor();
    Tensor dk = k_node.requires_grad ? Tensor::zeros(k.shape()) : Tensor();
    Tensor db = b_node.requires_grad ? Tensor::zeros(b_node.value.shape()) : Tensor();

    for (std::size_t bi = 0; bi < B; ++bi) {
      for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t y = 0; y < Ho; ++y) {
          for (std::size_t x = 0; x < Wo; ++x) {
            const double go = g.at4(bi, f, y, x);
            if (!db.empty()) db[f] += go;
            if (din.empty() && dk.empty()) continue;
            const long y0 = static_cast<long>(y * s) - p;
            const long x0 = static_cast<long>(x * s) - p;
            for (std::size_t c = 0; c < C; ++c) {
              for (std::size_t i = 0; i < K; ++i) {
                const long iy = y0 + static_cast<long>(i);
                if (iy < 0 || iy >= static_cast<long>(H)) continue;
                for (std::size_t j = 0; j < K; ++j) {
                  const long ix = x0 + static_cast<long>(j);
                  if (ix < 0 || ix >= static_cast<long>(W)) continue;
                  const std::size_t in_idx =
                      ((bi * C + c) * H + static_cast<std::size_t>(iy)) * W +
                      static_cast<std::size_t>(ix);
                  const std::size_t k_idx = ((f * C + c) * K + i) * K + j;
                  if (!din.empty()) din[in_idx] += go * k[k_idx];
                  if (!dk.empty()) dk[k_idx] += go * in[in_idx];
                }
              }
            }
          }
        }
      }
    }
    if (!din.empty()) in_node.accumulate(din);
    if (!dk.empty()) k_node.accumulate(dk);
    if (!db.empty()) b_node.accumulate(db);
  };
  return Var::make_op(std::move(out), {input, kernels, bias}, rule);
}

Var maxpool2d(const Var& input, std::size_t window) {
  const Tensor& in = input.value();
  require_rank(in, 4, "maxpool2d input");
  if (window == 0) throw ValueError("maxpool2d window must be positive");
  const std::size_t B = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
  if (H % window != 0 || W % window != 0) {
    throw ShapeError("maxpool2d: input " + in.shape_string() + " not divisible by window " +
                     std::to_string(window));
  }
  const std::size_t Ho = H / window, Wo = W / window;

  Tensor out({B, C, Ho, Wo});
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t y = 0; y < Ho; ++y) {
        for (std::size_t x = 0; x < Wo; ++x, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t i = 0; i < window; ++i) {
            for (std::size_t j = 0; j < window; ++j) {
              const std::size_t idx =
                  ((bi * C + c) * H + y * window + i) * W + x * window + j;
              if (in[idx] > best) {  // strict keeps the first maximum
                best = in[idx];
                best_idx = idx;
              }
            }
          }
          out[o] = best;
          argmax[o] = best_idx;
        }
      }
    }
  }

  auto rule = [argmax = std::move(argmax)](GradNode& self) {
    GradNode& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    Tensor din = Tensor::zeros(in_node.value.shape());
    const Tensor& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) din[argmax[i]] += g[i];
    in_node.accumulate(din);
  };
  return Var::make_op(std::move(out), {input}, rule);
}

Var affine(const Var& input, const Var& weight, const Var& bias) {
  const Tensor& in = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank(in, 2, "affine input");
  require_rank(w, 2, "affine weight");
  require_rank(b, 1, "affine bias");
  const std::size_t B = in.extent(0), D = in.extent(1);
  const std::size_t M = w.extent(1);
  if (w.extent(0) != D) {
    throw ShapeError("affine: input " + in.shape_string() + " and weight " + w.shape_string() +
                     " have mismatched inner dimensions");
  }
  if (b.extent(0) != M) {
    throw ShapeError("affine: bias " + b.shape_string() + " does not match output width " +
                     std::to_string(M));
  }

  Tensor out({B, M});
  for (std::size_t r = 0; r < B; ++r) {
    const double* in_row = in.data() + r * D;
    double* out_row = out.data() + r * M;
    for (std::size_t m = 0; m < M; ++m) out_row[m] = b[m];
    for (std::size_t d = 0; d < D; ++d) {
      const double v = in_row[d];
      const double* w_row = w.data() + d * M;
      for (std::size_t m = 0; m < M; ++m) out_row[m] += v * w_row[m];
    }
  }

  auto rule = [](GradNode& self) {
    const Tensor& g = self.grad;  // [B,M]
    GradNode& in_node = *self.parents[0];
    GradNode& w_node = *self.parents[1];
    GradNode& b_node = *self.parents[2];
    const Tensor& in = in_node.value;
    const Tensor& w = w_node.value;
    const std::size_t B = in.extent(0), D = in.extent(1), M = w.extent(1);

    if (in_node.requires_grad) {
      Tensor din({B, D});
      for (std::size_t r = 0; r < B; ++r) {
        for (std::size_t d = 0; d < D; ++d) {
          double acc = 0.0;
          const double* g_row = g.data() + r * M;
          const double* w_row = w.data() + d * M;
          for (std::size_t m = 0; m < M; ++m) acc += g_row[m] * w_row[m];
          din.at2(r, d) = acc;
        }
      }
      in_node.accumulate(din);
    }
    if (w_node.requires_grad) {
      Tensor dw = Tensor::zeros(w.shape());
      for (std::size_t r = 0; r < B; ++r) {
        const double* in_row = in.data() + r * D;
        const double* g_row = g.data() + r * M;
        for (std::size_t d = 0; d < D; ++d) {
          double* dw_row = dw.data() + d * M;
          const double v = in_row[d];
          for (std::size_t m = 0; m < M; ++m) dw_row[m] += v * g_row[m];
        }
      }
      w_node.accumulate(dw);
    }
    if (b_node.requires_grad) {
      Tensor db = Tensor::zeros(b_node.value.shape());
      for (std::size_t r = 0; r < B; ++r) {
        const double* g_row = g.data() + r * M;
        for (std::size_t m = 0; m < M; ++m) db[m] += g_row[m];
      }
      b_node.accumulate(db);
    }
  };
  return Var::make_op(std::move(out), {input, weight, bias}, rule);
}

ActivationKind parse_activation_kind(const std::string& name) {
  if (name == "relu") return ActivationKind::Relu;
  if (name == "sigmoid") return ActivationKind::Sigmoid;
  if (name == "softmax") return ActivationKind::Softmax;
  throw ValueError("unknown activation kind '" + name + "'");
}

std::string activation_kind_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Softmax: return "softmax";
  }
  throw ValueError("unknown activation kind");
}

Var relu(const Var& input) {
  const Tensor& in = input.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  auto rule = [](GradNode& self) {
    GradNode& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    Tensor din(in_node.value.shape());
    const Tensor& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      din[i] = in_node.value[i] > 0.0 ? g[i] : 0.0;
    }
    in_node.accumulate(din);
  };
  return Var::make_op(std::move(out), {input}, rule);
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var sigmoid(const Var& input) {
  const Tensor& in = input.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = stable_sigmoid(in[i]);
  auto rule = [](GradNode& self) {
    GradNode& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    Tensor din(in_node.value.shape());
    const Tensor& g = self.grad;
    const Tensor& s = self.value;
    for (std::size_t i = 0; i < g.size(); ++i) din[i] = g[i] * s[i] * (1.0 - s[i]);
    in_node.accumulate(din);
  };
  return Var::make_op(std::move(out), {input}, rule);
}

Var softmax(const Var& input) {
  const Tensor& in = input.value();
  if (in.rank() == 0) throw ShapeError("softmax requires at least one axis");
  const std::size_t C = in.extent(in.rank() - 1);
  const std::size_t rows = in.size() / C;

  Tensor out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * C;
    double* y = out.data() + r * C;
    double mx = x[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, x[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    for (std::size_t c = 0; c < C; ++c) y[c] /= sum;
  }

  auto rule = [C, rows](GradNode& self) {
    GradNode& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    Tensor din(in_node.value.shape());
    const Tensor& g = self.grad;
    const Tensor& p = self.value;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g_row = g.data() + r * C;
      const double* p_row = p.data() + r * C;
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += g_row[c] * p_row[c];
      double* d_row = din.data() + r * C;
      for (std::size_t c = 0; c < C; ++c) d_row[c] = p_row[c] * (g_row[c] - dot);
    }
    in_node.accumulate(din);
  };
  return Var::make_op(std::move(out), {input}, rule);
}

Var activation(ActivationKind kind, const Var& input) {
  switch (kind) {
    case ActivationKind::Relu: return relu(input);
    case ActivationKind::Sigmoid: return sigmoid(input);
    case ActivationKind::Softmax: return softmax(input);
  }
  throw ValueError("unknown activation kind");
}

Var activation(const std::string& kind, const Var& input) {
  return activation(parse_activation_kind(kind), input);
}

Var batchnorm2d(const Var& input, const Var& gamma, const Var& beta, double eps, bool training,
                BatchNormState* state) {
  const Tensor& in = input.value();
  require_rank(in, 4, "batchnorm2d input");
  if (eps <= 0.0) throw ValueError("batchnorm2d eps must be positive");
  const std::size_t B = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  if (gm.rank() != 1 || gm.extent(0) != C || bt.rank() != 1 || bt.extent(0) != C) {
    throw ShapeError("batchnorm2d: gamma " + gm.shape_string() + " / beta " + bt.shape_string() +
                     " must both have shape (" + std::to_string(C) + ")");
  }
  if (!training && state == nullptr) {
    throw ValueError("batchnorm2d inference mode requires running statistics");
  }

  const std::size_t n = B * H * W;
  std::vector<double> mean(C, 0.0), var(C, 0.0), inv_std(C, 0.0);
  if (training) {
    for (std::size_t bi = 0; bi < B; ++bi) {
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = in.data() + ((bi * C + c) * H) * W;
        double s = 0.0;
        for (std::size_t i = 0; i < H * W; ++i) s += p[i];
        mean[c] += s;
      }
    }
    for (std::size_t c = 0; c < C; ++c) mean[c] /= static_cast<double>(n);
    for (std::size_t bi = 0; bi < B; ++bi) {
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = in.data() + ((bi * C + c) * H) * W;
        double s = 0.0;
        for (std::size_t i = 0; i < H * W; ++i) {
          const double d = p[i] - mean[c];
          s += d * d;
        }
        var[c] += s;
      }
    }
    for (std::size_t c = 0; c < C; ++c) var[c] /= static_cast<double>(n);
    if (state != nullptr) {
      for (std::size_t c = 0; c < C; ++c) {
        state->running_mean[c] =
            (1.0 - state->momentum) * state->running_mean[c] + state->momentum * mean[c];
        state->running_var[c] =
            (1.0 - state->momentum) * state->running_var[c] + state->momentum * var[c];
      }
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = state->running_mean[c];
      var[c] = state->running_var[c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

  Tensor out(in.shape());
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = in.data() + ((bi * C + c) * H) * W;
      double* q = out.data() + ((bi * C + c) * H) * W;
      const double m = mean[c], is = inv_std[c], g = gm[c], b = bt[c];
      for (std::size_t i = 0; i < H * W; ++i) q[i] = (p[i] - m) * is * g + b;
    }
  }

  auto rule = [mean = std::move(mean), inv_std = std::move(inv_std), training](GradNode& self) {
    GradNode& in_node = *self.parents[0];
    GradNode& gm_node = *self.parents[1];
    GradNode& bt_node = *self.parents[2];
    const Tensor& in = in_node.value;
    const Tensor& g = self.grad;
    const std::size_t B = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
    const std::size_t hw = H * W;
    const double n = static_cast<double>(B * hw);

    Tensor dgamma = gm_node.requires_grad ? Tensor::zeros({C}) : Tensor();
    Tensor dbeta = bt_node.requires_grad ? Tensor::zeros({C}) : Tensor();
    Tensor din = in_node.requires_grad ? Tensor(in.shape()) : Tensor();

    for (std::size_t c = 0; c < C; ++c) {
      const double m = mean[c], is = inv_std[c], gam = gm_node.value[c];
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t bi = 0; bi < B; ++bi) {
        const double* gp = g.data() + ((bi * C + c) * hw);
        const double* xp = in.data() + ((bi * C + c) * hw);
        for (std::size_t i = 0; i < hw; ++i) {
          sum_g += gp[i];
          sum_gx += gp[i] * (xp[i] - m) * is;
        }
      }
      if (!dbeta.empty()) dbeta[c] = sum_g;
      if (!dgamma.empty()) dgamma[c] = sum_gx;
      if (!din.empty()) {
        const double mg = sum_g / n, mgx = sum_gx / n;
        for (std::size_t bi = 0; bi < B; ++bi) {
          const double* gp = g.data() + ((bi * C + c) * hw);
          const double* xp = in.data() + ((bi * C + c) * hw);
          double* dp = din.data() + ((bi * C + c) * hw);
          if (training) {
            for (std::size_t i = 0; i < hw; ++i) {
              const double xhat = (xp[i] - m) * is;
              dp[i] = gam * is * (gp[i] - mg - xhat * mgx);
            }
          } else {
            // Running statistics are constants in inference mode.
            for (std::size_t i = 0; i < hw; ++i) dp[i] = gam * is * gp[i];
          }
        }
      }
    }
    if (!din.empty()) in_node.accumulate(din);
    if (!dgamma.empty()) gm_node.accumulate(dgamma);
    if (!dbeta.empty()) bt_node.accumulate(dbeta);
  };
  return Var::make_op(std::move(out), {input, gamma, beta}, rule);
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out(a.value().shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto rule = [](GradNode& self) {
    for (auto& parent : self.parents) {
      if (parent->requires_grad) parent->accumulate(self.grad);
    }
  };
  return Var::make_op(std::move(out), {a, b}, rule);
}

Var reshape(const Var& input, std::vector<std::size_t> shape) {
  Tensor out = input.value().reshaped(std::move(shape));
  auto rule = [](GradNode& self) {
    GradNode& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    in_node.accumulate(self.grad.reshaped(in_node.value.shape()));
  };
  return Var::make_op(std::move(out), {input}, rule);
}

Var flatten(const Var& input) {
  const Tensor& in = input.value();
  if (in.rank() < 1) throw ShapeError("flatten requires at least one axis");
  const std::size_t B = in.extent(0);
  return reshape(input, {B, in.size() / B});
}

Var global_avg_pool(const Var& input) {
  const Tensor& in = input.value();
  require_rank(in, 4, "global_avg_pool input");
  const std::size_t B = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
  const double inv = 1.0 / static_cast<double>(H * W);
  Tensor out({B, C});
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = in.data() + ((bi * C + c) * H) * W;
      double s = 0.0;
      for (std::size_t i = 0; i < H * W; ++i) s += p[i];
      out.at2(bi, c) = s * inv;
    }
  }
  auto rule = [inv](GradNode& self) {
    GradNode& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    const Tensor& in = in_node.value;
    const std::size_t B = in.extent(0), C = in.extent(1), hw = in.extent(2) * in.extent(3);
    Tensor din(in.shape());
    const Tensor& g = self.grad;
    for (std::size_t bi = 0; bi < B; ++bi) {
      for (std::size_t c = 0; c < C; ++c) {
        const double gv = g.at2(bi, c) * inv;
        double* dp = din.data() + ((bi * C + c) * hw);
        for (std::size_t i = 0; i < hw; ++i) dp[i] = gv;
      }
    }
    in_node.accumulate(din);
  };
  return Var::make_op(std::move(out), {input}, rule);
}

}  // namespace cxr
