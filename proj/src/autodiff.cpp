#include "celiac/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace celiac {

BatchNormState BatchNormState::create(int channels) {
  BatchNormState s;
  s.running_mean = Tensor({channels});
  s.running_var = Tensor::full({channels}, 1.0);
  return s;
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= node_count())
    throw std::invalid_argument("Var does not belong to this tape");
}

Var Tape::emit(Tensor value, std::function<void(Tape&, const Tensor&)> backprop) {
  nodes_.push_back(Node{std::move(value), std::move(backprop), {}});
  return Var{this, node_count() - 1};
}

Var Tape::input(Tensor value) { return emit(std::move(value), {}); }

Var Tape::param(const std::string& name, const Tensor& value) {
  if (params_.count(name))
    throw std::invalid_argument("duplicate parameter name on tape: " + name);
  Var v = emit(value, {});
  nodes_.back().param_name = name;
  params_[name] = v.id;
  return v;
}

void Tape::accumulate(int id, const Tensor& g) {
  Tensor& dst = grads_[static_cast<std::size_t>(id)];
  const std::int64_t n = dst.size();
  for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation + bias, zero padding
// ---------------------------------------------------------------------------

Var Tape::conv2d(Var in, Var kernel, Var bias, int stride, int pad) {
  check(in);
  check(kernel);
  check(bias);
  const Tensor& x = val(in.id);
  const Tensor& k = val(kernel.id);
  const Tensor& b = val(bias.id);
  if (x.ndim() != 4 || k.ndim() != 4)
    throw std::invalid_argument("conv2d expects [N,C,H,W] input and [F,C,kh,kw] kernel");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != C)
    throw std::invalid_argument("conv2d: kernel channel count does not match input");
  if (b.ndim() != 1 || b.dim(0) != F)
    throw std::invalid_argument("conv2d: bias must be [F]");
  if (kh > H + 2 * pad || kw > W + 2 * pad)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;

  Tensor out({N, F, OH, OW});
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int f = 0; f < F; ++f) {
      for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow) {
          double acc = b[f];
          const int h0 = oh * stride - pad;
          const int w0 = ow * stride - pad;
          for (int c = 0; c < C; ++c) {
            for (int i = 0; i < kh; ++i) {
              const int ih = h0 + i;
              if (ih < 0 || ih >= H) continue;
              for (int j = 0; j < kw; ++j) {
                const int iw = w0 + j;
                if (iw < 0 || iw >= W) continue;
                acc += x.at4(n, c, ih, iw) * k.at4(f, c, i, j);
              }
            }
          }
          out.at4(n, f, oh, ow) = acc;
        }
      }
    }
  }

  const int in_id = in.id, k_id = kernel.id, b_id = bias.id;
  return emit(std::move(out), [=](Tape& t, const Tensor& g) {
    const Tensor& xv = t.val(in_id);
    const Tensor& kv = t.val(k_id);
    Tensor dx(xv.shape());
    Tensor dk(kv.shape());
    Tensor db({F});
    // each parallel iteration owns a disjoint slice, so results do not
    // depend on the thread count
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        for (int f = 0; f < F; ++f) {
          for (int oh = 0; oh < OH; ++oh) {
            const int h0 = oh * stride - pad;
            for (int ow = 0; ow < OW; ++ow) {
              const int w0 = ow * stride - pad;
              const double gv = g.at4(n, f, oh, ow);
              for (int i = 0; i < kh; ++i) {
                const int ih = h0 + i;
                if (ih < 0 || ih >= H) continue;
                for (int j = 0; j < kw; ++j) {
                  const int iw = w0 + j;
                  if (iw < 0 || iw >= W) continue;
                  dx.at4(n, c, ih, iw) += gv * kv.at4(f, c, i, j);
                }
              }
            }
          }
        }
      }
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int f = 0; f < F; ++f) {
      for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
          for (int j = 0; j < kw; ++j) {
            double acc = 0.0;
            for (int n = 0; n < N; ++n) {
              for (int oh = 0; oh < OH; ++oh) {
                const int ih = oh * stride - pad + i;
                if (ih < 0 || ih >= H) continue;
                for (int ow = 0; ow < OW; ++ow) {
                  const int iw = ow * stride - pad + j;
                  if (iw < 0 || iw >= W) continue;
                  acc += g.at4(n, f, oh, ow) * xv.at4(n, c, ih, iw);
                }
              }
            }
            dk.at4(f, c, i, j) = acc;
          }
        }
      }
    }
    for (int f = 0; f < F; ++f) {
      double acc = 0.0;
      for (int n = 0; n < N; ++n)
        for (int oh = 0; oh < OH; ++oh)
          for (int ow = 0; ow < OW; ++ow) acc += g.at4(n, f, oh, ow);
      db[f] = acc;
    }
    t.accumulate(in_id, dx);
    t.accumulate(k_id, dk);
    t.accumulate(b_id, db);
  });
}

// ---------------------------------------------------------------------------
// dense: affine map input . weight + bias
// ---------------------------------------------------------------------------

Var Tape::dense(Var in, Var weight, Var bias) {
  check(in);
  check(weight);
  check(bias);
  const Tensor& x = val(in.id);
  const Tensor& w = val(weight.id);
  const Tensor& b = val(bias.id);
  if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1)
    throw std::invalid_argument("dense expects [N,D] input, [D,M] weight, [M] bias");
  const int N = x.dim(0), D = x.dim(1), M = w.dim(1);
  if (w.dim(0) != D || b.dim(0) != M)
    throw std::invalid_argument("dense: dimension mismatch");

  Tensor out({N, M});
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) out.at2(n, m) = b[m];
    for (int d = 0; d < D; ++d) {
      const double xv = x.at2(n, d);
      const double* wr = w.data() + static_cast<std::int64_t>(d) * M;
      double* orow = out.data() + static_cast<std::int64_t>(n) * M;
      for (int m = 0; m < M; ++m) orow[m] += xv * wr[m];
    }
  }

  const int in_id = in.id, w_id = weight.id, b_id = bias.id;
  return emit(std::move(out), [=](Tape& t, const Tensor& g) {
    const Tensor& xv = t.val(in_id);
    const Tensor& wv = t.val(w_id);
    Tensor dx({N, D});
    Tensor dw({D, M});
    Tensor db({M});
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
      for (int d = 0; d < D; ++d) {
        double acc = 0.0;
        const double* wr = wv.data() + static_cast<std::int64_t>(d) * M;
        const double* gr = g.data() + static_cast<std::int64_t>(n) * M;
        for (int m = 0; m < M; ++m) acc += gr[m] * wr[m];
        dx.at2(n, d) = acc;
      }
    }
#pragma omp parallel for schedule(static)
    for (int d = 0; d < D; ++d) {
      double* dwr = dw.data() + static_cast<std::int64_t>(d) * M;
      for (int n = 0; n < N; ++n) {
        const double xvnd = xv.at2(n, d);
        const double* gr = g.data() + static_cast<std::int64_t>(n) * M;
        for (int m = 0; m < M; ++m) dwr[m] += xvnd * gr[m];
      }
    }
    for (int n = 0; n < N; ++n)
      for (int m = 0; m < M; ++m) db[m] += g.at2(n, m);
    t.accumulate(in_id, dx);
    t.accumulate(w_id, dw);
    t.accumulate(b_id, db);
  });
}

// ---------------------------------------------------------------------------
// batchnorm (per-channel, population variance divisor)
// ---------------------------------------------------------------------------

Var Tape::batchnorm(Var in, Var gamma, Var beta, BatchNormState& state, Mode mode) {
  check(in);
  check(gamma);
  check(beta);
  const Tensor& x = val(in.id);
  if (x.ndim() != 4) throw std::invalid_argument("batchnorm expects [N,C,H,W]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Tensor& gm = val(gamma.id);
  const Tensor& bt = val(beta.id);
  if (gm.ndim() != 1 || gm.dim(0) != C || bt.ndim() != 1 || bt.dim(0) != C)
    throw std::invalid_argument("batchnorm: gamma/beta must be [C]");
  const std::int64_t M = static_cast<std::int64_t>(N) * H * W;
  const double eps = state.eps;

  std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
  std::vector<double> invstd(static_cast<std::size_t>(C), 0.0);
  if (mode == Mode::kTrain) {
    if (M < 2) throw std::invalid_argument("batchnorm train mode needs N*H*W >= 2");
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int n = 0; n < N; ++n)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) s += x.at4(n, c, h, w);
      mean[static_cast<std::size_t>(c)] = s / static_cast<double>(M);
    }
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      const double mu = mean[static_cast<std::size_t>(c)];
      for (int n = 0; n < N; ++n)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const double d = x.at4(n, c, h, w) - mu;
            s += d * d;
          }
      const double var = s / static_cast<double>(M);
      invstd[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(var + eps);
      const double m = state.momentum;
      state.running_mean[c] = (1.0 - m) * state.running_mean[c] + m * mu;
      state.running_var[c] = (1.0 - m) * state.running_var[c] + m * var;
    }
    state.initialized = true;
  } else {
    if (!state.initialized)
      throw std::logic_error("batchnorm: eval mode before running stats were initialized");
  }
  Tensor xhat({N, C, H, W});
  if (mode == Mode::kEval) {
    for (int c = 0; c < C; ++c) {
      mean[static_cast<std::size_t>(c)] = state.running_mean[c];
      invstd[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(state.running_var[c] + eps);
    }
  }
  Tensor out({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double mu = mean[static_cast<std::size_t>(c)];
      const double is = invstd[static_cast<std::size_t>(c)];
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const double xh = (x.at4(n, c, h, w) - mu) * is;
          xhat.at4(n, c, h, w) = xh;
          out.at4(n, c, h, w) = gm[c] * xh + bt[c];
        }
    }

  const int in_id = in.id, g_id = gamma.id, b_id = beta.id;
  const bool train = (mode == Mode::kTrain);
  return emit(std::move(out), [=, xhat = std::move(xhat),
                               invstd = std::move(invstd)](Tape& t, const Tensor& g) {
    const Tensor& gmv = t.val(g_id);
    Tensor dgamma({C});
    Tensor dbeta({C});
    Tensor dx({N, C, H, W});
    for (int c = 0; c < C; ++c) {
      double sg = 0.0, sgx = 0.0;
      for (int n = 0; n < N; ++n)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const double gv = g.at4(n, c, h, w);
            sg += gv;
            sgx += gv * xhat.at4(n, c, h, w);
          }
      dbeta[c] = sg;
      dgamma[c] = sgx;
      const double is = invstd[static_cast<std::size_t>(c)];
      const double gma = gmv[c];
      if (train) {
        const double md = static_cast<double>(M);
        for (int n = 0; n < N; ++n)
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
              const double gv = g.at4(n, c, h, w) * gma;
              // reduced train-mode formula; sg/sgx are pre-scaled by gamma here
              dx.at4(n, c, h, w) =
                  is / md * (md * gv - gma * sg - xhat.at4(n, c, h, w) * gma * sgx);
            }
      } else {
        for (int n = 0; n < N; ++n)
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
              dx.at4(n, c, h, w) = g.at4(n, c, h, w) * gma * is;
      }
    }
    t.accumulate(in_id, dx);
    t.accumulate(g_id, dgamma);
    t.accumulate(b_id, dbeta);
  });
}

// ---------------------------------------------------------------------------
// element / pooling ops
// ---------------------------------------------------------------------------

Var Tape::relu(Var in) {
  check(in);
  const Tensor& x = val(in.id);
  Tensor out(x.shape());
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  const int in_id = in.id;
  return emit(std::move(out), [=](Tape& t, const Tensor& g) {
    const Tensor& xv = t.val(in_id);
    Tensor dx(xv.shape());
    for (std::int64_t i = 0; i < xv.size(); ++i) dx[i] = xv[i] > 0.0 ? g[i] : 0.0;
    t.accumulate(in_id, dx);
  });
}

Var Tape::maxpool2x2(Var in) {
  check(in);
  const Tensor& x = val(in.id);
  if (x.ndim() != 4) throw std::invalid_argument("maxpool2x2 expects [N,C,H,W]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw std::invalid_argument("maxpool2x2: spatial extents must be even");
  const int OH = H / 2, OW = W / 2;
  Tensor out({N, C, OH, OW});
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.size()));
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          double best = -1e300;
          std::int64_t best_idx = -1;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int h = 2 * oh + dy, w = 2 * ow + dx;
              const std::int64_t idx =
                  ((static_cast<std::int64_t>(n) * C + c) * H + h) * W + w;
              if (x[idx] > best) {  // ties keep the first in scan order
                best = x[idx];
                best_idx = idx;
              }
            }
          out[o] = best;
          argmax[static_cast<std::size_t>(o)] = best_idx;
          ++o;
        }
  const int in_id = in.id;
  return emit(std::move(out), [=, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
    Tensor dx(t.val(in_id).shape());
    for (std::int64_t i = 0; i < g.size(); ++i)
      dx[argmax[static_cast<std::size_t>(i)]] += g[i];
    t.accumulate(in_id, dx);
  });
}

Var Tape::global_avg_pool(Var in) {
  check(in);
  const Tensor& x = val(in.id);
  if (x.ndim() != 4) throw std::invalid_argument("global_avg_pool expects [N,C,H,W]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const double inv = 1.0 / (static_cast<double>(H) * W);
  Tensor out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) s += x.at4(n, c, h, w);
      out.at2(n, c) = s * inv;
    }
  const int in_id = in.id;
  return emit(std::move(out), [=](Tape& t, const Tensor& g) {
    Tensor dx({N, C, H, W});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const double gv = g.at2(n, c) * inv;
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) dx.at4(n, c, h, w) = gv;
      }
    t.accumulate(in_id, dx);
  });
}

Var Tape::dropout(Var in, double p, Mode mode, Rng& rng) {
  check(in);
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must satisfy 0 <= p < 1");
  const Tensor& x = val(in.id);
  const int in_id = in.id;
  if (mode == Mode::kEval || p == 0.0) {
    Tensor out = x;
    return emit(std::move(out),
                [=](Tape& t, const Tensor& g) { t.accumulate(in_id, g); });
  }
  // inverted dropout: survivors scaled by 1/(1-p) so eval is identity
  const double scale = 1.0 / (1.0 - p);
  std::vector<double> mask(static_cast<std::size_t>(x.size()));
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : scale;
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i)
    out[i] = x[i] * mask[static_cast<std::size_t>(i)];
  return emit(std::move(out), [=, mask = std::move(mask)](Tape& t, const Tensor& g) {
    Tensor dx(t.val(in_id).shape());
    for (std::int64_t i = 0; i < g.size(); ++i)
      dx[i] = g[i] * mask[static_cast<std::size_t>(i)];
    t.accumulate(in_id, dx);
  });
}

Var Tape::softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
  check(logits);
  const Tensor& z = val(logits.id);
  if (z.ndim() != 2) throw std::invalid_argument("softmax_cross_entropy expects [N,C]");
  const int N = z.dim(0), C = z.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= C)
      throw std::invalid_argument("softmax_cross_entropy: label out of range");

  Tensor probs = softmax_rows(z);
  double loss = 0.0;
  for (int i = 0; i < N; ++i) {
    // -log softmax via the stabilized identity log(sum exp(z-m)) - (z_y - m)
    double mx = z.at2(i, 0);
    for (int j = 1; j < C; ++j) mx = std::max(mx, z.at2(i, j));
    double se = 0.0;
    for (int j = 0; j < C; ++j) se += std::exp(z.at2(i, j) - mx);
    loss += std::log(se) - (z.at2(i, labels[static_cast<std::size_t>(i)]) - mx);
  }
  loss /= static_cast<double>(N);

  const int z_id = logits.id;
  std::vector<int> lab = labels;
  return emit(Tensor::scalar(loss),
              [=, probs = std::move(probs), lab = std::move(lab)](Tape& t, const Tensor& g) {
                const double gv = g[0] / static_cast<double>(N);
                Tensor dz({N, C});
                for (int i = 0; i < N; ++i)
                  for (int j = 0; j < C; ++j)
                    dz.at2(i, j) =
                        gv * (probs.at2(i, j) -
                              (j == lab[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
                t.accumulate(z_id, dz);
              });
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& av = val(a.id);
  const Tensor& bv = val(b.id);
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  const int a_id = a.id, b_id = b.id;
  return emit(std::move(out), [=](Tape& t, const Tensor& g) {
    t.accumulate(a_id, g);
    t.accumulate(b_id, g);
  });
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& av = val(a.id);
  const Tensor& bv = val(b.id);
  if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  const int a_id = a.id, b_id = b.id;
  return emit(std::move(out), [=](Tape& t, const Tensor& g) {
    const Tensor& avv = t.val(a_id);
    const Tensor& bvv = t.val(b_id);
    Tensor da(avv.shape());
    Tensor db(bvv.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) {
      da[i] = g[i] * bvv[i];
      db[i] = g[i] * avv[i];
    }
    t.accumulate(a_id, da);
    t.accumulate(b_id, db);
  });
}

Var Tape::sum(Var a) {
  check(a);
  const Tensor& av = val(a.id);
  double s = 0.0;
  for (std::int64_t i = 0; i < av.size(); ++i) s += av[i];
  const int a_id = a.id;
  return emit(Tensor::scalar(s), [=](Tape& t, const Tensor& g) {
    Tensor da(t.val(a_id).shape());
    da.fill(g[0]);
    t.accumulate(a_id, da);
  });
}

Var Tape::mse(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& av = val(a.id);
  const Tensor& bv = val(b.id);
  if (!av.same_shape(bv)) throw std::invalid_argument("mse: shape mismatch");
  const double inv = 1.0 / static_cast<double>(av.size());
  double s = 0.0;
  for (std::int64_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  const int a_id = a.id, b_id = b.id;
  return emit(Tensor::scalar(s * inv), [=](Tape& t, const Tensor& g) {
    const Tensor& avv = t.val(a_id);
    const Tensor& bvv = t.val(b_id);
    Tensor da(avv.shape());
    Tensor db(bvv.shape());
    const double c = 2.0 * inv * g[0];
    for (std::int64_t i = 0; i < avv.size(); ++i) {
      const double d = avv[i] - bvv[i];
      da[i] = c * d;
      db[i] = -c * d;
    }
    t.accumulate(a_id, da);
    t.accumulate(b_id, db);
  });
}

Var Tape::reshape(Var a, std::vector<int> shape) {
  check(a);
  const Tensor& av = val(a.id);
  if (shape_product(shape) != av.size())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out(shape, std::vector<double>(av.data(), av.data() + av.size()));
  const int a_id = a.id;
  return emit(std::move(out), [=](Tape& t, const Tensor& g) {
    const Tensor& avv = t.val(a_id);
    Tensor da(avv.shape(), std::vector<double>(g.data(), g.data() + g.size()));
    t.accumulate(a_id, da);
  });
}

Var Tape::upsample_nearest2x(Var a) {
  check(a);
  const Tensor& x = val(a.id);
  if (x.ndim() != 4) throw std::invalid_argument("upsample_nearest2x expects [N,C,H,W]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out({N, C, 2 * H, 2 * W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const double v = x.at4(n, c, h, w);
          out.at4(n, c, 2 * h, 2 * w) = v;
          out.at4(n, c, 2 * h, 2 * w + 1) = v;
          out.at4(n, c, 2 * h + 1, 2 * w) = v;
          out.at4(n, c, 2 * h + 1, 2 * w + 1) = v;
        }
  const int a_id = a.id;
  return emit(std::move(out), [=](Tape& t, const Tensor& g) {
    Tensor dx({N, C, H, W});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w)
            dx.at4(n, c, h, w) = g.at4(n, c, 2 * h, 2 * w) + g.at4(n, c, 2 * h, 2 * w + 1) +
                                 g.at4(n, c, 2 * h + 1, 2 * w) +
                                 g.at4(n, c, 2 * h + 1, 2 * w + 1);
    t.accumulate(a_id, dx);
  });
}

Var Tape::pick(Var a, std::int64_t flat_index) {
  check(a);
  const Tensor& av = val(a.id);
  if (flat_index < 0 || flat_index >= av.size())
    throw std::invalid_argument("pick: index out of range");
  const int a_id = a.id;
  return emit(Tensor::scalar(av[flat_index]), [=](Tape& t, const Tensor& g) {
    Tensor da(t.val(a_id).shape());
    da[flat_index] = g[0];
    t.accumulate(a_id, da);
  });
}

// ---------------------------------------------------------------------------
// reverse sweep
// ---------------------------------------------------------------------------

void Tape::backward(Var root) {
  check(root);
  if (val(root.id).size() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const Node& n : nodes_) grads_.emplace_back(n.value.shape());
  grads_[static_cast<std::size_t>(root.id)][0] = 1.0;
  for (int id = root.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backprop) n.backprop(*this, grads_[static_cast<std::size_t>(id)]);
  }
  backward_done_ = true;
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return val(v.id);
}

const Tensor& Tape::grad(Var v) const {
  check(v);
  if (!backward_done_) throw std::logic_error("grad requested before backward");
  return grads_[static_cast<std::size_t>(v.id)];
}

bool Tape::has_param(const std::string& name) const { return params_.count(name) > 0; }

const Tensor& Tape::param_grad(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("unknown parameter on tape: " + name);
  if (!backward_done_) throw std::logic_error("grad requested before backward");
  return grads_[static_cast<std::size_t>(it->second)];
}

// ---------------------------------------------------------------------------

double finite_difference_check(
    const std::function<double(const std::vector<Tensor*>&)>& forward,
    const std::vector<Tensor*>& params, const std::vector<Tensor>& analytic_grads,
    double h) {
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    for (std::int64_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + h;
      const double fp = forward(params);
      t[i] = orig - h;
      const double fm = forward(params);
      t[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = analytic_grads[p][i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace celiac
