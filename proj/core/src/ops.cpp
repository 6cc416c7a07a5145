#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "graph_impl.hpp"

namespace acadet {

using detail::Node;

namespace {

void require_same_mask(const SeqTensor& a, const SeqTensor& b, const char* op) {
  ACADET_CHECK(a.same_mask(b), std::string(op) + ": operand masks differ");
}

SeqTensor like(const SeqTensor& x, int channels, int length) {
  SeqTensor out(x.batch(), channels, length);
  for (int b = 0; b < x.batch(); ++b)
    out.set_valid_len(b, std::min(length, x.valid_len(b)));
  return out;
}

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

int same_padding(int kernel) {
  ACADET_CHECK(kernel >= 1 && kernel % 2 == 1,
               "same_padding: kernel must be odd, got " + std::to_string(kernel));
  return (kernel - 1) / 2;
}

Value Graph::apply_mask(Value xv) {
  Node* x = unwrap(xv, "apply_mask");
  SeqTensor out = x->val();
  out.requires_grad = false;
  out.grad.clear();
  out.zero_padding();
  return Value(make("apply_mask", std::move(out), {x}, [x](Node& n) {
    double* dx = detail::grad_of(x);
    if (!dx) return;
    const SeqTensor& o = n.val();
    for (int b = 0; b < o.batch(); ++b) {
      const int valid = o.valid_len(b);
      for (int c = 0; c < o.channels(); ++c) {
        const double* g = n.mut().grad_row(b, c);
        double* d = dx + (static_cast<std::int64_t>(b) * o.channels() + c) *
                             o.length();
        for (int t = 0; t < valid; ++t) d[t] += g[t];
      }
    }
  }));
}

Value Graph::conv1d(Value xv, Value wv, Value bv, const Conv1dSpec& spec) {
  Node* x = unwrap(xv, "conv1d");
  Node* w = unwrap(wv, "conv1d");
  Node* bias = bv.defined() ? unwrap(bv, "conv1d") : nullptr;
  const SeqTensor& xt = x->val();
  const SeqTensor& wt = w->val();
  const int cin = xt.channels(), cout = wt.batch(), k = wt.length();
  const int s = spec.stride, p = spec.padding, g = spec.groups;
  ACADET_CHECK(s >= 1 && p >= 0 && g >= 1, "conv1d: bad stride/padding/groups");
  ACADET_CHECK(cin % g == 0 && cout % g == 0,
               "conv1d: channels not divisible by groups");
  ACADET_CHECK(wt.channels() == cin / g,
               "conv1d: weight shape (" + std::to_string(wt.batch()) + ", " +
                   std::to_string(wt.channels()) + ", " +
                   std::to_string(k) + ") does not match input channels " +
                   std::to_string(cin) + " with groups " + std::to_string(g));
  if (bias)
    ACADET_CHECK(bias->val().channels() == cout && bias->val().numel() == cout,
                 "conv1d: bias shape does not match output channels");
  const int t_in = xt.length();
  const int t_out = detail::down_len(t_in, k, s, p);
  ACADET_CHECK(t_out >= 1, "conv1d: input length " + std::to_string(t_in) +
                               " too short for kernel " + std::to_string(k));

  SeqTensor out(xt.batch(), cout, t_out);
  for (int b = 0; b < xt.batch(); ++b)
    out.set_valid_len(
        b, std::min(t_out, detail::down_len(xt.valid_len(b), k, s, p)));

  const int cing = cin / g, coutg = cout / g;
  for (int b = 0; b < xt.batch(); ++b) {
    const int nin = xt.valid_len(b);
    const int nout = out.valid_len(b);
    if (nout == 0) continue;
    for (int oc = 0; oc < cout; ++oc) {
      double* o = out.row(b, oc);
      if (bias) {
        const double bval = bias->val().data()[oc];
        std::fill(o, o + nout, bval);
      }
      const int icbase = (oc / coutg) * cing;
      for (int ic = 0; ic < cing; ++ic) {
        const double* xr = xt.row(b, icbase + ic);
        const double* wr = wt.row(oc, ic);
        for (int kk = 0; kk < k; ++kk) {
          const double wval = wr[kk];
          const int off = kk - p;
          // j range with 0 <= j*s + off < nin
          int jlo = off >= 0 ? 0 : (-off + s - 1) / s;
          int jhi = (nin - 1 - off) >= 0 ? (nin - 1 - off) / s : -1;
          jhi = std::min(jhi, nout - 1);
          if (s == 1) {
            const double* xs = xr + off;
            for (int j = jlo; j <= jhi; ++j) o[j] += wval * xs[j];
          } else {
            for (int j = jlo; j <= jhi; ++j) o[j] += wval * xr[j * s + off];
          }
        }
      }
    }
  }

  std::vector<Node*> ins{x, w};
  if (bias) ins.push_back(bias);
  return Value(make(
      "conv1d", std::move(out), std::move(ins),
      [x, w, bias, s, p, g](Node& n) {
        const SeqTensor& xt2 = x->val();
        const SeqTensor& wt2 = w->val();
        const SeqTensor& o = n.val();
        const int cin2 = xt2.channels(), cout2 = wt2.batch(), k2 = wt2.length();
        const int cing2 = cin2 / g, coutg2 = cout2 / g;
        double* dx = detail::grad_of(x);
        double* dw = detail::grad_of(w);
        double* db = bias ? detail::grad_of(bias) : nullptr;
        for (int b = 0; b < xt2.batch(); ++b) {
          const int nin = xt2.valid_len(b);
          const int nout = o.valid_len(b);
          if (nout == 0) continue;
          for (int oc = 0; oc < cout2; ++oc) {
            const double* go = n.mut().grad_row(b, oc);
            if (db) {
              double acc = 0;
              for (int j = 0; j < nout; ++j) acc += go[j];
              db[oc] += acc;
            }
            const int icbase = (oc / coutg2) * cing2;
            for (int ic = 0; ic < cing2; ++ic) {
              const std::int64_t xoff =
                  (static_cast<std::int64_t>(b) * cin2 + icbase + ic) *
                  xt2.length();
              const double* xr = xt2.data().data() + xoff;
              const double* wr = wt2.row(oc, ic);
              double* dxr = dx ? dx + xoff : nullptr;
              double* dwr =
                  dw ? dw + (static_cast<std::int64_t>(oc) * cing2 + ic) * k2
                     : nullptr;
              for (int kk = 0; kk < k2; ++kk) {
                const int off = kk - p;
                int jlo = off >= 0 ? 0 : (-off + s - 1) / s;
                int jhi = (nin - 1 - off) >= 0 ? (nin - 1 - off) / s : -1;
                jhi = std::min(jhi, nout - 1);
                if (jlo > jhi) continue;
                if (dwr) {
                  double acc = 0;
                  if (s == 1) {
                    const double* xs = xr + off;
                    for (int j = jlo; j <= jhi; ++j) acc += go[j] * xs[j];
                  } else {
                    for (int j = jlo; j <= jhi; ++j)
                      acc += go[j] * xr[j * s + off];
                  }
                  dwr[kk] += acc;
                }
                if (dxr) {
                  const double wval = wr[kk];
                  if (s == 1) {
                    double* ds = dxr + off;
                    for (int j = jlo; j <= jhi; ++j) ds[j] += wval * go[j];
                  } else {
                    for (int j = jlo; j <= jhi; ++j)
                      dxr[j * s + off] += wval * go[j];
                  }
                }
              }
            }
          }
        }
      }));
}

Value Graph::linear(Value xv, Value wv, Value bv) {
  Node* x = unwrap(xv, "linear");
  Node* w = unwrap(wv, "linear");
  Node* bias = bv.defined() ? unwrap(bv, "linear") : nullptr;
  const SeqTensor& xt = x->val();
  const SeqTensor& wt = w->val();
  const int cin = xt.channels(), cout = wt.batch(), t_len = xt.length();
  ACADET_CHECK(wt.channels() == cin && wt.length() == 1,
               "linear: weight shape does not match input channels");
  if (bias)
    ACADET_CHECK(bias->val().numel() == cout,
                 "linear: bias shape does not match output channels");

  SeqTensor out = like(xt, cout, t_len);
  for (int b = 0; b < xt.batch(); ++b) {
    const int n = out.valid_len(b);
    if (n == 0) continue;
    for (int oc = 0; oc < cout; ++oc) {
      double* o = out.row(b, oc);
      if (bias) std::fill(o, o + n, bias->val().data()[oc]);
      const double* wr = wt.row(oc, 0);
      for (int ic = 0; ic < cin; ++ic) {
        const double wval = wr[ic];
        const double* xr = xt.row(b, ic);
        for (int t = 0; t < n; ++t) o[t] += wval * xr[t];
      }
    }
  }

  std::vector<Node*> ins{x, w};
  if (bias) ins.push_back(bias);
  return Value(make(
      "linear", std::move(out), std::move(ins),
      [x, w, bias](Node& n2) {
        const SeqTensor& xt2 = x->val();
        const SeqTensor& wt2 = w->val();
        const SeqTensor& o = n2.val();
        const int cin2 = xt2.channels(), cout2 = wt2.batch();
        double* dx = detail::grad_of(x);
        double* dw = detail::grad_of(w);
        double* db = bias ? detail::grad_of(bias) : nullptr;
        for (int b = 0; b < xt2.batch(); ++b) {
          const int n = o.valid_len(b);
          if (n == 0) continue;
          for (int oc = 0; oc < cout2; ++oc) {
            const double* go = n2.mut().grad_row(b, oc);
            if (db) {
              double acc = 0;
              for (int t = 0; t < n; ++t) acc += go[t];
              db[oc] += acc;
            }
            const double* wr = wt2.row(oc, 0);
            double* dwr = dw ? dw + static_cast<std::int64_t>(oc) * cin2 : nullptr;
            for (int ic = 0; ic < cin2; ++ic) {
              const std::int64_t xoff =
                  (static_cast<std::int64_t>(b) * cin2 + ic) * xt2.length();
              if (dwr) {
                const double* xr = xt2.data().data() + xoff;
                double acc = 0;
                for (int t = 0; t < n; ++t) acc += go[t] * xr[t];
                dwr[ic] += acc;
              }
              if (dx) {
                double* dxr = dx + xoff;
                const double wval = wr[ic];
                for (int t = 0; t < n; ++t) dxr[t] += wval * go[t];
              }
            }
          }
        }
      }));
}

Value Graph::layer_norm(Value xv, Value gv, Value bv, double eps) {
  Node* x = unwrap(xv, "layer_norm");
  Node* gamma = unwrap(gv, "layer_norm");
  Node* beta = unwrap(bv, "layer_norm");
  const SeqTensor& xt = x->val();
  const int C = xt.channels(), T = xt.length(), B = xt.batch();
  ACADET_CHECK(gamma->val().numel() == C && beta->val().numel() == C,
               "layer_norm: scale/shift shape does not match channels");
  ACADET_CHECK(C >= 1, "layer_norm: empty channel axis");

  SeqTensor out = like(xt, C, T);
  SeqTensor xhat = like(xt, C, T);
  SeqTensor inv_std = like(xt, 1, T);
  std::vector<double> mean(T), var(T);
  for (int b = 0; b < B; ++b) {
    const int n = xt.valid_len(b);
    if (n == 0) continue;
    std::fill(mean.begin(), mean.begin() + n, 0.0);
    std::fill(var.begin(), var.begin() + n, 0.0);
    for (int c = 0; c < C; ++c) {
      const double* xr = xt.row(b, c);
      for (int t = 0; t < n; ++t) mean[t] += xr[t];
    }
    for (int t = 0; t < n; ++t) mean[t] /= C;
    for (int c = 0; c < C; ++c) {
      const double* xr = xt.row(b, c);
      for (int t = 0; t < n; ++t) {
        const double d = xr[t] - mean[t];
        var[t] += d * d;
      }
    }
    double* ivr = inv_std.row(b, 0);
    for (int t = 0; t < n; ++t) ivr[t] = 1.0 / std::sqrt(var[t] / C + eps);
    for (int c = 0; c < C; ++c) {
      const double* xr = xt.row(b, c);
      double* xh = xhat.row(b, c);
      double* o = out.row(b, c);
      const double gc = gamma->val().data()[c];
      const double bc = beta->val().data()[c];
      for (int t = 0; t < n; ++t) {
        xh[t] = (xr[t] - mean[t]) * ivr[t];
        o[t] = gc * xh[t] + bc;
      }
    }
  }

  auto xhat_p = std::make_shared<SeqTensor>(std::move(xhat));
  auto inv_p = std::make_shared<SeqTensor>(std::move(inv_std));
  return Value(make(
      "layer_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat_p, inv_p](Node& n2) {
        const SeqTensor& xt2 = x->val();
        const int C2 = xt2.channels(), B2 = xt2.batch();
        double* dx = detail::grad_of(x);
        double* dgamma = detail::grad_of(gamma);
        double* dbeta = detail::grad_of(beta);
        const int T2 = xt2.length();
        std::vector<double> s1(T2), s2(T2);
        for (int b = 0; b < B2; ++b) {
          const int n = xt2.valid_len(b);
          if (n == 0) continue;
          std::fill(s1.begin(), s1.begin() + n, 0.0);
          std::fill(s2.begin(), s2.begin() + n, 0.0);
          for (int c = 0; c < C2; ++c) {
            const double* go = n2.mut().grad_row(b, c);
            const double* xh = xhat_p->row(b, c);
            const double gc = gamma->val().data()[c];
            if (dgamma) {
              double accg = 0, accb = 0;
              for (int t = 0; t < n; ++t) {
                accg += go[t] * xh[t];
                accb += go[t];
              }
              dgamma[c] += accg;
              if (dbeta) dbeta[c] += accb;
            } else if (dbeta) {
              double accb = 0;
              for (int t = 0; t < n; ++t) accb += go[t];
              dbeta[c] += accb;
            }
            for (int t = 0; t < n; ++t) {
              const double gt = go[t] * gc;
              s1[t] += gt;
              s2[t] += gt * xh[t];
            }
          }
          if (!dx) continue;
          const double* ivr = inv_p->row(b, 0);
          for (int c = 0; c < C2; ++c) {
            const double* go = n2.mut().grad_row(b, c);
            const double* xh = xhat_p->row(b, c);
            const double gc = gamma->val().data()[c];
            double* dxr = dx + (static_cast<std::int64_t>(b) * C2 + c) * T2;
            for (int t = 0; t < n; ++t) {
              const double gt = go[t] * gc;
              dxr[t] += ivr[t] * (gt - s1[t] / C2 - xh[t] * s2[t] / C2);
            }
          }
        }
      }));
}

Value Graph::relu(Value xv) {
  Node* x = unwrap(xv, "relu");
  const SeqTensor& xt = x->val();
  SeqTensor out = like(xt, xt.channels(), xt.length());
  for (int b = 0; b < xt.batch(); ++b) {
    const int n = xt.valid_len(b);
    for (int c = 0; c < xt.channels(); ++c) {
      const double* xr = xt.row(b, c);
      double* o = out.row(b, c);
      for (int t = 0; t < n; ++t) o[t] = xr[t] > 0 ? xr[t] : 0.0;
    }
  }
  return Value(make("relu", std::move(out), {x}, [x](Node& n2) {
    double* dx = detail::grad_of(x);
    if (!dx) return;
    const SeqTensor& xt2 = x->val();
    for (int b = 0; b < xt2.batch(); ++b) {
      const int n = xt2.valid_len(b);
      for (int c = 0; c < xt2.channels(); ++c) {
        const double* xr = xt2.row(b, c);
        const double* go = n2.mut().grad_row(b, c);
        double* dxr =
            dx + (static_cast<std::int64_t>(b) * xt2.channels() + c) *
                     xt2.length();
        for (int t = 0; t < n; ++t)
          if (xr[t] > 0) dxr[t] += go[t];
      }
    }
  }));
}

Value Graph::gelu(Value xv) {
  Node* x = unwrap(xv, "gelu");
  const SeqTensor& xt = x->val();
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  SeqTensor out = like(xt, xt.channels(), xt.length());
  for (int b = 0; b < xt.batch(); ++b) {
    const int n = xt.valid_len(b);
    for (int c = 0; c < xt.channels(); ++c) {
      const double* xr = xt.row(b, c);
      double* o = out.row(b, c);
      for (int t = 0; t < n; ++t)
        o[t] = 0.5 * xr[t] * (1.0 + std::erf(xr[t] * inv_sqrt2));
    }
  }
  return Value(make("gelu", std::move(out), {x}, [x](Node& n2) {
    double* dx = detail::grad_of(x);
    if (!dx) return;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    const SeqTensor& xt2 = x->val();
    for (int b = 0; b < xt2.batch(); ++b) {
      const int n = xt2.valid_len(b);
      for (int c = 0; c < xt2.channels(); ++c) {
        const double* xr = xt2.row(b, c);
        const double* go = n2.mut().grad_row(b, c);
        double* dxr =
            dx + (static_cast<std::int64_t>(b) * xt2.channels() + c) *
                     xt2.length();
        for (int t = 0; t < n; ++t) {
          const double v = xr[t];
          const double cdf = 0.5 * (1.0 + std::erf(v * 0.70710678118654752440));
          const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
          dxr[t] += go[t] * (cdf + v * pdf);
        }
      }
    }
  }));
}

Value Graph::sigmoid(Value xv) {
  Node* x = unwrap(xv, "sigmoid");
  const SeqTensor& xt = x->val();
  SeqTensor out = like(xt, xt.channels(), xt.length());
  for (int b = 0; b < xt.batch(); ++b) {
    const int n = xt.valid_len(b);
    for (int c = 0; c < xt.channels(); ++c) {
      const double* xr = xt.row(b, c);
      double* o = out.row(b, c);
      for (int t = 0; t < n; ++t) o[t] = 1.0 / (1.0 + std::exp(-xr[t]));
    }
  }
  auto out_p = std::make_shared<SeqTensor>(out);
  return Value(make("sigmoid", std::move(out), {x}, [x, out_p](Node& n2) {
    double* dx = detail::grad_of(x);
    if (!dx) return;
    const SeqTensor& xt2 = x->val();
    for (int b = 0; b < xt2.batch(); ++b) {
      const int n = xt2.valid_len(b);
      for (int c = 0; c < xt2.channels(); ++c) {
        const double* s = out_p->row(b, c);
        const double* go = n2.mut().grad_row(b, c);
        double* dxr =
            dx + (static_cast<std::int64_t>(b) * xt2.channels() + c) *
                     xt2.length();
        for (int t = 0; t < n; ++t) dxr[t] += go[t] * s[t] * (1.0 - s[t]);
      }
    }
  }));
}

Value Graph::channel_max(Value xv) {
  Node* x = unwrap(xv, "channel_max");
  const SeqTensor& xt = x->val();
  const int C = xt.channels();
  ACADET_CHECK(C >= 1, "channel_max: empty channel axis");
  SeqTensor out = like(xt, 1, xt.length());
  auto arg = std::make_shared<std::vector<int>>(
      static_cast<std::size_t>(xt.batch()) * xt.length(), 0);
  for (int b = 0; b < xt.batch(); ++b) {
    const int n = xt.valid_len(b);
    double* o = out.row(b, 0);
    int* ar = arg->data() + static_cast<std::size_t>(b) * xt.length();
    for (int t = 0; t < n; ++t) {
      double best = xt.at(b, 0, t);
      int bi = 0;
      for (int c = 1; c < C; ++c) {
        const double v = xt.at(b, c, t);
        if (v > best) {
          best = v;
          bi = c;
        }
      }
      o[t] = best;
      ar[t] = bi;
    }
  }
  return Value(make("channel_max", std::move(out), {x}, [x, arg](Node& n2) {
    double* dx = detail::grad_of(x);
    if (!dx) return;
    const SeqTensor& xt2 = x->val();
    const SeqTensor& o = n2.val();
    for (int b = 0; b < xt2.batch(); ++b) {
      const int n = o.valid_len(b);
      const double* go = n2.mut().grad_row(b, 0);
      const int* ar = arg->data() + static_cast<std::size_t>(b) * xt2.length();
      for (int t = 0; t < n; ++t)
        dx[(static_cast<std::int64_t>(b) * xt2.channels() + ar[t]) *
               xt2.length() +
           t] += go[t];
    }
  }));
}

Value Graph::channel_avg(Value xv) {
  Node* x = unwrap(xv, "channel_avg");
  const SeqTensor& xt = x->val();
  const int C = xt.channels();
  ACADET_CHECK(C >= 1, "channel_avg: empty channel axis");
  SeqTensor out = like(xt, 1, xt.length());
  for (int b = 0; b < xt.batch(); ++b) {
    const int n = xt.valid_len(b);
    double* o = out.row(b, 0);
    for (int c = 0; c < C; ++c) {
      const double* xr = xt.row(b, c);
      for (int t = 0; t < n; ++t) o[t] += xr[t];
    }
    for (int t = 0; t < n; ++t) o[t] /= C;
  }
  return Value(make("channel_avg", std::move(out), {x}, [x](Node& n2) {
    double* dx = detail::grad_of(x);
    if (!dx) return;
    const SeqTensor& xt2 = x->val();
    const int C2 = xt2.channels();
    for (int b = 0; b < xt2.batch(); ++b) {
      const int n = xt2.valid_len(b);
      const double* go = n2.mut().grad_row(b, 0);
      for (int c = 0; c < C2; ++c) {
        double* dxr =
            dx + (static_cast<std::int64_t>(b) * C2 + c) * xt2.length();
        for (int t = 0; t < n; ++t) dxr[t] += go[t] / C2;
      }
    }
  }));
}

Value Graph::temporal_max_pool(Value xv, int kernel, int stride, int padding) {
  Node* x = unwrap(xv, "temporal_max_pool");
  const SeqTensor& xt = x->val();
  ACADET_CHECK(kernel >= 1 && stride >= 1 && padding >= 0,
               "temporal_max_pool: bad kernel/stride/padding");
  const int t_out = detail::down_len(xt.length(), kernel, stride, padding);
  ACADET_CHECK(t_out >= 1, "temporal_max_pool: input too short");
  const int C = xt.channels();
  SeqTensor out(xt.batch(), C, t_out);
  for (int b = 0; b < xt.batch(); ++b)
    out.set_valid_len(b, std::min(t_out, detail::down_len(xt.valid_len(b),
                                                          kernel, stride,
                                                          padding)));
  auto arg = std::make_shared<std::vector<int>>(
      static_cast<std::size_t>(out.numel()), -1);
  for (int b = 0; b < xt.batch(); ++b) {
    const int nin = xt.valid_len(b);
    const int nout = out.valid_len(b);
    for (int c = 0; c < C; ++c) {
      const double* xr = xt.row(b, c);
      double* o = out.row(b, c);
      int* ar = arg->data() +
                (static_cast<std::int64_t>(b) * C + c) * t_out;
      for (int j = 0; j < nout; ++j) {
        const int lo = std::max(0, j * stride - padding);
        const int hi = std::min(nin - 1, j * stride - padding + kernel - 1);
        double best = -std::numeric_limits<double>::infinity();
        int bi = -1;
        for (int t = lo; t <= hi; ++t)
          if (xr[t] > best) {
            best = xr[t];
            bi = t;
          }
        if (bi >= 0) {
          o[j] = best;
          ar[j] = bi;
        }
      }
    }
  }
  return Value(make("temporal_max_pool", std::move(out), {x},
                    [x, arg](Node& n2) {
                      double* dx = detail::grad_of(x);
                      if (!dx) return;
                      const SeqTensor& xt2 = x->val();
                      const SeqTensor& o = n2.val();
                      const int C2 = xt2.channels();
                      for (int b = 0; b < xt2.batch(); ++b) {
                        const int nout = o.valid_len(b);
                        for (int c = 0; c < C2; ++c) {
                          const double* go = n2.mut().grad_row(b, c);
                          const int* ar =
                              arg->data() +
                              (static_cast<std::int64_t>(b) * C2 + c) *
                                  o.length();
                          double* dxr =
                              dx + (static_cast<std::int64_t>(b) * C2 + c) *
                                       xt2.length();
                          for (int j = 0; j < nout; ++j)
                            if (ar[j] >= 0) dxr[ar[j]] += go[j];
                        }
                      }
                    }));
}

Value Graph::add(Value av, Value bv) {
  Node* a = unwrap(av, "add");
  Node* b = unwrap(bv, "add");
  ACADET_CHECK(a->val().same_shape(b->val()), "add: shape mismatch");
  require_same_mask(a->val(), b->val(), "add");
  const SeqTensor& at = a->val();
  SeqTensor out = like(at, at.channels(), at.length());
  for (int bb = 0; bb < at.batch(); ++bb) {
    const int n = at.valid_len(bb);
    for (int c = 0; c < at.channels(); ++c) {
      const double* ar = at.row(bb, c);
      const double* br = b->val().row(bb, c);
      double* o = out.row(bb, c);
      for (int t = 0; t < n; ++t) o[t] = ar[t] + br[t];
    }
  }
  return Value(make("add", std::move(out), {a, b}, [a, b](Node& n2) {
    const SeqTensor& o = n2.val();
    for (Node* in : {a, b}) {
      double* d = detail::grad_of(in);
      if (!d) continue;
      for (int bb = 0; bb < o.batch(); ++bb) {
        const int n = o.valid_len(bb);
        for (int c = 0; c < o.channels(); ++c) {
          const double* go = n2.mut().grad_row(bb, c);
          double* dr =
              d + (static_cast<std::int64_t>(bb) * o.channels() + c) *
                      o.length();
          for (int t = 0; t < n; ++t) dr[t] += go[t];
        }
      }
    }
  }));
}

Value Graph::mul(Value av, Value bv) {
  Node* a = unwrap(av, "mul");
  Node* b = unwrap(bv, "mul");
  ACADET_CHECK(a->val().same_shape(b->val()), "mul: shape mismatch");
  require_same_mask(a->val(), b->val(), "mul");
  const SeqTensor& at = a->val();
  SeqTensor out = like(at, at.channels(), at.length());
  for (int bb = 0; bb < at.batch(); ++bb) {
    const int n = at.valid_len(bb);
    for (int c = 0; c < at.channels(); ++c) {
      const double* ar = at.row(bb, c);
      const double* br = b->val().row(bb, c);
      double* o = out.row(bb, c);
      for (int t = 0; t < n; ++t) o[t] = ar[t] * br[t];
    }
  }
  return Value(make("mul", std::move(out), {a, b}, [a, b](Node& n2) {
    const SeqTensor& o = n2.val();
    double* da = detail::grad_of(a);
    double* db = detail::grad_of(b);
    for (int bb = 0; bb < o.batch(); ++bb) {
      const int n = o.valid_len(bb);
      for (int c = 0; c < o.channels(); ++c) {
        const double* go = n2.mut().grad_row(bb, c);
        const double* ar = a->val().row(bb, c);
        const double* br = b->val().row(bb, c);
        const std::int64_t off =
            (static_cast<std::int64_t>(bb) * o.channels() + c) * o.length();
        if (da)
          for (int t = 0; t < n; ++t) da[off + t] += go[t] * br[t];
        if (db)
          for (int t = 0; t < n; ++t) db[off + t] += go[t] * ar[t];
      }
    }
  }));
}

Value Graph::broadcast_mul(Value xv, Value gatev) {
  Node* x = unwrap(xv, "broadcast_mul");
  Node* gate = unwrap(gatev, "broadcast_mul");
  const SeqTensor& xt = x->val();
  const SeqTensor& gt = gate->val();
  ACADET_CHECK(gt.channels() == 1 && gt.batch() == xt.batch() &&
                   gt.length() == xt.length(),
               "broadcast_mul: gate must be (B, 1, T)");
  require_same_mask(xt, gt, "broadcast_mul");
  SeqTensor out = like(xt, xt.channels(), xt.length());
  for (int b = 0; b < xt.batch(); ++b) {
    const int n = xt.valid_len(b);
    const double* gr = gt.row(b, 0);
    for (int c = 0; c < xt.channels(); ++c) {
      const double* xr = xt.row(b, c);
      double* o = out.row(b, c);
      for (int t = 0; t < n; ++t) o[t] = xr[t] * gr[t];
    }
  }
  return Value(make("broadcast_mul", std::move(out), {x, gate},
                    [x, gate](Node& n2) {
                      const SeqTensor& xt2 = x->val();
                      const SeqTensor& gt2 = gate->val();
                      const int C = xt2.channels(), T = xt2.length();
                      double* dx = detail::grad_of(x);
                      double* dg = detail::grad_of(gate);
                      for (int b = 0; b < xt2.batch(); ++b) {
                        const int n = xt2.valid_len(b);
                        const double* gr = gt2.row(b, 0);
                        for (int c = 0; c < C; ++c) {
                          const double* go = n2.mut().grad_row(b, c);
                          const double* xr = xt2.row(b, c);
                          if (dx) {
                            double* dxr =
                                dx + (static_cast<std::int64_t>(b) * C + c) * T;
                            for (int t = 0; t < n; ++t)
                              dxr[t] += go[t] * gr[t];
                          }
                          if (dg) {
                            double* dgr =
                                dg + static_cast<std::int64_t>(b) * T;
                            for (int t = 0; t < n; ++t)
                              dgr[t] += go[t] * xr[t];
                          }
                        }
                      }
                    }));
}

Value Graph::concat_channels(const std::vector<Value>& xs) {
  ACADET_CHECK(!xs.empty(), "concat_channels: no inputs");
  std::vector<Node*> ins;
  ins.reserve(xs.size());
  for (const Value& v : xs) ins.push_back(unwrap(v, "concat_channels"));
  const SeqTensor& first = ins[0]->val();
  int total = 0;
  for (Node* in : ins) {
    require_same_mask(first, in->val(), "concat_channels");
    total += in->val().channels();
  }
  SeqTensor out = like(first, total, first.length());
  int base = 0;
  for (Node* in : ins) {
    const SeqTensor& t = in->val();
    for (int b = 0; b < t.batch(); ++b) {
      const int n = t.valid_len(b);
      for (int c = 0; c < t.channels(); ++c)
        std::copy(t.row(b, c), t.row(b, c) + n, out.row(b, base + c));
    }
    base += t.channels();
  }
  return Value(make("concat_channels", std::move(out), ins, [ins](Node& n2) {
    int base2 = 0;
    for (Node* in : ins) {
      const SeqTensor& t = in->val();
      double* d = detail::grad_of(in);
      if (d) {
        for (int b = 0; b < t.batch(); ++b) {
          const int n = t.valid_len(b);
          for (int c = 0; c < t.channels(); ++c) {
            const double* go = n2.mut().grad_row(b, base2 + c);
            double* dr =
                d + (static_cast<std::int64_t>(b) * t.channels() + c) *
                        t.length();
            for (int tt = 0; tt < n; ++tt) dr[tt] += go[tt];
          }
        }
      }
      base2 += t.channels();
    }
  }));
}

Value Graph::slice_channels(Value xv, int first, int count) {
  Node* x = unwrap(xv, "slice_channels");
  const SeqTensor& xt = x->val();
  ACADET_CHECK(first >= 0 && count >= 1 && first + count <= xt.channels(),
               "slice_channels: range out of bounds");
  SeqTensor out = like(xt, count, xt.length());
  for (int b = 0; b < xt.batch(); ++b) {
    const int n = xt.valid_len(b);
    for (int c = 0; c < count; ++c)
      std::copy(xt.row(b, first + c), xt.row(b, first + c) + n, out.row(b, c));
  }
  return Value(
      make("slice_channels", std::move(out), {x}, [x, first, count](Node& n2) {
        double* dx = detail::grad_of(x);
        if (!dx) return;
        const SeqTensor& xt2 = x->val();
        for (int b = 0; b < xt2.batch(); ++b) {
          const int n = xt2.valid_len(b);
          for (int c = 0; c < count; ++c) {
            const double* go = n2.mut().grad_row(b, c);
            double* dxr = dx + (static_cast<std::int64_t>(b) * xt2.channels() +
                                first + c) *
                                   xt2.length();
            for (int t = 0; t < n; ++t) dxr[t] += go[t];
          }
        }
      }));
}

Value Graph::scale(Value xv, double factor) {
  Node* x = unwrap(xv, "scale");
  const SeqTensor& xt = x->val();
  SeqTensor out = like(xt, xt.channels(), xt.length());
  for (int b = 0; b < xt.batch(); ++b) {
    const int n = xt.valid_len(b);
    for (int c = 0; c < xt.channels(); ++c) {
      const double* xr = xt.row(b, c);
      double* o = out.row(b, c);
      for (int t = 0; t < n; ++t) o[t] = factor * xr[t];
    }
  }
  return Value(make("scale", std::move(out), {x}, [x, factor](Node& n2) {
    double* dx = detail::grad_of(x);
    if (!dx) return;
    const SeqTensor& o = n2.val();
    for (int b = 0; b < o.batch(); ++b) {
      const int n = o.valid_len(b);
      for (int c = 0; c < o.channels(); ++c) {
        const double* go = n2.mut().grad_row(b, c);
        double* dxr =
            dx + (static_cast<std::int64_t>(b) * o.channels() + c) * o.length();
        for (int t = 0; t < n; ++t) dxr[t] += factor * go[t];
      }
    }
  }));
}

Value Graph::focal_loss(Value logitsv, const SeqTensor& targets, double alpha,
                        double gamma) {
  Node* logits = unwrap(logitsv, "focal_loss");
  const SeqTensor& zt = logits->val();
  ACADET_CHECK(zt.same_shape(targets), "focal_loss: target shape mismatch");
  ACADET_CHECK(alpha > 0.0 && alpha < 1.0 && gamma >= 0.0,
               "focal_loss: alpha must be in (0,1) and gamma >= 0");
  SeqTensor out = like(zt, zt.channels(), zt.length());
  for (int b = 0; b < zt.batch(); ++b) {
    const int n = zt.valid_len(b);
    for (int c = 0; c < zt.channels(); ++c) {
      const double* zr = zt.row(b, c);
      const double* yr = targets.row(b, c);
      double* o = out.row(b, c);
      for (int t = 0; t < n; ++t) {
        const double z = zr[t];
        const double log_p = -softplus(-z);
        const double log_q = -softplus(z);
        const double p = std::exp(log_p);
        const double q = std::exp(log_q);
        o[t] = yr[t] > 0.5 ? -alpha * std::pow(q, gamma) * log_p
                           : -(1.0 - alpha) * std::pow(p, gamma) * log_q;
      }
    }
  }
  SeqTensor tgt = targets;
  return Value(make(
      "focal_loss", std::move(out), {logits},
      [logits, tgt = std::move(tgt), alpha, gamma](Node& n2) {
        double* dz = detail::grad_of(logits);
        if (!dz) return;
        const SeqTensor& zt2 = logits->val();
        const int C = zt2.channels(), T = zt2.length();
        for (int b = 0; b < zt2.batch(); ++b) {
          const int n = zt2.valid_len(b);
          for (int c = 0; c < C; ++c) {
            const double* zr = zt2.row(b, c);
            const double* yr = tgt.row(b, c);
            const double* go = n2.mut().grad_row(b, c);
            double* dzr = dz + (static_cast<std::int64_t>(b) * C + c) * T;
            for (int t = 0; t < n; ++t) {
              const double z = zr[t];
              const double log_p = -softplus(-z);
              const double log_q = -softplus(z);
              const double p = std::exp(log_p);
              const double q = std::exp(log_q);
              double d;
              if (yr[t] > 0.5)
                d = alpha * gamma * p * std::pow(q, gamma) * log_p -
                    alpha * std::pow(q, gamma + 1.0);
              else
                d = (1.0 - alpha) * std::pow(p, gamma + 1.0) -
                    (1.0 - alpha) * gamma * q * std::pow(p, gamma) * log_q;
              dzr[t] += go[t] * d;
            }
          }
        }
      }));
}

namespace {

struct GiouParts {
  double loss, d_ps, d_pe;
};

GiouParts giou_with_grad(double ps, double pe, double qs, double qe) {
  const double la = ps + pe, lb = qs + qe;
  const double inter_raw = std::min(pe, qe) + std::min(ps, qs);
  const double inter = std::max(0.0, inter_raw);
  const double uni = la + lb - inter;
  const double hull = std::max(pe, qe) + std::max(ps, qs);
  const double di_dps = (inter_raw > 0 && ps < qs) ? 1.0 : 0.0;
  const double di_dpe = (inter_raw > 0 && pe < qe) ? 1.0 : 0.0;
  const double du_dps = 1.0 - di_dps;
  const double du_dpe = 1.0 - di_dpe;
  const double dh_dps = ps > qs ? 1.0 : 0.0;
  const double dh_dpe = pe > qe ? 1.0 : 0.0;
  // loss = 1 - I/U + (H - U)/H = 2 - I/U - U/H
  const double u2 = uni * uni, h2 = hull * hull;
  GiouParts r;
  r.loss = 2.0 - inter / uni - uni / hull;
  r.d_ps = -(di_dps * uni - inter * du_dps) / u2 -
           (du_dps * hull - uni * dh_dps) / h2;
  r.d_pe = -(di_dpe * uni - inter * du_dpe) / u2 -
           (du_dpe * hull - uni * dh_dpe) / h2;
  return r;
}

}  // namespace

Value Graph::giou_loss(Value offsetsv, const SeqTensor& target_offsets,
                       const SeqTensor& positive) {
  Node* off = unwrap(offsetsv, "giou_loss");
  const SeqTensor& ot = off->val();
  ACADET_CHECK(ot.channels() == 2, "giou_loss: offsets must be (B, 2, T)");
  ACADET_CHECK(ot.same_shape(target_offsets),
               "giou_loss: target shape mismatch");
  ACADET_CHECK(positive.batch() == ot.batch() && positive.channels() == 1 &&
                   positive.length() == ot.length(),
               "giou_loss: positive mask must be (B, 1, T)");
  SeqTensor out = like(ot, 1, ot.length());
  for (int b = 0; b < ot.batch(); ++b) {
    const int n = ot.valid_len(b);
    const double* ps_r = ot.row(b, 0);
    const double* pe_r = ot.row(b, 1);
    const double* qs_r = target_offsets.row(b, 0);
    const double* qe_r = target_offsets.row(b, 1);
    const double* pos = positive.row(b, 0);
    double* o = out.row(b, 0);
    for (int t = 0; t < n; ++t) {
      if (pos[t] == 0.0) continue;
      ACADET_CHECK(qs_r[t] >= 0 && qe_r[t] >= 0 && qs_r[t] + qe_r[t] > 0,
                   "giou_loss: degenerate target interval at a positive step");
      ACADET_CHECK(ps_r[t] >= 0 && pe_r[t] >= 0,
                   "giou_loss: negative predicted offset");
      o[t] = giou_with_grad(ps_r[t], pe_r[t], qs_r[t], qe_r[t]).loss;
    }
  }
  SeqTensor tgt = target_offsets;
  SeqTensor pos_copy = positive;
  return Value(make(
      "giou_loss", std::move(out), {off},
      [off, tgt = std::move(tgt), pos_copy = std::move(pos_copy)](Node& n2) {
        double* d = detail::grad_of(off);
        if (!d) return;
        const SeqTensor& ot2 = off->val();
        const int T = ot2.length();
        for (int b = 0; b < ot2.batch(); ++b) {
          const int n = ot2.valid_len(b);
          const double* ps_r = ot2.row(b, 0);
          const double* pe_r = ot2.row(b, 1);
          const double* qs_r = tgt.row(b, 0);
          const double* qe_r = tgt.row(b, 1);
          const double* pos = pos_copy.row(b, 0);
          const double* go = n2.mut().grad_row(b, 0);
          double* dps = d + (static_cast<std::int64_t>(b) * 2 + 0) * T;
          double* dpe = d + (static_cast<std::int64_t>(b) * 2 + 1) * T;
          for (int t = 0; t < n; ++t) {
            if (pos[t] == 0.0) continue;
            const GiouParts gp =
                giou_with_grad(ps_r[t], pe_r[t], qs_r[t], qe_r[t]);
            dps[t] += go[t] * gp.d_ps;
            dpe[t] += go[t] * gp.d_pe;
          }
        }
      }));
}

Value Graph::weighted_sum(Value xv, const SeqTensor& weights) {
  Node* x = unwrap(xv, "weighted_sum");
  const SeqTensor& xt = x->val();
  ACADET_CHECK(xt.same_shape(weights), "weighted_sum: weight shape mismatch");
  double acc = 0;
  for (int b = 0; b < xt.batch(); ++b) {
    const int n = xt.valid_len(b);
    for (int c = 0; c < xt.channels(); ++c) {
      const double* xr = xt.row(b, c);
      const double* wr = weights.row(b, c);
      for (int t = 0; t < n; ++t) acc += xr[t] * wr[t];
    }
  }
  SeqTensor out(1, 1, 1);
  out.at(0, 0, 0) = acc;
  SeqTensor w = weights;
  return Value(
      make("weighted_sum", std::move(out), {x}, [x, w = std::move(w)](Node& n2) {
        double* dx = detail::grad_of(x);
        if (!dx) return;
        const double g = n2.mut().grad[0];
        const SeqTensor& xt2 = x->val();
        const int C = xt2.channels(), T = xt2.length();
        for (int b = 0; b < xt2.batch(); ++b) {
          const int n = xt2.valid_len(b);
          for (int c = 0; c < C; ++c) {
            const double* wr = w.row(b, c);
            double* dxr = dx + (static_cast<std::int64_t>(b) * C + c) * T;
            for (int t = 0; t < n; ++t) dxr[t] += g * wr[t];
          }
        }
      }));
}

}  // namespace acadet
