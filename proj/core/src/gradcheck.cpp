#include "acadet/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <utility>

#include "acadet/detection.hpp"
#include "acadet/graph.hpp"
#include "acadet/model.hpp"

namespace acadet {

namespace {

// Inputs, fixed reduction weights, and any model state behind one problem.
// Held by shared_ptr so the build closure can be re-run for every finite
// difference evaluation against the same storage.
struct Ctx {
  std::vector<std::unique_ptr<SeqTensor>> tensors;
  std::vector<SeqTensor> weights;
  bool weights_ready = false;
  Rng wrng{0};

  std::unique_ptr<Model> model;
  std::vector<std::vector<ActionSegment>> gt;
  LossConfig loss_cfg;
  AssignmentTargets targets;
  bool targets_ready = false;
};

struct Problem {
  std::string name;
  std::shared_ptr<Ctx> ctx;
  std::function<Value(Graph&)> build;  // returns a scalar value
  std::vector<std::pair<std::string, SeqTensor*>> wrt;
};

SeqTensor* new_tensor(Ctx& c, Rng& rng, int B, int C, int T,
                      std::vector<int> valid, double lo, double hi,
                      double keep_away = 0.0) {
  auto t = std::make_unique<SeqTensor>(B, C, T);
  if (!valid.empty()) t->set_valid_lens(valid);
  for (int b = 0; b < B; ++b)
    for (int ch = 0; ch < C; ++ch)
      for (int i = 0; i < t->valid_len(b); ++i) {
        double v = rng.uniform(lo, hi);
        // Push values away from a kink at zero so central differences do not
        // straddle it.
        if (keep_away > 0.0 && std::abs(v) < keep_away)
          v = v < 0 ? v - keep_away : v + keep_away;
        t->at(b, ch, i) = v;
      }
  c.tensors.push_back(std::move(t));
  return c.tensors.back().get();
}

// Reduces one or more tensor outputs to a scalar with fixed random weights,
// so the whole problem has a single differentiable objective.
Value reduce(Graph& g, const std::shared_ptr<Ctx>& c,
             const std::vector<Value>& outs) {
  if (!c->weights_ready) {
    for (const Value& v : outs) {
      const SeqTensor& t = v.tensor();
      SeqTensor w(t.batch(), t.channels(), t.length());
      w.set_valid_lens(t.valid_lens());
      for (int b = 0; b < w.batch(); ++b)
        for (int ch = 0; ch < w.channels(); ++ch)
          for (int i = 0; i < w.valid_len(b); ++i)
            w.at(b, ch, i) = c->wrng.uniform(-1.0, 1.0);
      c->weights.push_back(std::move(w));
    }
    c->weights_ready = true;
  }
  Value acc;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    Value s = g.weighted_sum(outs[i], c->weights[i]);
    acc = acc.defined() ? g.add(acc, s) : s;
  }
  return acc;
}

ModelConfig tiny_config() {
  ModelConfig m;
  m.in_dim = 4;
  m.embed_dim = 8;
  m.levels = 4;
  m.cgb_kernels = {1, 3};
  m.cgb_mix_kernel = 3;
  m.lcm_large_kernel_min = 3;
  m.lcm_large_kernel_max = 5;
  m.lcm_small_kernels = {1, 3};
  m.mlp_ratio = 2;
  m.num_classes = 3;
  m.head_layers = 1;
  m.head_kernel = 3;
  return m;
}

void add_params(Problem& p, const std::string& prefix_skip = "") {
  for (auto& [name, tensor] : p.ctx->model->params().all()) {
    if (!prefix_skip.empty() && name.rfind(prefix_skip, 0) == 0) continue;
    p.wrt.emplace_back(name, &tensor);
  }
}

using Factory = Problem (*)(Rng);

Problem make_conv1d(Rng rng) {
  Problem p{"conv1d", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* x = new_tensor(c, rng, 2, 3, 7, {7, 5}, -1, 1);
  SeqTensor* w = new_tensor(c, rng, 4, 3, 3, {}, -1, 1);
  SeqTensor* b = new_tensor(c, rng, 1, 4, 1, {}, -1, 1);
  p.wrt = {{"x", x}, {"w", w}, {"b", b}};
  auto ctx = p.ctx;
  p.build = [ctx, x, w, b](Graph& g) {
    Value y = g.conv1d(g.param(*x), g.param(*w), g.param(*b), {1, 1, 1});
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_conv1d_strided(Rng rng) {
  Problem p{"conv1d_strided", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* x = new_tensor(c, rng, 2, 3, 9, {9, 6}, -1, 1);
  SeqTensor* w = new_tensor(c, rng, 2, 3, 3, {}, -1, 1);
  SeqTensor* b = new_tensor(c, rng, 1, 2, 1, {}, -1, 1);
  p.wrt = {{"x", x}, {"w", w}, {"b", b}};
  auto ctx = p.ctx;
  p.build = [ctx, x, w, b](Graph& g) {
    Value y = g.conv1d(g.param(*x), g.param(*w), g.param(*b), {2, 1, 1});
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_conv1d_depthwise(Rng rng) {
  Problem p{"conv1d_depthwise", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* x = new_tensor(c, rng, 2, 4, 8, {8, 5}, -1, 1);
  SeqTensor* w = new_tensor(c, rng, 4, 1, 5, {}, -1, 1);
  SeqTensor* b = new_tensor(c, rng, 1, 4, 1, {}, -1, 1);
  p.wrt = {{"x", x}, {"w", w}, {"b", b}};
  auto ctx = p.ctx;
  p.build = [ctx, x, w, b](Graph& g) {
    Value y = g.conv1d(g.param(*x), g.param(*w), g.param(*b), {1, 2, 4});
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_conv1d_nobias(Rng rng) {
  Problem p{"conv1d_nobias", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* x = new_tensor(c, rng, 2, 2, 6, {6, 4}, -1, 1);
  SeqTensor* w = new_tensor(c, rng, 3, 2, 3, {}, -1, 1);
  p.wrt = {{"x", x}, {"w", w}};
  auto ctx = p.ctx;
  p.build = [ctx, x, w](Graph& g) {
    Value y = g.conv1d(g.param(*x), g.param(*w), Value(), {1, 1, 1});
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_linear(Rng rng) {
  Problem p{"linear", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* x = new_tensor(c, rng, 2, 5, 6, {6, 4}, -1, 1);
  SeqTensor* w = new_tensor(c, rng, 3, 5, 1, {}, -1, 1);
  SeqTensor* b = new_tensor(c, rng, 1, 3, 1, {}, -1, 1);
  p.wrt = {{"x", x}, {"w", w}, {"b", b}};
  auto ctx = p.ctx;
  p.build = [ctx, x, w, b](Graph& g) {
    Value y = g.linear(g.param(*x), g.param(*w), g.param(*b));
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_layer_norm(Rng rng) {
  Problem p{"layer_norm", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* x = new_tensor(c, rng, 2, 6, 5, {5, 3}, -1, 1);
  SeqTensor* gamma = new_tensor(c, rng, 1, 6, 1, {}, 0.5, 1.5);
  SeqTensor* beta = new_tensor(c, rng, 1, 6, 1, {}, -0.5, 0.5);
  p.wrt = {{"x", x}, {"gamma", gamma}, {"beta", beta}};
  auto ctx = p.ctx;
  p.build = [ctx, x, gamma, beta](Graph& g) {
    Value y = g.layer_norm(g.param(*x), g.param(*gamma), g.param(*beta));
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_unary(const char* name, Rng rng, double keep_away,
                   Value (Graph::*op)(Value)) {
  Problem p{name, std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* x = new_tensor(c, rng, 2, 4, 6, {6, 4}, -1.5, 1.5, keep_away);
  p.wrt = {{"x", x}};
  auto ctx = p.ctx;
  p.build = [ctx, x, op](Graph& g) {
    Value y = (g.*op)(g.param(*x));
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_relu(Rng rng) {
  return make_unary("relu", rng, 0.01, &Graph::relu);
}
Problem make_gelu(Rng rng) {
  return make_unary("gelu", rng, 0.0, &Graph::gelu);
}
Problem make_sigmoid(Rng rng) {
  return make_unary("sigmoid", rng, 0.0, &Graph::sigmoid);
}
Problem make_channel_max(Rng rng) {
  return make_unary("channel_max", rng, 0.0, &Graph::channel_max);
}
Problem make_channel_avg(Rng rng) {
  return make_unary("channel_avg", rng, 0.0, &Graph::channel_avg);
}

Problem make_temporal_max_pool(Rng rng) {
  Problem p{"temporal_max_pool", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* x = new_tensor(c, rng, 2, 3, 9, {9, 6}, -1, 1);
  p.wrt = {{"x", x}};
  auto ctx = p.ctx;
  p.build = [ctx, x](Graph& g) {
    Value y = g.temporal_max_pool(g.param(*x), 3, 2, 1);
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_broadcast_mul(Rng rng) {
  Problem p{"broadcast_mul", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* x = new_tensor(c, rng, 2, 4, 6, {6, 4}, -1, 1);
  SeqTensor* gate = new_tensor(c, rng, 2, 1, 6, {6, 4}, -1, 1);
  p.wrt = {{"x", x}, {"gate", gate}};
  auto ctx = p.ctx;
  p.build = [ctx, x, gate](Graph& g) {
    Value y = g.broadcast_mul(g.param(*x), g.param(*gate));
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_residual_mix(Rng rng) {
  Problem p{"residual_mix", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* x = new_tensor(c, rng, 2, 3, 6, {6, 4}, -1.5, 1.5, 0.01);
  p.wrt = {{"x", x}};
  auto ctx = p.ctx;
  p.build = [ctx, x](Graph& g) {
    Value v = g.param(*x);
    Value cat = g.concat_channels({g.relu(v), g.gelu(v)});
    Value s = g.slice_channels(cat, 1, 4);
    Value y = g.add(g.mul(s, g.sigmoid(s)), g.scale(s, 0.25));
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_focal_loss(Rng rng) {
  Problem p{"focal_loss", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* logits = new_tensor(c, rng, 2, 3, 5, {5, 3}, -2, 2);
  auto targets = std::make_shared<SeqTensor>(2, 3, 5);
  targets->set_valid_lens({5, 3});
  for (int b = 0; b < 2; ++b)
    for (int u = 0; u < 3; ++u)
      for (int t = 0; t < targets->valid_len(b); ++t)
        targets->at(b, u, t) = rng.uniform_int(0, 1);
  p.wrt = {{"logits", logits}};
  auto ctx = p.ctx;
  p.build = [ctx, logits, targets](Graph& g) {
    Value y = g.focal_loss(g.param(*logits), *targets, 0.25, 2.0);
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_giou_loss(Rng rng) {
  Problem p{"giou_loss", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  SeqTensor* offs = new_tensor(c, rng, 2, 2, 6, {6, 4}, 0.2, 3.0);
  auto tgt = std::make_shared<SeqTensor>(2, 2, 6);
  tgt->set_valid_lens({6, 4});
  auto pos = std::make_shared<SeqTensor>(2, 1, 6);
  pos->set_valid_lens({6, 4});
  for (int b = 0; b < 2; ++b)
    for (int t = 0; t < tgt->valid_len(b); ++t) {
      tgt->at(b, 0, t) = rng.uniform(0.2, 3.0);
      tgt->at(b, 1, t) = rng.uniform(0.2, 3.0);
      pos->at(b, 0, t) = t == 0 ? 1.0 : rng.uniform_int(0, 1);
    }
  p.wrt = {{"offsets", offs}};
  auto ctx = p.ctx;
  p.build = [ctx, offs, tgt, pos](Graph& g) {
    Value y = g.giou_loss(g.param(*offs), *tgt, *pos);
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_projection(Rng rng) {
  Problem p{"projection", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  c.model = std::make_unique<Model>(tiny_config());
  c.model->init_params(rng.fork(8).uniform_int(0, 1 << 30));
  SeqTensor* feats = new_tensor(c, rng, 2, 4, 12, {12, 9}, -1, 1);
  p.wrt = {{"features", feats}};
  for (auto& [name, tensor] : c.model->params().all())
    if (name.rfind("proj.", 0) == 0) p.wrt.emplace_back(name, &tensor);
  auto ctx = p.ctx;
  p.build = [ctx, feats](Graph& g) {
    Value y = ctx->model->project(g, g.param(*feats));
    return reduce(g, ctx, {y});
  };
  return p;
}

Problem make_pyramid(const char* name, Rng rng, ModuleToggle toggle,
                     DownsampleKind down) {
  Problem p{name, std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  ModelConfig cfg = tiny_config();
  cfg.module_toggle = toggle;
  cfg.downsample = down;
  c.model = std::make_unique<Model>(cfg);
  c.model->init_params(rng.fork(8).uniform_int(0, 1 << 30));
  SeqTensor* feats = new_tensor(c, rng, 2, 4, 16, {16, 11}, -1, 1);
  add_params(p, "head.");
  auto ctx = p.ctx;
  p.build = [ctx, feats](Graph& g) {
    Value proj = ctx->model->project(g, g.constant(*feats));
    std::vector<Value> levels = ctx->model->forward_pyramid(g, proj);
    return reduce(g, ctx, levels);
  };
  return p;
}

Problem make_pyramid_full(Rng rng) {
  return make_pyramid("pyramid_full", rng, ModuleToggle::full,
                      DownsampleKind::maxpool);
}
Problem make_pyramid_cam_only(Rng rng) {
  return make_pyramid("pyramid_cam_only", rng, ModuleToggle::cam_only,
                      DownsampleKind::maxpool);
}
Problem make_pyramid_lcm_only(Rng rng) {
  return make_pyramid("pyramid_lcm_only", rng, ModuleToggle::lcm_only,
                      DownsampleKind::maxpool);
}
Problem make_pyramid_strided(Rng rng) {
  return make_pyramid("pyramid_strided_conv", rng, ModuleToggle::full,
                      DownsampleKind::strided_conv);
}

Problem make_heads(Rng rng) {
  Problem p{"heads", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  c.model = std::make_unique<Model>(tiny_config());
  c.model->init_params(rng.fork(8).uniform_int(0, 1 << 30));
  SeqTensor* feats = new_tensor(c, rng, 2, 4, 16, {16, 11}, -1, 1);
  add_params(p);
  auto ctx = p.ctx;
  p.build = [ctx, feats](Graph& g) {
    HeadGraph hg = ctx->model->forward(g, *feats);
    std::vector<Value> outs = hg.class_logits;
    outs.insert(outs.end(), hg.offsets.begin(), hg.offsets.end());
    return reduce(g, ctx, outs);
  };
  return p;
}

Problem make_total_loss(Rng rng) {
  Problem p{"total_loss", std::make_shared<Ctx>(), nullptr, {}};
  Ctx& c = *p.ctx;
  c.wrng = rng.fork(7);
  // Full network at the reference shape: one sequence of length 32 through
  // an 8-channel, 4-level, 3-class model, ending in the combined loss.
  c.model = std::make_unique<Model>(tiny_config());
  c.model->init_params(rng.fork(8).uniform_int(0, 1 << 30));
  SeqTensor* feats = new_tensor(c, rng, 1, 4, 32, {32}, -1, 1);
  c.gt = {{{4.0, 28.0, 0, 1.0}}};
  c.loss_cfg = LossConfig{};
  add_params(p);
  auto ctx = p.ctx;
  p.build = [ctx, feats](Graph& g) {
    HeadGraph hg = ctx->model->forward(g, *feats);
    if (!ctx->targets_ready) {
      ctx->targets = assign_targets(ctx->gt, level_shapes(hg), ctx->loss_cfg);
      // Freeze the IoU quality weights at their initial values so the loss
      // is a fixed function of the parameters during differencing.
      for (std::size_t li = 0; li < ctx->targets.levels.size(); ++li) {
        const LevelTargets& lt = ctx->targets.levels[li];
        const SeqTensor& offs = hg.offsets[li].tensor();
        std::vector<double> qv(
            static_cast<std::size_t>(ctx->targets.batch) * lt.length, 0.0);
        for (int b = 0; b < ctx->targets.batch; ++b)
          for (int t = 0; t < offs.valid_len(b); ++t) {
            const std::size_t idx = lt.at(b, t);
            if (lt.positive[idx])
              qv[idx] = anchored_quality(offs.at(b, 0, t), offs.at(b, 1, t),
                                         lt.off_start[idx], lt.off_end[idx]);
          }
        ctx->targets.quality_override.push_back(std::move(qv));
      }
      ctx->targets_ready = true;
    }
    return total_loss(g, hg, ctx->targets, ctx->loss_cfg);
  };
  return p;
}

struct Entry {
  const char* name;
  Factory make;
};

constexpr Entry kEntries[] = {
    {"conv1d", make_conv1d},
    {"conv1d_strided", make_conv1d_strided},
    {"conv1d_depthwise", make_conv1d_depthwise},
    {"conv1d_nobias", make_conv1d_nobias},
    {"linear", make_linear},
    {"layer_norm", make_layer_norm},
    {"relu", make_relu},
    {"gelu", make_gelu},
    {"sigmoid", make_sigmoid},
    {"channel_max", make_channel_max},
    {"channel_avg", make_channel_avg},
    {"temporal_max_pool", make_temporal_max_pool},
    {"broadcast_mul", make_broadcast_mul},
    {"residual_mix", make_residual_mix},
    {"focal_loss", make_focal_loss},
    {"giou_loss", make_giou_loss},
    {"projection", make_projection},
    {"pyramid_full", make_pyramid_full},
    {"pyramid_cam_only", make_pyramid_cam_only},
    {"pyramid_lcm_only", make_pyramid_lcm_only},
    {"pyramid_strided_conv", make_pyramid_strided},
    {"heads", make_heads},
    {"total_loss", make_total_loss},
};

FdResult run_problem(Problem& p, const FdOptions& opt) {
  FdResult res;
  res.problem = p.name;

  for (auto& [name, t] : p.wrt) {
    t->requires_grad = true;
    t->ensure_grad();
    t->zero_grad();
  }
  {
    Graph g;
    g.corrupt_backward_op = opt.corrupt_op;
    Value out = p.build(g);
    g.backward(out);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(p.wrt.size());
  for (auto& [name, t] : p.wrt)
    analytic.push_back(t->grad.empty()
                           ? std::vector<double>(t->data().size(), 0.0)
                           : t->grad);

  auto eval = [&p]() {
    Graph g;
    Value out = p.build(g);
    return out.tensor().at(0, 0, 0);
  };

  Rng pick = Rng(opt.seed).fork(0xc00d);
  for (std::size_t wi = 0; wi < p.wrt.size(); ++wi) {
    SeqTensor* t = p.wrt[wi].second;
    const int B = t->batch(), C = t->channels(), T = t->length();
    std::int64_t total = 0;
    for (int b = 0; b < B; ++b) total += static_cast<std::int64_t>(C) * t->valid_len(b);
    if (total == 0) continue;
    for (int k = 0; k < opt.coords_per_tensor; ++k) {
      std::int64_t r = pick.uniform_int(0, static_cast<int>(total) - 1);
      int b = 0;
      while (r >= static_cast<std::int64_t>(C) * t->valid_len(b)) {
        r -= static_cast<std::int64_t>(C) * t->valid_len(b);
        ++b;
      }
      const int ch = static_cast<int>(r / t->valid_len(b));
      const int tt = static_cast<int>(r % t->valid_len(b));
      const std::size_t flat =
          (static_cast<std::size_t>(b) * C + ch) * T + tt;

      double& slot = t->data()[flat];
      const double orig = slot;
      slot = orig + opt.h;
      const double f_plus = eval();
      slot = orig - opt.h;
      const double f_minus = eval();
      slot = orig;

      const double fd = (f_plus - f_minus) / (2.0 * opt.h);
      const double a = analytic[wi][flat];
      const double rel =
          std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0});
      ++res.checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s[%d,%d,%d] analytic=%g fd=%g",
                      p.wrt[wi].first.c_str(), b, ch, tt, a, fd);
        res.worst = buf;
      }
    }
  }
  res.passed = res.max_rel_err <= opt.tol;
  return res;
}

}  // namespace

std::vector<std::string> gradcheck_problem_names() {
  std::vector<std::string> names;
  for (const Entry& e : kEntries) names.push_back(e.name);
  return names;
}

FdResult run_gradcheck(const std::string& problem, const FdOptions& opt) {
  Rng base(opt.seed);
  for (std::size_t i = 0; i < std::size(kEntries); ++i) {
    if (problem == kEntries[i].name) {
      Problem p = kEntries[i].make(base.fork(100 + i));
      return run_problem(p, opt);
    }
  }
  throw std::invalid_argument("unknown gradcheck problem: " + problem);
}

std::vector<FdResult> run_all_gradchecks(const FdOptions& opt) {
  std::vector<FdResult> out;
  for (const Entry& e : kEntries) out.push_back(run_gradcheck(e.name, opt));
  return out;
}

}  // namespace acadet
