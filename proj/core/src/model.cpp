#include "acadet/model.hpp"

#include <cmath>
#include <cstdio>

namespace acadet {

namespace {

std::string level_prefix(int level) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "level%02d.", level);
  return buf;
}

void require_odd(int k, const char* what) {
  if (k < 1 || k % 2 == 0)
    throw ConfigError(std::string(what) + " must be odd and >= 1, got " +
                      std::to_string(k));
}

}  // namespace

void ModelConfig::validate() const {
  if (in_dim < 1) throw ConfigError("model.in_dim must be >= 1");
  if (embed_dim < 1) throw ConfigError("model.embed_dim must be >= 1");
  if (levels < 1) throw ConfigError("model.levels must be >= 1");
  if (num_classes < 1) throw ConfigError("model.num_classes must be >= 1");
  if (mlp_ratio < 1) throw ConfigError("model.mlp_ratio must be >= 1");
  if (head_layers < 1) throw ConfigError("model.head_layers must be >= 1");
  if (cgb_kernels.empty()) throw ConfigError("model.cgb_kernels must be nonempty");
  for (int k : cgb_kernels) require_odd(k, "model.cgb_kernels entry");
  require_odd(cgb_mix_kernel, "model.cgb_mix_kernel");
  require_odd(lcm_large_kernel_min, "model.lcm_large_kernel_min");
  require_odd(lcm_large_kernel_max, "model.lcm_large_kernel_max");
  if (lcm_large_kernel_min > lcm_large_kernel_max)
    throw ConfigError("model.lcm_large_kernel_min exceeds lcm_large_kernel_max");
  for (int k : lcm_small_kernels) require_odd(k, "model.lcm_small_kernels entry");
  require_odd(head_kernel, "model.head_kernel");
}

int lcm_schedule(int level, const ModelConfig& cfg) {
  ACADET_CHECK(level >= 1 && level <= cfg.levels,
               "lcm_schedule: level out of range");
  const int kmax = cfg.lcm_large_kernel_max, kmin = cfg.lcm_large_kernel_min;
  if (cfg.levels == 1) return kmax;
  const double x = kmax - static_cast<double>(kmax - kmin) * (level - 1) /
                              (cfg.levels - 1);
  // nearest odd, halfway rounds toward the larger odd
  return 2 * static_cast<int>(std::floor((x - 1.0) / 2.0 + 0.5)) + 1;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int D = cfg_.embed_dim, U = cfg_.num_classes;

  auto add_conv = [this](const std::string& name, int cout, int cin, int k) {
    params_.add(name + ".w", SeqTensor(cout, cin, k));
    params_.add(name + ".b", SeqTensor(1, cout, 1));
  };
  auto add_norm = [this](const std::string& name, int c) {
    params_.add(name + ".g", SeqTensor(1, c, 1));
    params_.add(name + ".b", SeqTensor(1, c, 1));
  };

  add_conv("proj.conv1", D, cfg_.in_dim, 3);
  add_conv("proj.conv2", D, D, 3);

  for (int i = 1; i <= cfg_.levels; ++i) {
    const std::string lp = level_prefix(i);
    if (i >= 2 && cfg_.downsample == DownsampleKind::strided_conv)
      add_conv(lp + "ds", D, 1, 3);
    add_norm(lp + "norm1", D);
    add_conv(lp + "cam.q", D, D, 1);
    add_conv(lp + "cam.k", D, D, 1);
    for (std::size_t m = 0; m < cfg_.cgb_kernels.size(); ++m) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "cam.cgb.dw%02zu", m);
      add_conv(lp + buf, D, 1, cfg_.cgb_kernels[m]);
    }
    add_conv(lp + "cam.cgb.mix", static_cast<int>(cfg_.cgb_kernels.size()), 2,
             cfg_.cgb_mix_kernel);
    add_conv(lp + "lcm.large", D, 1, lcm_schedule(i, cfg_));
    for (std::size_t n = 0; n < cfg_.lcm_small_kernels.size(); ++n) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "lcm.small%02zu", n);
      add_conv(lp + buf, D, 1, cfg_.lcm_small_kernels[n]);
    }
    add_norm(lp + "norm2", D);
    add_conv(lp + "mlp.fc1", cfg_.mlp_ratio * D, D, 1);
    add_conv(lp + "mlp.fc2", D, cfg_.mlp_ratio * D, 1);
  }

  for (const char* head : {"head.cls", "head.reg"}) {
    for (int j = 0; j < cfg_.head_layers; ++j) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s.l%02d", head, j);
      add_conv(std::string(buf) + ".conv", D, D, cfg_.head_kernel);
      add_norm(std::string(buf) + ".norm", D);
    }
  }
  add_conv("head.cls.final", U, D, cfg_.head_kernel);
  add_conv("head.reg.final", 2, D, cfg_.head_kernel);
}

void Model::init_params(std::uint64_t seed) {
  Rng rng(seed ^ 0x1c0ffee5ULL);
  const double cls_prior_bias = -std::log((1.0 - 0.01) / 0.01);
  for (auto& [name, t] : params_.all()) {
    const bool is_weight = name.size() > 2 && name.compare(name.size() - 2, 2, ".w") == 0;
    const bool is_gain = name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0;
    if (is_weight) {
      const double fan_in =
          static_cast<double>(t.channels()) * static_cast<double>(t.length());
      const double bound = std::sqrt(6.0 / fan_in);
      for (double& v : t.data()) v = rng.uniform(-bound, bound);
    } else if (is_gain) {
      t.fill(1.0);
    } else {
      t.fill(name == "head.cls.final.b" ? cls_prior_bias : 0.0);
    }
  }
}

void Model::load_params(const std::map<std::string, SeqTensor>& values) {
  if (values.size() != params_.count())
    throw ConfigError("checkpoint parameter count " +
                      std::to_string(values.size()) +
                      " does not match model (" +
                      std::to_string(params_.count()) + ")");
  for (auto& [name, t] : params_.all()) {
    auto it = values.find(name);
    if (it == values.end())
      throw ConfigError("checkpoint is missing parameter '" + name + "'");
    if (!it->second.same_shape(t))
      throw ConfigError("checkpoint parameter '" + name + "' has wrong shape");
    t.data() = it->second.data();
  }
}

int Model::level_stride(int level) const {
  ACADET_CHECK(level >= 1 && level <= cfg_.levels,
               "level_stride: level out of range");
  return 1 << (level - 1);
}

std::vector<int> Model::strides() const {
  std::vector<int> s(cfg_.levels);
  for (int i = 1; i <= cfg_.levels; ++i) s[i - 1] = level_stride(i);
  return s;
}

Value Model::p(Graph& g, const std::string& name) {
  return g.param(params_.get(name));
}

Value Model::project(Graph& g, Value features) {
  if (features.tensor().channels() != cfg_.in_dim)
    throw ConfigError("project: input has " +
                      std::to_string(features.tensor().channels()) +
                      " channels, config expects " +
                      std::to_string(cfg_.in_dim));
  Conv1dSpec spec{1, same_padding(3), 1};
  Value h = g.relu(g.conv1d(features, p(g, "proj.conv1.w"),
                            p(g, "proj.conv1.b"), spec));
  return g.relu(
      g.conv1d(h, p(g, "proj.conv2.w"), p(g, "proj.conv2.b"), spec));
}

Value Model::cgb_forward(Graph& g, Value q, int level,
                         const ForwardOptions& opt) {
  const std::string lp = level_prefix(level);
  const int D = cfg_.embed_dim;
  const int M = static_cast<int>(cfg_.cgb_kernels.size());
  std::vector<Value> zs;
  zs.reserve(M);
  for (int m = 0; m < M; ++m) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "cam.cgb.dw%02d", m);
    Conv1dSpec spec{1, same_padding(cfg_.cgb_kernels[m]), D};
    zs.push_back(g.gelu(g.conv1d(q, p(g, lp + buf + ".w"),
                                 p(g, lp + buf + ".b"), spec)));
  }
  Value z = M == 1 ? zs[0] : g.concat_channels(zs);
  Value pooled = g.concat_channels({g.channel_max(z), g.channel_avg(z)});
  Conv1dSpec mix_spec{1, same_padding(cfg_.cgb_mix_kernel), 1};
  Value gates = g.sigmoid(g.conv1d(pooled, p(g, lp + "cam.cgb.mix.w"),
                                   p(g, lp + "cam.cgb.mix.b"), mix_spec));
  if (opt.probe) opt.probe->gate_maps.push_back(gates.tensor());
  Value acc;
  for (int m = 0; m < M; ++m) {
    Value gm = g.broadcast_mul(zs[m], g.slice_channels(gates, m, 1));
    acc = m == 0 ? gm : g.add(acc, gm);
  }
  return acc;
}

Value Model::cam_forward(Graph& g, Value x_norm, int level,
                         const ForwardOptions& opt) {
  const std::string lp = level_prefix(level);
  Value k = g.linear(x_norm, p(g, lp + "cam.k.w"), p(g, lp + "cam.k.b"));
  Value q = g.linear(x_norm, p(g, lp + "cam.q.w"), p(g, lp + "cam.q.b"));
  Value gate;
  if (opt.force_gate_one) {
    const SeqTensor& kt = k.tensor();
    SeqTensor ones(kt.batch(), kt.channels(), kt.length());
    ones.fill(1.0);
    ones.set_valid_lens(kt.valid_lens());
    ones.zero_padding();
    gate = g.constant(std::move(ones));
  } else {
    gate = cgb_forward(g, q, level, opt);
  }
  return g.mul(gate, k);
}

Value Model::lcm_forward(Graph& g, Value x_norm, int level) {
  const std::string lp = level_prefix(level);
  const int D = cfg_.embed_dim;
  const int klarge = lcm_schedule(level, cfg_);
  Conv1dSpec large_spec{1, same_padding(klarge), D};
  Value acc = g.gelu(g.conv1d(x_norm, p(g, lp + "lcm.large.w"),
                              p(g, lp + "lcm.large.b"), large_spec));
  for (std::size_t n = 0; n < cfg_.lcm_small_kernels.size(); ++n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "lcm.small%02zu", n);
    Conv1dSpec spec{1, same_padding(cfg_.lcm_small_kernels[n]), D};
    acc = g.add(acc, g.gelu(g.conv1d(x_norm, p(g, lp + buf + ".w"),
                                     p(g, lp + buf + ".b"), spec)));
  }
  return acc;
}

Value Model::aca_level(Graph& g, Value prev, int level,
                       const ForwardOptions& opt) {
  const std::string lp = level_prefix(level);
  Value down = prev;
  if (level >= 2) {
    if (cfg_.downsample == DownsampleKind::maxpool) {
      down = g.temporal_max_pool(prev, 3, 2, 1);
    } else {
      Conv1dSpec spec{2, 1, cfg_.embed_dim};
      down = g.conv1d(prev, p(g, lp + "ds.w"), p(g, lp + "ds.b"), spec);
    }
  }
  Value x_norm =
      g.layer_norm(down, p(g, lp + "norm1.g"), p(g, lp + "norm1.b"));
  if (opt.probe) opt.probe->norm1_out.push_back(x_norm.tensor());

  const bool use_cam = cfg_.module_toggle != ModuleToggle::lcm_only;
  const bool use_lcm = cfg_.module_toggle != ModuleToggle::cam_only;
  auto zeros_like = [&g](const SeqTensor& t) {
    return g.zeros(t.batch(), t.channels(), t.length(), t.valid_lens());
  };
  std::vector<Value> branches;
  if (use_cam) {
    Value v = opt.force_cam_zero ? zeros_like(down.tensor())
                                 : cam_forward(g, x_norm, level, opt);
    if (opt.probe) opt.probe->cam_out.push_back(v.tensor());
    branches.push_back(v);
  }
  if (use_lcm) {
    Value v = opt.force_lcm_zero ? zeros_like(down.tensor())
                                 : lcm_forward(g, x_norm, level);
    if (opt.probe) opt.probe->lcm_out.push_back(v.tensor());
    branches.push_back(v);
  }
  Value r = down;
  if (!branches.empty()) {
    Value acc = branches[0];
    for (std::size_t i = 1; i < branches.size(); ++i)
      acc = g.add(acc, branches[i]);
    r = g.add(acc, down);
  }

  Value r_norm = g.layer_norm(r, p(g, lp + "norm2.g"), p(g, lp + "norm2.b"));
  Value h = g.linear(r_norm, p(g, lp + "mlp.fc1.w"), p(g, lp + "mlp.fc1.b"));
  h = g.gelu(h);
  h = g.linear(h, p(g, lp + "mlp.fc2.w"), p(g, lp + "mlp.fc2.b"));
  return g.add(h, r);
}

std::vector<Value> Model::forward_pyramid(Graph& g, Value projected,
                                          const ForwardOptions& opt) {
  std::vector<Value> levels;
  levels.reserve(cfg_.levels);
  Value cur = projected;
  for (int i = 1; i <= cfg_.levels; ++i) {
    cur = aca_level(g, cur, i, opt);
    levels.push_back(cur);
  }
  return levels;
}

Value Model::head_tower(Graph& g, Value x, const std::string& prefix) {
  Conv1dSpec spec{1, same_padding(cfg_.head_kernel), 1};
  Value h = x;
  for (int j = 0; j < cfg_.head_layers; ++j) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s.l%02d", prefix.c_str(), j);
    h = g.conv1d(h, p(g, std::string(buf) + ".conv.w"),
                 p(g, std::string(buf) + ".conv.b"), spec);
    h = g.layer_norm(h, p(g, std::string(buf) + ".norm.g"),
                     p(g, std::string(buf) + ".norm.b"));
    h = g.relu(h);
  }
  return h;
}

HeadGraph Model::head_forward(Graph& g, const std::vector<Value>& pyramid) {
  Conv1dSpec spec{1, same_padding(cfg_.head_kernel), 1};
  HeadGraph out;
  out.strides = strides();
  for (const Value& f : pyramid) {
    Value hc = head_tower(g, f, "head.cls");
    out.class_logits.push_back(g.conv1d(hc, p(g, "head.cls.final.w"),
                                        p(g, "head.cls.final.b"), spec));
    Value hr = head_tower(g, f, "head.reg");
    out.offsets.push_back(g.relu(g.conv1d(hr, p(g, "head.reg.final.w"),
                                          p(g, "head.reg.final.b"), spec)));
  }
  return out;
}

HeadGraph Model::forward(Graph& g, const SeqTensor& features,
                         const ForwardOptions& opt) {
  Value in = g.apply_mask(g.input(features));
  Value proj = project(g, in);
  std::vector<Value> pyr = forward_pyramid(g, proj, opt);
  return head_forward(g, pyr);
}

HeadOutputs Model::detach(const HeadGraph& hg) {
  HeadOutputs out;
  out.strides = hg.strides;
  for (const Value& v : hg.class_logits) out.class_logits.push_back(v.tensor());
  for (const Value& v : hg.offsets) out.offsets.push_back(v.tensor());
  for (SeqTensor& t : out.class_logits) {
    t.requires_grad = false;
    t.grad.clear();
  }
  for (SeqTensor& t : out.offsets) {
    t.requires_grad = false;
    t.grad.clear();
  }
  return out;
}

PyramidFeatures Model::detach_pyramid(const std::vector<Value>& levels) {
  PyramidFeatures out;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    out.levels.push_back(levels[i].tensor());
    out.strides.push_back(1 << i);
  }
  return out;
}

HeadOutputs Model::infer(const SeqTensor& features, const ForwardOptions& opt) {
  for (auto& [name, t] : params_.all()) t.requires_grad = false;
  HeadOutputs out;
  try {
    Graph g;
    out = detach(forward(g, features, opt));
  } catch (...) {
    for (auto& [name, t] : params_.all()) t.requires_grad = true;
    throw;
  }
  for (auto& [name, t] : params_.all()) t.requires_grad = true;
  return out;
}

}  // namespace acadet
