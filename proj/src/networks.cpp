#include "branchgan/networks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "branchgan/rng.hpp"

namespace branchgan {

// ---------------------------------------------------------------------------
// NetConfig

Resolution NetConfig::resolution(int level) const {
  if (level < 0 || level > stages) throw ConfigError("resolution level " + std::to_string(level) + " out of range");
  Resolution r = output_resolution;
  if (r.height == 0 && r.width == 0) {
    r = {base_resolution.height << stages, base_resolution.width << stages};
  }
  for (int l = stages; l > level; --l) r = {(r.height + 1) / 2, (r.width + 1) / 2};
  return r;
}

void NetConfig::validate() const {
  if (stages < 1) throw ConfigError("stages must be >= 1");
  if (subvector_dims.empty()) throw ConfigError("at least one sub-vector is required");
  for (int d : subvector_dims) {
    if (d <= 0) throw ConfigError("sub-vector dimensions must be positive");
  }
  if (static_cast<int>(channel_schedule.size()) != stages) {
    throw ConfigError("channel schedule has " + std::to_string(channel_schedule.size()) +
                      " entries for " + std::to_string(stages) + " stages");
  }
  for (int c : channel_schedule) {
    if (c <= 0) throw ConfigError("channel counts must be positive");
  }
  if (output_channels <= 0) throw ConfigError("output_channels must be positive");
  if (!(norm_epsilon > 0.0f)) throw ConfigError("norm_epsilon must be positive");
  if (!(weight_init_stddev > 0.0f)) throw ConfigError("weight_init_stddev must be positive");
  if (base_resolution.height <= 0 || base_resolution.width <= 0) throw ConfigError("base resolution must be positive");
  if (resolution(0) != base_resolution) {
    throw ConfigError("output resolution does not halve down to the base resolution in " +
                      std::to_string(stages) + " stages");
  }
}

void to_json(nlohmann::json& j, const NetConfig& c) {
  j = nlohmann::json{{"subvector_dims", c.subvector_dims},
                     {"base_resolution", {c.base_resolution.height, c.base_resolution.width}},
                     {"output_resolution", {c.resolution(c.stages).height, c.resolution(c.stages).width}},
                     {"channel_schedule", c.channel_schedule},
                     {"stages", c.stages},
                     {"output_channels", c.output_channels},
                     {"norm_epsilon", c.norm_epsilon},
                     {"weight_init_stddev", c.weight_init_stddev},
                     {"leaky_slope", c.leaky_slope}};
}

void from_json(const nlohmann::json& j, NetConfig& c) {
  try {
    c.subvector_dims = j.at("subvector_dims").get<std::vector<int>>();
    const auto base = j.at("base_resolution").get<std::vector<int>>();
    if (base.size() != 2) throw ConfigError("base_resolution must be [height, width]");
    c.base_resolution = {base[0], base[1]};
    c.output_resolution = {};
    if (j.contains("output_resolution")) {
      const auto out = j.at("output_resolution").get<std::vector<int>>();
      if (out.size() != 2) throw ConfigError("output_resolution must be [height, width]");
      c.output_resolution = {out[0], out[1]};
    }
    c.channel_schedule = j.at("channel_schedule").get<std::vector<int>>();
    c.stages = j.at("stages").get<int>();
    c.output_channels = j.value("output_channels", 3);
    c.norm_epsilon = j.value("norm_epsilon", 1e-5f);
    c.weight_init_stddev = j.value("weight_init_stddev", 0.02f);
    c.leaky_slope = j.value("leaky_slope", 0.2f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid network config: ") + e.what());
  }
  c.validate();
}

// ---------------------------------------------------------------------------
// Sequential

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

Shape4 with_batch(Shape4 s, int n) {
  s.n = n;
  return s;
}

bool has_params(const Layer& l) {
  return l.kind == LayerKind::Linear || l.kind == LayerKind::Conv || l.kind == LayerKind::Deconv ||
         l.kind == LayerKind::InstanceNorm;
}

const ParamTensor& param(const ParamSet& ps, const std::string& name) {
  auto it = ps.find(name);
  if (it == ps.end()) throw ConfigError("missing parameter '" + name + "'");
  return it->second;
}

std::span<float> grad_for(GradSet& grads, const ParamSet& ps, const std::string& name) {
  auto& g = grads[name];
  if (g.empty()) g.assign(param(ps, name).values.size(), 0.0f);
  return g;
}

}  // namespace

Shape4 Sequential::input_shape(int batch) const { return with_batch(layers_.front().in, batch); }
Shape4 Sequential::output_shape(int batch) const { return with_batch(layers_.back().out, batch); }

Tensor Sequential::forward(const ParamSet& params, const Tensor& x, Trace* trace) const {
  if (layers_.empty()) return x;
  const int n = x.shape().n;
  if (x.shape() != input_shape(n)) {
    throw ConfigError("network input " + to_string(x.shape()) + " does not match expected " +
                      to_string(input_shape(n)));
  }
  if (trace) {
    trace->inputs.assign(layers_.size(), Tensor{});
    trace->x_hat.assign(layers_.size(), Tensor{});
    trace->inv_std.assign(layers_.size(), Tensor{});
  }
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    Tensor out(with_batch(l.out, n));
    switch (l.kind) {
      case LayerKind::Linear: {
        const auto& w = param(params, l.weight);
        const auto& b = param(params, l.bias);
        kernels::linear_forward(cur.data(), w.values, b.values, out.data(), n,
                                static_cast<int>(l.in.per_sample()), static_cast<int>(l.out.per_sample()));
        break;
      }
      case LayerKind::Conv: {
        const auto& w = param(params, l.weight);
        const auto& b = param(params, l.bias);
        kernels::conv2d_forward(cur.data(), w.values, b.values, out.data(), n, l.in.c, l.out.c, l.geom);
        break;
      }
      case LayerKind::Deconv: {
        const auto& w = param(params, l.weight);
        const auto& b = param(params, l.bias);
        kernels::conv2d_backward_data(cur.data(), w.values, out.data(), n, l.out.c, l.in.c, l.geom);
        const int plane = l.out.h * l.out.w;
        auto o = out.data();
        for (int s = 0; s < n; ++s)
          for (int c = 0; c < l.out.c; ++c) {
            float* p = o.data() + (static_cast<std::size_t>(s) * l.out.c + c) * plane;
            const float bc = b.values[c];
            for (int k = 0; k < plane; ++k) p[k] += bc;
          }
        break;
      }
      case LayerKind::InstanceNorm: {
        Tensor xh(out.shape());
        Tensor inv({n, l.out.c, 1, 1});
        kernels::instance_norm_forward(cur.data(), param(params, l.weight).values, param(params, l.bias).values,
                                       out.data(), xh.data(), inv.data(), n, l.out.c, l.out.h * l.out.w,
                                       l.param);
        if (trace) {
          trace->x_hat[i] = std::move(xh);
          trace->inv_std[i] = std::move(inv);
        }
        break;
      }
      case LayerKind::LeakyRelu: {
        auto src = cur.data();
        auto dst = out.data();
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] > 0.0f ? src[k] : l.param * src[k];
        break;
      }
      case LayerKind::Sigmoid: {
        auto src = cur.data();
        auto dst = out.data();
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] = 1.0f / (1.0f + std::exp(-src[k]));
        break;
      }
      case LayerKind::Tanh: {
        auto src = cur.data();
        auto dst = out.data();
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] = std::tanh(src[k]);
        break;
      }
    }
    if (trace) trace->inputs[i] = std::move(cur);
    cur = std::move(out);
  }
  if (trace) trace->output = cur;
  return cur;
}

Tensor Sequential::backward(const ParamSet& params, const Trace& trace, const Tensor& dout, GradSet& grads,
                            const std::set<std::string>& trainable, bool want_input_grad) const {
  const int count = static_cast<int>(layers_.size());
  if (count == 0) return want_input_grad ? dout : Tensor{};
  if (static_cast<int>(trace.inputs.size()) != count) throw ConfigError("backward: trace does not match network");

  auto is_trainable = [&](const Layer& l) {
    return has_params(l) && (trainable.contains(l.weight) || trainable.contains(l.bias));
  };
  int start = count;
  if (want_input_grad) {
    start = 0;
  } else {
    for (int i = 0; i < count; ++i) {
      if (is_trainable(layers_[i])) {
        start = i;
        break;
      }
    }
  }
  if (start == count) return {};

  const int n = dout.shape().n;
  Tensor grad = dout;
  for (int i = count - 1; i >= start; --i) {
    const Layer& l = layers_[i];
    const Tensor& x = trace.inputs[i];
    const bool need_dx = i > start || want_input_grad;
    Tensor dx;
    switch (l.kind) {
      case LayerKind::Linear: {
        const int in = static_cast<int>(l.in.per_sample());
        const int out = static_cast<int>(l.out.per_sample());
        const auto& w = param(params, l.weight);
        if (trainable.contains(l.weight) || trainable.contains(l.bias)) {
          std::span<float> dw = trainable.contains(l.weight) ? grad_for(grads, params, l.weight) : std::span<float>{};
          std::span<float> db = trainable.contains(l.bias) ? grad_for(grads, params, l.bias) : std::span<float>{};
          if (!dw.empty()) {
            kernels::linear_backward_weight(x.data(), grad.data(), dw, db, n, in, out);
          } else {
            for (int s = 0; s < n; ++s)
              for (int o = 0; o < out; ++o) db[o] += grad.data()[static_cast<std::size_t>(s) * out + o];
          }
        }
        if (need_dx) {
          dx = Tensor(with_batch(l.in, n));
          kernels::linear_backward_data(grad.data(), w.values, dx.data(), n, in, out);
        }
        break;
      }
      case LayerKind::Conv: {
        const auto& w = param(params, l.weight);
        if (is_trainable(l)) {
          std::span<float> db = trainable.contains(l.bias) ? grad_for(grads, params, l.bias) : std::span<float>{};
          if (trainable.contains(l.weight)) {
            kernels::conv2d_backward_weight(x.data(), grad.data(), grad_for(grads, params, l.weight), db, n, l.in.c,
                                            l.out.c, l.geom);
          } else {
            const int plane = l.out.h * l.out.w;
            for (int s = 0; s < n; ++s)
              for (int c = 0; c < l.out.c; ++c)
                for (int k = 0; k < plane; ++k)
                  db[c] += grad.data()[(static_cast<std::size_t>(s) * l.out.c + c) * plane + k];
          }
        }
        if (need_dx) {
          dx = Tensor(with_batch(l.in, n));
          kernels::conv2d_backward_data(grad.data(), w.values, dx.data(), n, l.in.c, l.out.c, l.geom);
        }
        break;
      }
      case LayerKind::Deconv: {
        const auto& w = param(params, l.weight);
        if (trainable.contains(l.weight)) {
          // Weight gradient of the adjoint: roles of input and output swap.
          kernels::conv2d_backward_weight(grad.data(), x.data(), grad_for(grads, params, l.weight), {}, n, l.out.c,
                                          l.in.c, l.geom);
        }
        if (trainable.contains(l.bias)) {
          auto db = grad_for(grads, params, l.bias);
          const int plane = l.out.h * l.out.w;
          for (int c = 0; c < l.out.c; ++c) {
            float acc = db[c];
            for (int s = 0; s < n; ++s) {
              const float* p = grad.data().data() + (static_cast<std::size_t>(s) * l.out.c + c) * plane;
              for (int k = 0; k < plane; ++k) acc += p[k];
            }
            db[c] = acc;
          }
        }
        if (need_dx) {
          dx = Tensor(with_batch(l.in, n));
          kernels::conv2d_forward(grad.data(), w.values, {}, dx.data(), n, l.out.c, l.in.c, l.geom);
        }
        break;
      }
      case LayerKind::InstanceNorm: {
        std::span<float> ds = trainable.contains(l.weight) ? grad_for(grads, params, l.weight) : std::span<float>{};
        std::span<float> dof = trainable.contains(l.bias) ? grad_for(grads, params, l.bias) : std::span<float>{};
        dx = Tensor(with_batch(l.in, n));
        kernels::instance_norm_backward(grad.data(), trace.x_hat[i].data(), trace.inv_std[i].data(),
                                        param(params, l.weight).values, dx.data(), ds, dof, n, l.out.c,
                                        l.out.h * l.out.w);
        break;
      }
      case LayerKind::LeakyRelu: {
        dx = Tensor(with_batch(l.in, n));
        auto g = grad.data();
        auto xs = x.data();
        auto d = dx.data();
        for (std::size_t k = 0; k < g.size(); ++k) d[k] = xs[k] > 0.0f ? g[k] : l.param * g[k];
        break;
      }
      case LayerKind::Sigmoid: {
        dx = Tensor(with_batch(l.in, n));
        auto g = grad.data();
        auto xs = x.data();
        auto d = dx.data();
        for (std::size_t k = 0; k < g.size(); ++k) {
          const float y = 1.0f / (1.0f + std::exp(-xs[k]));
          d[k] = g[k] * y * (1.0f - y);
        }
        break;
      }
      case LayerKind::Tanh: {
        dx = Tensor(with_batch(l.in, n));
        auto g = grad.data();
        auto xs = x.data();
        auto d = dx.data();
        for (std::size_t k = 0; k < g.size(); ++k) {
          const float y = std::tanh(xs[k]);
          d[k] = g[k] * (1.0f - y * y);
        }
        break;
      }
    }
    if (!need_dx) return {};
    grad = std::move(dx);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Network

std::set<std::string> Network::param_names() const {
  std::set<std::string> names;
  for (const auto& [k, v] : params_) names.insert(k);
  return names;
}

void Network::add_param(const std::string& name, std::vector<int> shape, float init_value) {
  const auto count = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                     [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  params_[name] = ParamTensor{std::move(shape), std::vector<float>(count, init_value)};
}

void Network::add_normal_param(const std::string& name, std::vector<int> shape, std::uint64_t seed) {
  add_param(name, std::move(shape), 0.0f);
  Rng rng(derive_seed(seed, {name_hash(name)}));
  for (auto& v : params_[name].values) v = static_cast<float>(rng.normal(0.0, config_.weight_init_stddev));
}

namespace {

Layer conv_layer(const std::string& prefix, int cin, Resolution rin, int cout, Resolution rout) {
  Layer l;
  l.kind = LayerKind::Conv;
  l.weight = prefix + ".conv.weight";
  l.bias = prefix + ".conv.bias";
  l.in = {1, cin, rin.height, rin.width};
  l.out = {1, cout, rout.height, rout.width};
  l.geom = same_conv_geometry(rin.height, rin.width);
  if (l.geom.out_h != rout.height || l.geom.out_w != rout.width) throw ConfigError("conv geometry mismatch at " + prefix);
  return l;
}

Layer deconv_layer(const std::string& prefix, int cin, Resolution rin, int cout, Resolution rout) {
  Layer l;
  l.kind = LayerKind::Deconv;
  l.weight = prefix + ".deconv.weight";
  l.bias = prefix + ".deconv.bias";
  l.in = {1, cin, rin.height, rin.width};
  l.out = {1, cout, rout.height, rout.width};
  l.geom = same_conv_geometry(rout.height, rout.width);
  if (l.geom.out_h != rin.height || l.geom.out_w != rin.width) throw ConfigError("deconv geometry mismatch at " + prefix);
  return l;
}

Layer norm_layer(const std::string& prefix, Shape4 s, float eps) {
  Layer l;
  l.kind = LayerKind::InstanceNorm;
  l.weight = prefix + ".norm.scale";
  l.bias = prefix + ".norm.offset";
  l.in = s;
  l.out = s;
  l.param = eps;
  return l;
}

Layer pointwise(LayerKind kind, Shape4 s, float param = 0.0f) {
  Layer l;
  l.kind = kind;
  l.in = s;
  l.out = s;
  l.param = param;
  return l;
}

// Strided-conv trunk shared by the discriminator and the encoder.
std::vector<Layer> conv_trunk(const NetConfig& cfg, const std::string& p, int stage) {
  std::vector<Layer> layers;
  const auto& ch = cfg.channel_schedule;
  auto block = [&](const std::string& prefix, int cin, Resolution rin, int cout, Resolution rout) {
    layers.push_back(conv_layer(prefix, cin, rin, cout, rout));
    layers.push_back(norm_layer(prefix, layers.back().out, cfg.norm_epsilon));
    layers.push_back(pointwise(LayerKind::LeakyRelu, layers.back().out, cfg.leaky_slope));
  };
  block(p + ".head" + std::to_string(stage), cfg.output_channels, cfg.resolution(stage), ch[stage - 1],
        cfg.resolution(stage - 1));
  for (int k = stage - 1; k >= 1; --k) {
    block(p + ".block" + std::to_string(k), ch[k], cfg.resolution(k), ch[k - 1], cfg.resolution(k - 1));
  }
  return layers;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(NetConfig config, int stage, ParamSet params) : Network(std::move(config), stage) {
  config_.validate();
  if (stage < 1 || stage > config_.stages) throw ConfigError("generator stage " + std::to_string(stage) + " out of range");
  params_ = std::move(params);
}

Sequential Generator::graph(int stage) const {
  if (stage < 1 || stage > stage_) throw ConfigError("generator graph stage out of range");
  Sequential hidden = hidden_graph(stage - 1);
  std::vector<Layer> layers = hidden.layers();
  const auto& ch = config_.channel_schedule;
  const std::string head = "g.head" + std::to_string(stage);
  layers.push_back(deconv_layer(head, ch[stage - 1], config_.resolution(stage - 1), config_.output_channels,
                                config_.resolution(stage)));
  layers.push_back(pointwise(LayerKind::Sigmoid, layers.back().out));
  return Sequential(std::move(layers));
}

Sequential Generator::hidden_graph(int block) const {
  if (block < 0 || block > stage_ - 1) throw ConfigError("generator block index out of range");
  const auto& ch = config_.channel_schedule;
  const Resolution base = config_.resolution(0);
  std::vector<Layer> layers;
  Layer lin;
  lin.kind = LayerKind::Linear;
  lin.weight = "g.linear.weight";
  lin.bias = "g.linear.bias";
  lin.in = {1, config_.layout().total(), 1, 1};
  lin.out = {1, ch[0], base.height, base.width};
  layers.push_back(lin);
  for (int k = 1; k <= block; ++k) {
    const std::string p = "g.block" + std::to_string(k);
    layers.push_back(deconv_layer(p, ch[k - 1], config_.resolution(k - 1), ch[k], config_.resolution(k)));
    layers.push_back(norm_layer(p, layers.back().out, config_.norm_epsilon));
    layers.push_back(pointwise(LayerKind::LeakyRelu, layers.back().out, config_.leaky_slope));
  }
  return Sequential(std::move(layers));
}

void Generator::grow(std::uint64_t seed) {
  if (stage_ >= config_.stages) throw ConfigError("generator already at final stage");
  const auto& ch = config_.channel_schedule;
  const int k = stage_;
  const std::string block = "g.block" + std::to_string(k);
  add_normal_param(block + ".deconv.weight", {ch[k - 1], ch[k], 5, 5}, seed);
  add_param(block + ".deconv.bias", {ch[k]}, 0.0f);
  add_param(block + ".norm.scale", {ch[k]}, 1.0f);
  add_param(block + ".norm.offset", {ch[k]}, 0.0f);
  const std::string head = "g.head" + std::to_string(k + 1);
  add_normal_param(head + ".deconv.weight", {ch[k], config_.output_channels, 5, 5}, seed);
  add_param(head + ".deconv.bias", {config_.output_channels}, 0.0f);
  ++stage_;
}

std::set<std::string> Generator::newest_block_params() const {
  if (stage_ == 1) {
    std::set<std::string> all;
    for (const auto& [name, t] : params_) {
      if (name.starts_with("g.linear") || name.starts_with("g.head1.")) all.insert(name);
    }
    return all;
  }
  std::set<std::string> out;
  const std::string block = "g.block" + std::to_string(stage_ - 1) + ".";
  const std::string head = "g.head" + std::to_string(stage_) + ".";
  for (const auto& [name, t] : params_) {
    if (name.starts_with(block) || name.starts_with(head)) out.insert(name);
  }
  return out;
}

Tensor Generator::latent_batch(std::span<const BranchedLatent> zs) const {
  const LatentLayout layout = config_.layout();
  Tensor t({static_cast<int>(zs.size()), layout.total(), 1, 1});
  auto d = t.data();
  std::size_t pos = 0;
  for (const auto& z : zs) {
    if (!z.matches(layout)) throw ConfigError("latent does not match the generator's sub-vector layout");
    for (const auto& sub : z.subvectors())
      for (double v : sub) d[pos++] = static_cast<float>(v);
  }
  return t;
}

Tensor Generator::forward(const Tensor& z, Trace* trace) const { return graph().forward(params_, z, trace); }

Generator build_generator(const NetConfig& config, int stage, std::uint64_t seed) {
  config.validate();
  if (stage < 1 || stage > config.stages) throw ConfigError("generator stage " + std::to_string(stage) + " out of range");
  struct Builder : Generator {
    Builder(const NetConfig& c, std::uint64_t seed) : Generator(c, 1, {}) {
      const Resolution base = c.resolution(0);
      const int features = c.channel_schedule[0] * base.height * base.width;
      add_normal_param("g.linear.weight", {features, c.layout().total()}, seed);
      add_param("g.linear.bias", {features}, 0.0f);
      add_normal_param("g.head1.deconv.weight", {c.channel_schedule[0], c.output_channels, 5, 5}, seed);
      add_param("g.head1.deconv.bias", {c.output_channels}, 0.0f);
    }
  };
  Builder g(config, seed);
  while (g.stage() < stage) g.grow(seed);
  // Heads of skipped stages are not part of a freshly built network.
  for (int s = 1; s < stage; ++s) {
    g.params().erase("g.head" + std::to_string(s) + ".deconv.weight");
    g.params().erase("g.head" + std::to_string(s) + ".deconv.bias");
  }
  return Generator(config, stage, g.params());
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(NetConfig config, int stage, ParamSet params) : Network(std::move(config), stage) {
  config_.validate();
  if (stage < 1 || stage > config_.stages) throw ConfigError("discriminator stage out of range");
  params_ = std::move(params);
}

Sequential Discriminator::graph() const {
  std::vector<Layer> layers = conv_trunk(config_, "d", stage_);
  Layer lin;
  lin.kind = LayerKind::Linear;
  lin.weight = "d.linear.weight";
  lin.bias = "d.linear.bias";
  lin.in = layers.back().out;
  lin.out = {1, 1, 1, 1};
  layers.push_back(lin);
  return Sequential(std::move(layers));
}

namespace {

void add_trunk_block(ParamSet& ps, const std::string& prefix, int cin, int cout, float stddev, std::uint64_t seed) {
  ParamTensor w{{cout, cin, 5, 5}, std::vector<float>(static_cast<std::size_t>(cout) * cin * 25)};
  Rng rng(derive_seed(seed, {name_hash(prefix + ".conv.weight")}));
  for (auto& v : w.values) v = static_cast<float>(rng.normal(0.0, stddev));
  ps[prefix + ".conv.weight"] = std::move(w);
  ps[prefix + ".conv.bias"] = ParamTensor{{cout}, std::vector<float>(cout, 0.0f)};
  ps[prefix + ".norm.scale"] = ParamTensor{{cout}, std::vector<float>(cout, 1.0f)};
  ps[prefix + ".norm.offset"] = ParamTensor{{cout}, std::vector<float>(cout, 0.0f)};
}

void add_linear(ParamSet& ps, const std::string& prefix, int in, int out, float stddev, std::uint64_t seed) {
  ParamTensor w{{out, in}, std::vector<float>(static_cast<std::size_t>(out) * in)};
  Rng rng(derive_seed(seed, {name_hash(prefix + ".weight")}));
  for (auto& v : w.values) v = static_cast<float>(rng.normal(0.0, stddev));
  ps[prefix + ".weight"] = std::move(w);
  ps[prefix + ".bias"] = ParamTensor{{out}, std::vector<float>(out, 0.0f)};
}

ParamSet build_trunk_params(const NetConfig& c, const std::string& p, int stage, int linear_out, std::uint64_t seed) {
  ParamSet ps;
  const auto& ch = c.channel_schedule;
  add_trunk_block(ps, p + ".head" + std::to_string(stage), c.output_channels, ch[stage - 1], c.weight_init_stddev,
                  seed);
  for (int k = stage - 1; k >= 1; --k) {
    add_trunk_block(ps, p + ".block" + std::to_string(k), ch[k], ch[k - 1], c.weight_init_stddev, seed);
  }
  const Resolution base = c.resolution(0);
  add_linear(ps, p + ".linear", ch[0] * base.height * base.width, linear_out, c.weight_init_stddev, seed);
  return ps;
}

}  // namespace

void Discriminator::grow(std::uint64_t seed) {
  if (stage_ >= config_.stages) throw ConfigError("discriminator already at final stage");
  const auto& ch = config_.channel_schedule;
  const int k = stage_;
  add_trunk_block(params_, "d.block" + std::to_string(k), ch[k], ch[k - 1], config_.weight_init_stddev, seed);
  add_trunk_block(params_, "d.head" + std::to_string(k + 1), config_.output_channels, ch[k],
                  config_.weight_init_stddev, seed);
  ++stage_;
}

Tensor Discriminator::forward(const Tensor& images, Trace* trace) const {
  return graph().forward(params_, images, trace);
}

Discriminator build_discriminator(const NetConfig& config, int stage, std::uint64_t seed) {
  config.validate();
  if (stage < 1 || stage > config.stages) throw ConfigError("discriminator stage out of range");
  return Discriminator(config, stage, build_trunk_params(config, "d", stage, 1, seed));
}

// ---------------------------------------------------------------------------
// Encoder

Encoder::Encoder(NetConfig config, int stage, ParamSet params) : Network(std::move(config), stage) {
  config_.validate();
  if (stage < 1 || stage > config_.stages) throw ConfigError("encoder stage out of range");
  params_ = std::move(params);
}

Sequential Encoder::graph() const {
  std::vector<Layer> layers = conv_trunk(config_, "e", stage_);
  Layer lin;
  lin.kind = LayerKind::Linear;
  lin.weight = "e.linear.weight";
  lin.bias = "e.linear.bias";
  lin.in = layers.back().out;
  lin.out = {1, config_.layout().total(), 1, 1};
  layers.push_back(lin);
  layers.push_back(pointwise(LayerKind::Tanh, lin.out));
  return Sequential(std::move(layers));
}

Tensor Encoder::forward(const Tensor& images, Trace* trace) const { return graph().forward(params_, images, trace); }

Encoder build_encoder(const NetConfig& config, int stage, std::uint64_t seed) {
  config.validate();
  if (stage < 1 || stage > config.stages) throw ConfigError("encoder stage out of range");
  return Encoder(config, stage, build_trunk_params(config, "e", stage, config.layout().total(), seed));
}

// ---------------------------------------------------------------------------
// Convenience wrappers

namespace {
constexpr int kChunk = 64;
}

std::vector<Image> generate(const Generator& g, std::span<const BranchedLatent> zs) {
  std::vector<Image> out;
  out.reserve(zs.size());
  for (std::size_t start = 0; start < zs.size(); start += kChunk) {
    const auto count = std::min<std::size_t>(kChunk, zs.size() - start);
    const Tensor y = g.forward(g.latent_batch(zs.subspan(start, count)));
    for (std::size_t i = 0; i < count; ++i) out.push_back(to_image(y, static_cast<int>(i)));
  }
  return out;
}

Image generate(const Generator& g, const BranchedLatent& z) {
  return generate(g, std::span<const BranchedLatent>(&z, 1)).front();
}

std::vector<float> discriminate(const Discriminator& d, std::span<const Image> images) {
  std::vector<float> out;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const auto count = std::min<std::size_t>(kChunk, images.size() - start);
    const Tensor y = d.forward(to_batch(images.subspan(start, count)));
    out.insert(out.end(), y.data().begin(), y.data().end());
  }
  return out;
}

std::vector<BranchedLatent> latents_from_tensor(const LatentLayout& layout, const Tensor& t) {
  std::vector<BranchedLatent> out;
  const int total = layout.total();
  if (static_cast<int>(t.shape().per_sample()) != total) throw ConfigError("tensor does not match latent layout");
  for (int i = 0; i < t.shape().n; ++i) {
    std::vector<double> flat(total);
    for (int k = 0; k < total; ++k) flat[k] = std::clamp(static_cast<double>(t.sample(i)[k]), -1.0, 1.0);
    out.push_back(BranchedLatent::from_flat(layout, flat));
  }
  return out;
}

std::vector<BranchedLatent> encode(const Encoder& e, std::span<const Image> images) {
  std::vector<BranchedLatent> out;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const auto count = std::min<std::size_t>(kChunk, images.size() - start);
    const Tensor y = e.forward(to_batch(images.subspan(start, count)));
    auto part = latents_from_tensor(e.config().layout(), y);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

BranchedLatent encode(const Encoder& e, const Image& image) {
  return encode(e, std::span<const Image>(&image, 1)).front();
}

}  // namespace branchgan
