#pragma once

#include "cpfs3d/ops.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace cpfs3d {

// Named float32 parameter bundle. Parameters live in a std::map so iteration
// order (and therefore optimizer order, checkpoint order, init order) is the
// lexicographic name order, independent of registration order.
struct ParamStore {
  std::map<std::string, MatX<float>> params;

  bool has(const std::string& name) const { return params.count(name) != 0; }

  MatX<float>& at(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  const MatX<float>& at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  // Kaiming-uniform fan-in init for weights, zeros for biases. No-op if the
  // name already exists, so repeated model construction reuses weights.
  void init_linear(const std::string& prefix, int in, int out, Rng& rng) {
    if (has(prefix + ".w")) return;
    const float bound = std::sqrt(6.0f / static_cast<float>(in));
    MatX<float> w(in, out);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = static_cast<float>((rng.uniform() * 2.0 - 1.0) * bound);
    params[prefix + ".w"] = std::move(w);
    params[prefix + ".b"] = MatX<float>::Zero(1, out);
  }

  void init_batchnorm(const std::string& prefix, int dim) {
    if (has(prefix + ".gamma")) return;
    params[prefix + ".gamma"] = MatX<float>::Ones(1, dim);
    params[prefix + ".beta"] = MatX<float>::Zero(1, dim);
  }

  size_t count_scalars() const {
    size_t n = 0;
    for (const auto& [name, m] : params) n += static_cast<size_t>(m.size());
    return n;
  }
};

// Tape-side view of a ParamStore: parameters become differentiable leaves on
// one tape, created on first access per step. Gradients read back out after
// backward() in the same float32 domain the optimizer updates.
template <typename S>
struct ParamTape {
  Tape<S>* tape = nullptr;
  ParamStore* store = nullptr;
  bool trainable = true;
  std::map<std::string, Var<S>> vars;

  ParamTape(Tape<S>& t, ParamStore& s, bool train = true)
      : tape(&t), store(&s), trainable(train) {}

  Var<S> operator[](const std::string& name) {
    auto it = vars.find(name);
    if (it != vars.end()) return it->second;
    const MatX<float>& p = store->at(name);
    Var<S> v = leaf(*tape, p.template cast<S>().eval(), trainable);
    vars.emplace(name, v);
    return v;
  }

  // Gradient of a parameter w.r.t. the loss backward() was run on; zero
  // matrix if the parameter never entered the graph this step.
  MatX<float> grad(const std::string& name) const {
    auto it = vars.find(name);
    const MatX<float>& p = store->at(name);
    if (it == vars.end() || !tape->has_grad(it->second.id))
      return MatX<float>::Zero(p.rows(), p.cols());
    return tape->grad(it->second.id).template cast<float>();
  }
};

template <typename S>
Var<S> linear(ParamTape<S>& pt, const std::string& prefix, Var<S> x) {
  return add_rowvec(matmul(x, pt[prefix + ".w"]), pt[prefix + ".b"]);
}

// linear -> batchnorm -> relu, the standard point-MLP block.
template <typename S>
Var<S> linear_bn_relu(ParamTape<S>& pt, const std::string& prefix, Var<S> x) {
  Var<S> h = linear(pt, prefix, x);
  h = batchnorm_cols(h, pt[prefix + ".bn.gamma"], pt[prefix + ".bn.beta"]);
  return relu(h);
}

// Registers the parameters linear_bn_relu stacks consume.
inline void init_mlp(ParamStore& store, const std::string& prefix,
                     int in, const std::vector<int>& widths, Rng& rng) {
  int d = in;
  for (size_t i = 0; i < widths.size(); ++i) {
    const std::string layer = prefix + ".l" + std::to_string(i);
    store.init_linear(layer, d, widths[i], rng);
    store.init_batchnorm(layer + ".bn", widths[i]);
    d = widths[i];
  }
}

template <typename S>
Var<S> apply_mlp(ParamTape<S>& pt, const std::string& prefix, Var<S> x, int n_layers) {
  Var<S> h = x;
  for (int i = 0; i < n_layers; ++i)
    h = linear_bn_relu(pt, prefix + ".l" + std::to_string(i), h);
  return h;
}

// Single-head cross attention with a residual connection:
//   out = q_in + softmax((q_in Wq)(kv_in Wk)^T / sqrt(d)) (kv_in Wv)
// Wq/Wk/Wv carry biases; no output projection, so d_v must equal d(q_in).
inline void init_attention(ParamStore& store, const std::string& prefix, int d, Rng& rng) {
  store.init_linear(prefix + ".q", d, d, rng);
  store.init_linear(prefix + ".k", d, d, rng);
  store.init_linear(prefix + ".v", d, d, rng);
}

template <typename S>
Var<S> cross_attention(ParamTape<S>& pt, const std::string& prefix,
                       Var<S> queries, Var<S> keys_values) {
  const int d = static_cast<int>(queries.value().cols());
  Var<S> q = linear(pt, prefix + ".q", queries);
  Var<S> k = linear(pt, prefix + ".k", keys_values);
  Var<S> v = linear(pt, prefix + ".v", keys_values);
  Var<S> att = softmax_rows(scale(matmul_nt(q, k), S(1) / std::sqrt(S(d))));
  return add(queries, matmul(att, v));
}

// Two-layer projection head d -> d -> d/2 with a relu between.
inline void init_projection(ParamStore& store, const std::string& prefix, int d, Rng& rng) {
  store.init_linear(prefix + ".p0", d, d, rng);
  store.init_linear(prefix + ".p1", d, d / 2, rng);
}

template <typename S>
Var<S> apply_projection(ParamTape<S>& pt, const std::string& prefix, Var<S> x) {
  return linear(pt, prefix + ".p1", relu(linear(pt, prefix + ".p0", x)));
}

// Decoupled weight decay Adam. Moments are keyed by parameter name, created
// lazily, and serialized alongside the parameters for exact resume.
struct AdamW {
  float lr = 0.008f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
  long step_count = 0;
  std::map<std::string, MatX<float>> m1;
  std::map<std::string, MatX<float>> m2;

  void step(ParamStore& store, const std::map<std::string, MatX<float>>& grads) {
    ++step_count;
    const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step_count));
    const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step_count));
    for (auto& [name, p] : store.params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const MatX<float>& g = git->second;
      auto& m = m1[name];
      auto& v = m2[name];
      if (m.size() == 0) m = MatX<float>::Zero(p.rows(), p.cols());
      if (v.size() == 0) v = MatX<float>::Zero(p.rows(), p.cols());
      m = beta1 * m + (1.0f - beta1) * g;
      v = beta2 * v + (1.0f - beta2) * g.cwiseProduct(g);
      const MatX<float> mhat = m / bc1;
      const MatX<float> vhat = v / bc2;
      p -= lr * weight_decay * p;
      p -= lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
    }
  }
};

}  // namespace cpfs3d
