#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "convrank/common.hpp"
#include "convrank/embedding.hpp"

namespace convrank {

enum class Arch : std::uint8_t { single = 0, multi = 1 };

inline const char* arch_name(Arch a) { return a == Arch::single ? "single" : "multi"; }

inline Arch arch_from_name(const std::string& s) {
  if (s == "single") return Arch::single;
  if (s == "multi") return Arch::multi;
  throw ConfigError("unknown architecture '" + s + "'");
}

inline constexpr double kLossClamp = 1e-12;

template <typename T>
struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::vector<T> w;  // out x in, row-major
  std::vector<T> b;  // out
};

// Feed-forward stack with a ReLU after every layer; the network's output is
// the post-ReLU activation of the last layer.
template <typename T>
struct Mlp {
  std::vector<DenseLayer<T>> layers;

  std::size_t in_dim() const { return layers.front().in; }
  std::size_t out_dim() const { return layers.back().out; }
};

template <typename T>
struct MlpCache {
  std::vector<T> input;
  std::vector<std::vector<T>> preact;  // z per layer
  std::vector<std::vector<T>> act;     // relu(z) per layer
};

template <typename T>
Mlp<T> make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, Rng& rng) {
  if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  Mlp<T> mlp;
  std::size_t in = input_dim;
  for (std::size_t out : hidden) {
    if (out < 1) throw ConfigError("hidden layer sizes must be >= 1");
    DenseLayer<T> layer;
    layer.in = in;
    layer.out = out;
    layer.w.resize(out * in);
    layer.b.resize(out);
    double bound = 1.0 / std::sqrt(double(in));
    for (auto& v : layer.w) v = T(rng.uniform(-bound, bound));
    for (auto& v : layer.b) v = T(rng.uniform(-bound, bound));
    mlp.layers.push_back(std::move(layer));
    in = out;
  }
  return mlp;
}

// Dot products accumulate in double regardless of the storage scalar.
template <typename T>
MlpCache<T> mlp_forward(const Mlp<T>& mlp, std::span<const T> x) {
  if (x.size() != mlp.in_dim())
    throw DataError("mlp input dimension " + std::to_string(x.size()) + " != " +
                    std::to_string(mlp.in_dim()));
  MlpCache<T> cache;
  cache.input.assign(x.begin(), x.end());
  const std::vector<T>* prev = &cache.input;
  for (const auto& layer : mlp.layers) {
    std::vector<T> z(layer.out);
    for (std::size_t i = 0; i < layer.out; ++i) {
      double acc = double(layer.b[i]);
      const T* wrow = layer.w.data() + i * layer.in;
      for (std::size_t j = 0; j < layer.in; ++j) acc += double(wrow[j]) * double((*prev)[j]);
      z[i] = T(acc);
    }
    std::vector<T> a(layer.out);
    for (std::size_t i = 0; i < layer.out; ++i) a[i] = z[i] > T(0) ? z[i] : T(0);
    cache.preact.push_back(std::move(z));
    cache.act.push_back(std::move(a));
    prev = &cache.act.back();
  }
  return cache;
}

template <typename T>
const std::vector<T>& mlp_output(const MlpCache<T>& cache) {
  return cache.act.back();
}

template <typename T>
struct LogisticHead {
  std::vector<T> w;
  T b = T(0);
};

template <typename T>
LogisticHead<T> make_head(std::size_t dim, Rng& rng) {
  LogisticHead<T> head;
  head.w.resize(dim);
  double bound = 1.0 / std::sqrt(double(dim));
  for (auto& v : head.w) v = T(rng.uniform(-bound, bound));
  head.b = T(rng.uniform(-bound, bound));
  return head;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

template <typename T>
double head_forward(const LogisticHead<T>& head, std::span<const T> h) {
  if (h.size() != head.w.size()) throw DataError("head input dimension mismatch");
  double z = double(head.b);
  for (std::size_t i = 0; i < h.size(); ++i) z += double(head.w[i]) * double(h[i]);
  return sigmoid(z);
}

// Per-head binary cross entropy; p is clamped away from {0,1} so the log is
// always finite.
inline double bce(double p, bool label) {
  if (p < kLossClamp) p = kLossClamp;
  if (p > 1.0 - kLossClamp) p = 1.0 - kLossClamp;
  return label ? -std::log(p) : -std::log(1.0 - p);
}

inline double loss_of(std::span<const double> probs, bool label) {
  double total = 0.0;
  for (double p : probs) total += bce(p, label);
  return total;
}

// ---------------------------------------------------------------------------
// Networks.
// ---------------------------------------------------------------------------

// One trunk over the concatenation [I; C; A; R] with a logistic head.
template <typename T>
struct SingleNet {
  Mlp<T> trunk;
  LogisticHead<T> head;
};

// Three per-feature subnetworks over [I;R], [C;R], [A;R], each with its own
// head, plus an aggregate network over the concatenated hidden layers. The
// final head's probability is the evaluation score; training penalizes the
// sum of all four losses.
template <typename T>
struct MultiNet {
  Mlp<T> sub_input, sub_context, sub_author;
  Mlp<T> aggregate;
  LogisticHead<T> head_input, head_context, head_author, head_final;
};

template <typename T>
struct ForwardResult {
  std::vector<double> probs;        // single: {p}; multi: {p1, p2, p3, p4}
  std::vector<MlpCache<T>> caches;  // single: {trunk}; multi: {sub_i, sub_c, sub_a, agg}

  double score() const { return probs.back(); }
};

namespace detail {

template <typename T>
std::vector<T> concat(std::initializer_list<std::span<const T>> parts) {
  std::size_t n = 0;
  for (auto p : parts) n += p.size();
  std::vector<T> out;
  out.reserve(n);
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

template <typename T>
void check_finite(const FeatureVectors<T>& f) {
  auto check = [](const std::vector<T>& v, const char* name) {
    for (T x : v)
      if (!std::isfinite(double(x))) throw NumericError(std::string("non-finite ") + name + " feature");
  };
  check(f.response, "response");
  check(f.input, "input");
  check(f.context, "context");
  check(f.author, "author");
}

}  // namespace detail

template <typename T>
ForwardResult<T> net_forward(const SingleNet<T>& net, const FeatureVectors<T>& f) {
  detail::check_finite(f);
  auto x = detail::concat<T>({f.input, f.context, f.author, f.response});
  ForwardResult<T> out;
  out.caches.push_back(mlp_forward(net.trunk, std::span<const T>(x)));
  out.probs.push_back(head_forward(net.head, std::span<const T>(mlp_output(out.caches[0]))));
  return out;
}

template <typename T>
ForwardResult<T> net_forward(const MultiNet<T>& net, const FeatureVectors<T>& f) {
  detail::check_finite(f);
  ForwardResult<T> out;
  auto xi = detail::concat<T>({f.input, f.response});
  auto xc = detail::concat<T>({f.context, f.response});
  auto xa = detail::concat<T>({f.author, f.response});
  out.caches.push_back(mlp_forward(net.sub_input, std::span<const T>(xi)));
  out.caches.push_back(mlp_forward(net.sub_context, std::span<const T>(xc)));
  out.caches.push_back(mlp_forward(net.sub_author, std::span<const T>(xa)));
  auto ha = detail::concat<T>({mlp_output(out.caches[0]), mlp_output(out.caches[1]),
                               mlp_output(out.caches[2])});
  out.caches.push_back(mlp_forward(net.aggregate, std::span<const T>(ha)));
  out.probs.push_back(head_forward(net.head_input, std::span<const T>(mlp_output(out.caches[0]))));
  out.probs.push_back(head_forward(net.head_context, std::span<const T>(mlp_output(out.caches[1]))));
  out.probs.push_back(head_forward(net.head_author, std::span<const T>(mlp_output(out.caches[2]))));
  out.probs.push_back(head_forward(net.head_final, std::span<const T>(mlp_output(out.caches[3]))));
  return out;
}

// ---------------------------------------------------------------------------
// Backward.
// ---------------------------------------------------------------------------

template <typename T>
struct HeadGrads {
  std::vector<T> w;
  T b = T(0);
};

template <typename T>
struct MlpGrads {
  std::vector<DenseLayer<T>> layers;  // same shapes as the mlp, gradient values
};

template <typename T>
struct NetGrads {
  std::vector<MlpGrads<T>> mlps;    // order matches ForwardResult caches
  std::vector<HeadGrads<T>> heads;  // single: {head}; multi: {h1, h2, h3, h4}
  std::vector<T> g_response, g_input, g_context, g_author;
};

namespace detail {

// dz for the head's input h, grads for (w, b). dlogit = p - y for BCE.
template <typename T>
HeadGrads<T> head_backward(const LogisticHead<T>& head, std::span<const T> h, double dlogit,
                           std::vector<double>& dh) {
  HeadGrads<T> g;
  g.w.resize(head.w.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    g.w[i] = T(dlogit * double(h[i]));
    dh[i] += dlogit * double(head.w[i]);
  }
  g.b = T(dlogit);
  return g;
}

// Backprop through one mlp given d(output activation); returns gradient of
// the mlp input.
template <typename T>
std::vector<double> mlp_backward(const Mlp<T>& mlp, const MlpCache<T>& cache,
                                 std::vector<double> d_act, MlpGrads<T>& grads) {
  if (cache.preact.size() != mlp.layers.size()) throw DataError("stale cache: layer count mismatch");
  grads.layers.resize(mlp.layers.size());
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    const auto& layer = mlp.layers[li];
    if (cache.preact[li].size() != layer.out) throw DataError("stale cache: shape mismatch");
    auto& g = grads.layers[li];
    g.in = layer.in;
    g.out = layer.out;
    g.w.assign(layer.out * layer.in, T(0));
    g.b.assign(layer.out, T(0));
    const std::vector<T>& below = li == 0 ? cache.input : cache.act[li - 1];
    std::vector<double> d_below(layer.in, 0.0);
    for (std::size_t i = 0; i < layer.out; ++i) {
      double dz = cache.preact[li][i] > T(0) ? d_act[i] : 0.0;
      if (dz == 0.0) continue;
      g.b[i] = T(dz);
      T* gw = g.w.data() + i * layer.in;
      const T* wrow = layer.w.data() + i * layer.in;
      for (std::size_t j = 0; j < layer.in; ++j) {
        gw[j] = T(dz * double(below[j]));
        d_below[j] += dz * double(wrow[j]);
      }
    }
    d_act = std::move(d_below);
  }
  return d_act;
}

template <typename T>
std::vector<T> narrow(const std::vector<double>& v, std::size_t lo, std::size_t n) {
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = T(v[lo + i]);
  return out;
}

}  // namespace detail

// Exact gradients of the (possibly head-masked) summed loss. head_weights
// scales each head's loss term; defaults to all ones. The feature gradients
// come back dense; scattering them onto embedding rows is a separate step.
template <typename T>
NetGrads<T> net_backward(const SingleNet<T>& net, const ForwardResult<T>& fwd, bool label,
                         std::span<const double> head_weights = {}) {
  double w0 = head_weights.empty() ? 1.0 : head_weights[0];
  double y = label ? 1.0 : 0.0;
  double dlogit = (fwd.probs[0] - y) * w0;

  NetGrads<T> g;
  const auto& h = mlp_output(fwd.caches[0]);
  std::vector<double> dh(h.size(), 0.0);
  g.heads.push_back(detail::head_backward(net.head, std::span<const T>(h), dlogit, dh));
  g.mlps.resize(1);
  auto dx = detail::mlp_backward(net.trunk, fwd.caches[0], std::move(dh), g.mlps[0]);

  std::size_t d = dx.size() / 4;
  g.g_input = detail::narrow<T>(dx, 0, d);
  g.g_context = detail::narrow<T>(dx, d, d);
  g.g_author = detail::narrow<T>(dx, 2 * d, d);
  g.g_response = detail::narrow<T>(dx, 3 * d, d);
  return g;
}

template <typename T>
NetGrads<T> net_backward(const MultiNet<T>& net, const ForwardResult<T>& fwd, bool label,
                         std::span<const double> head_weights = {}) {
  double y = label ? 1.0 : 0.0;
  auto weight = [&](std::size_t i) { return head_weights.empty() ? 1.0 : head_weights[i]; };

  NetGrads<T> g;
  g.mlps.resize(4);
  g.heads.resize(4);

  // Final head and aggregate come first: their gradient feeds the subnets.
  const auto& h4 = mlp_output(fwd.caches[3]);
  std::vector<double> dh4(h4.size(), 0.0);
  g.heads[3] = detail::head_backward(net.head_final, std::span<const T>(h4),
                                     (fwd.probs[3] - y) * weight(3), dh4);
  auto d_agg_in = detail::mlp_backward(net.aggregate, fwd.caches[3], std::move(dh4), g.mlps[3]);

  const Mlp<T>* subs[3] = {&net.sub_input, &net.sub_context, &net.sub_author};
  const LogisticHead<T>* heads[3] = {&net.head_input, &net.head_context, &net.head_author};
  std::size_t offset = 0;
  std::vector<std::vector<double>> d_sub_in(3);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& h = mlp_output(fwd.caches[s]);
    std::vector<double> dh(h.size(), 0.0);
    for (std::size_t i = 0; i < h.size(); ++i) dh[i] = d_agg_in[offset + i];
    offset += h.size();
    g.heads[s] = detail::head_backward(*heads[s], std::span<const T>(h),
                                       (fwd.probs[s] - y) * weight(s), dh);
    d_sub_in[s] = detail::mlp_backward(*subs[s], fwd.caches[s], std::move(dh), g.mlps[s]);
  }

  std::size_t d = d_sub_in[0].size() / 2;
  g.g_input = detail::narrow<T>(d_sub_in[0], 0, d);
  g.g_context = detail::narrow<T>(d_sub_in[1], 0, d);
  g.g_author = detail::narrow<T>(d_sub_in[2], 0, d);
  g.g_response.assign(d, T(0));
  for (std::size_t k = 0; k < d; ++k)
    g.g_response[k] = T(d_sub_in[0][d + k] + d_sub_in[1][d + k] + d_sub_in[2][d + k]);
  return g;
}

// ---------------------------------------------------------------------------
// Full model: embedding tables plus one of the two networks.
// ---------------------------------------------------------------------------

template <typename T>
struct ModelParams {
  std::size_t d = 0;
  std::vector<std::size_t> hidden;
  FeatureMask mask;
  std::uint64_t seed = 0;
  EmbeddingTable<T> ngram_table;
  EmbeddingTable<T> user_table;
  std::variant<SingleNet<T>, MultiNet<T>> net;

  Arch arch() const { return std::holds_alternative<SingleNet<T>>(net) ? Arch::single : Arch::multi; }
  SingleNet<T>& single() { return std::get<SingleNet<T>>(net); }
  const SingleNet<T>& single() const { return std::get<SingleNet<T>>(net); }
  MultiNet<T>& multi() { return std::get<MultiNet<T>>(net); }
  const MultiNet<T>& multi() const { return std::get<MultiNet<T>>(net); }
};

// Tables first, then network layers, all from one seeded stream.
template <typename T>
ModelParams<T> init_model(Arch arch, std::size_t ngram_rows, std::size_t user_rows, std::size_t d,
                          const std::vector<std::size_t>& hidden, std::uint64_t seed,
                          const FeatureMask& mask = {}) {
  if (d < 1) throw ConfigError("embedding dimension must be >= 1");
  ModelParams<T> m;
  m.d = d;
  m.hidden = hidden;
  m.mask = mask;
  m.seed = seed;
  Rng rng(seed);
  m.ngram_table = init_table<T>(ngram_rows, d, rng);
  m.user_table = init_table<T>(user_rows, d, rng);
  if (arch == Arch::single) {
    SingleNet<T> net;
    net.trunk = make_mlp<T>(4 * d, hidden, rng);
    net.head = make_head<T>(hidden.back(), rng);
    m.net = std::move(net);
  } else {
    MultiNet<T> net;
    net.sub_input = make_mlp<T>(2 * d, hidden, rng);
    net.sub_context = make_mlp<T>(2 * d, hidden, rng);
    net.sub_author = make_mlp<T>(2 * d, hidden, rng);
    net.aggregate = make_mlp<T>(3 * hidden.back(), hidden, rng);
    net.head_input = make_head<T>(hidden.back(), rng);
    net.head_context = make_head<T>(hidden.back(), rng);
    net.head_author = make_head<T>(hidden.back(), rng);
    net.head_final = make_head<T>(hidden.back(), rng);
    m.net = std::move(net);
  }
  return m;
}

template <typename T>
void zero_heads(ModelParams<T>& m) {
  auto zero = [](LogisticHead<T>& h) {
    std::fill(h.w.begin(), h.w.end(), T(0));
    h.b = T(0);
  };
  if (m.arch() == Arch::single) {
    zero(m.single().head);
  } else {
    zero(m.multi().head_input);
    zero(m.multi().head_context);
    zero(m.multi().head_author);
    zero(m.multi().head_final);
  }
}

// Every parameter tensor in declared (checkpoint) order.
template <typename T, typename Fn>
void for_each_param(ModelParams<T>& m, Fn&& fn) {
  fn(std::span<T>(m.ngram_table.data()));
  fn(std::span<T>(m.user_table.data()));
  auto mlp = [&](Mlp<T>& mm) {
    for (auto& layer : mm.layers) {
      fn(std::span<T>(layer.w));
      fn(std::span<T>(layer.b));
    }
  };
  auto head = [&](LogisticHead<T>& h) {
    fn(std::span<T>(h.w));
    fn(std::span<T>(&h.b, 1));
  };
  if (m.arch() == Arch::single) {
    mlp(m.single().trunk);
    head(m.single().head);
  } else {
    auto& net = m.multi();
    mlp(net.sub_input);
    mlp(net.sub_context);
    mlp(net.sub_author);
    mlp(net.aggregate);
    head(net.head_input);
    head(net.head_context);
    head(net.head_author);
    head(net.head_final);
  }
}

template <typename T, typename Fn>
void for_each_param(const ModelParams<T>& m, Fn&& fn) {
  for_each_param(const_cast<ModelParams<T>&>(m),
                 [&](std::span<T> s) { fn(std::span<const T>(s)); });
}

// ---------------------------------------------------------------------------
// Example-level forward / backward.
// ---------------------------------------------------------------------------

template <typename T>
struct ExampleForward {
  Featurized<T> features;
  ForwardResult<T> result;
};

template <typename T>
ExampleForward<T> forward_example(const ModelParams<T>& m, const Vocabulary& vocab,
                                  const Example& ex, std::span<const T> author_override = {}) {
  ExampleForward<T> out;
  out.features = featurize(ex, m.ngram_table, m.user_table, vocab, m.mask, author_override);
  if (m.arch() == Arch::single) {
    out.result = net_forward(m.single(), out.features.vectors);
  } else {
    out.result = net_forward(m.multi(), out.features.vectors);
  }
  return out;
}

// Mirrors the parameters: dense gradients for the network plus sparse row
// gradients for exactly the embedding rows the example touched. Bag rows are
// scaled by count/L.
template <typename T>
struct ExampleGrads {
  NetGrads<T> net;
  std::map<std::uint32_t, std::vector<T>> ngram_rows;
  std::map<std::uint32_t, std::vector<T>> user_rows;
};

template <typename T>
ExampleGrads<T> backward_example(const ModelParams<T>& m, const ExampleForward<T>& fwd, bool label,
                                 std::span<const double> head_weights = {}) {
  ExampleGrads<T> g;
  if (m.arch() == Arch::single) {
    g.net = net_backward(m.single(), fwd.result, label, head_weights);
  } else {
    g.net = net_backward(m.multi(), fwd.result, label, head_weights);
  }

  auto scatter = [&](const BagRef& bag, const std::vector<T>& grad) {
    if (bag.total == 0) return;
    for (const auto& [row, count] : bag.rows) {
      double scale = double(count) / double(bag.total);
      auto it = g.ngram_rows.find(row);
      if (it == g.ngram_rows.end()) it = g.ngram_rows.emplace(row, std::vector<T>(m.d, T(0))).first;
      for (std::size_t k = 0; k < m.d; ++k)
        it->second[k] = T(double(it->second[k]) + scale * double(grad[k]));
    }
  };
  scatter(fwd.features.bags.response, g.net.g_response);
  scatter(fwd.features.bags.input, g.net.g_input);
  scatter(fwd.features.bags.context, g.net.g_context);
  if (fwd.features.bags.author_row != kUnknownAuthor)
    g.user_rows.emplace(fwd.features.bags.author_row, g.net.g_author);
  return g;
}

// Evaluation score for one candidate: the classifier probability (the final
// head's for the multi-loss network).
template <typename T>
double score_example(const ModelParams<T>& m, const Vocabulary& vocab, const Example& ex,
                     std::span<const T> author_override = {}) {
  return forward_example(m, vocab, ex, author_override).result.score();
}

}  // namespace convrank
