#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "asc/attention.hpp"
#include "asc/dsp.hpp"
#include "asc/ops.hpp"
#include "asc/rng.hpp"

namespace asc {

enum class ModelKind { base, vfm, jrm, cmam };
enum class Strategy { from_scratch, feature_based, fine_tuning };
enum class EmbedderKind { none, surrogate, file_backed };

const char* to_string(ModelKind k);
const char* to_string(Strategy s);
const char* to_string(EmbedderKind k);
ModelKind model_kind_from_string(const std::string& s);
Strategy strategy_from_string(const std::string& s);
EmbedderKind embedder_kind_from_string(const std::string& s);

// Architecture description. Widths are the full-size values; scale_factor
// shrinks them for desk-scale runs (attention widths keep head
// divisibility by rounding to the nearest valid multiple).
struct ModelSpec {
  ModelKind kind = ModelKind::base;
  int n_classes = 0;
  std::vector<std::string> class_names;  // optional; sorted scene vocabulary
  int n_mels = 64;
  std::vector<int> cnn_channels = {64, 128, 256, 512};
  std::vector<int> jrm_channels = {64, 128, 256, 512, 1024, 1024, 2048};
  int attn_layers = 12;
  int attn_heads = 8;
  int d_model = 2048;
  int pool_heads = 4;
  int pool_attn_dim = 1024;
  EmbedderKind embedder = EmbedderKind::none;
  int embed_dim = 128;
  int frames_per_embedding = 100;  // ~1 s of 10 ms hops
  std::uint64_t embedder_seed = 7;
  Strategy strategy = Strategy::from_scratch;
  double scale_factor = 1.0;
  double dropout_rate = 0.1;

  void validate() const;

  // Scaled widths.
  int scaled(int width) const;
  int scaled_multiple_of(int width, int multiple) const;
  std::vector<int> cnn_channels_resolved() const;
  std::vector<int> jrm_channels_resolved() const;
  int d_model_resolved() const { return scaled_multiple_of(d_model, attn_heads); }
  int embed_dim_resolved() const;
  int pool_attn_dim_resolved() const { return scaled(pool_attn_dim); }
  int embedder_hidden_resolved() const { return std::max(8, 2 * embed_dim_resolved()); }

  bool has_embedder() const { return embedder != EmbedderKind::none; }
};

// A materialized architecture: spec plus named parameter tensors. Parameter
// names and shapes are derivable from the spec alone.
template <typename T>
struct Model {
  ModelSpec spec;
  std::map<std::string, Tensor<T>> params;
  std::uint64_t init_seed = 0;

  const Tensor<T>& param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw UsageError("model: unknown parameter " + name);
    return it->second;
  }

  Tensor<T>& param(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw UsageError("model: unknown parameter " + name);
    return it->second;
  }

  // Drops any tape attachment left behind by a training step.
  void detach_params() {
    for (auto& [name, t] : params) {
      t.tape = nullptr;
      t.node = -1;
    }
  }
};

template <typename T>
struct ModelInput {
  Tensor<T> features;     // [T, n_mels], frozen
  std::string clip_path;  // used by file-backed embedders
};

template <typename T>
ModelInput<T> make_input(const FeatureMatrix& features, std::string clip_path = {}) {
  ModelInput<T> in;
  in.features = features.frames.template cast<T>();
  in.clip_path = std::move(clip_path);
  return in;
}

// Reads an "ASCE" embedding sidecar (T_e u32, D u32, f32 data). Defined in
// model_io.cpp.
Tensor<float> read_embedding_sidecar(const std::string& path);
void write_embedding_sidecar(const std::string& path, const Tensor<float>& embeddings);
std::string embedding_sidecar_path(const std::string& clip_path);

namespace detail {

template <typename T>
Tensor<T> init_uniform(Rng& rng, Shape shape, double bound) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  for (auto& v : *t.data) v = static_cast<T>(uniform<double>(rng, -bound, bound));
  return t;
}

// Kaiming-uniform for conv/linear weights feeding a ReLU.
template <typename T>
Tensor<T> kaiming_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  return init_uniform<T>(rng, std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in)));
}

// Xavier-uniform for attention projections.
template <typename T>
Tensor<T> xavier_uniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  return init_uniform<T>(rng, std::move(shape),
                         std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

template <typename T>
void add_conv_stack(Model<T>& m, Rng& rng, const std::string& prefix,
                    const std::vector<int>& channels) {
  int c_in = 1;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const int c_out = channels[i];
    const std::size_t fan_in = static_cast<std::size_t>(c_in) * 9;
    m.params[prefix + std::to_string(i) + ".kernel"] = kaiming_uniform<T>(
        rng, {static_cast<std::size_t>(c_out), static_cast<std::size_t>(c_in), 3, 3}, fan_in);
    m.params[prefix + std::to_string(i) + ".bias"] =
        Tensor<T>::zeros({static_cast<std::size_t>(c_out)});
    c_in = c_out;
  }
}

template <typename T>
void add_pool(Model<T>& m, Rng& rng, const std::string& prefix, std::size_t d,
              std::size_t attn_dim, int n_heads) {
  const std::size_t out_per_head = std::max<std::size_t>(1, d / static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    m.params[hp + ".w1"] = xavier_uniform<T>(rng, {d, attn_dim}, d, attn_dim);
    m.params[hp + ".w2"] = xavier_uniform<T>(rng, {attn_dim, 1}, attn_dim, 1);
    m.params[hp + ".wv"] = xavier_uniform<T>(rng, {d, out_per_head}, d, out_per_head);
  }
}

template <typename T>
void add_mha(Model<T>& m, Rng& rng, const std::string& prefix, std::size_t d_q, std::size_t d_kv,
             std::size_t d_model) {
  m.params[prefix + ".wq"] = xavier_uniform<T>(rng, {d_q, d_model}, d_q, d_model);
  m.params[prefix + ".wk"] = xavier_uniform<T>(rng, {d_kv, d_model}, d_kv, d_model);
  m.params[prefix + ".wv"] = xavier_uniform<T>(rng, {d_kv, d_model}, d_kv, d_model);
  m.params[prefix + ".wo"] = xavier_uniform<T>(rng, {d_model, d_q}, d_model, d_q);
  m.params[prefix + ".ln_gain"] = Tensor<T>::full({d_q}, T(1));
  m.params[prefix + ".ln_shift"] = Tensor<T>::zeros({d_q});
}

template <typename T>
void add_linear(Model<T>& m, Rng& rng, const std::string& prefix, std::size_t d_in,
                std::size_t d_out) {
  m.params[prefix + ".weight"] = kaiming_uniform<T>(rng, {d_in, d_out}, d_in);
  m.params[prefix + ".bias"] = Tensor<T>::zeros({d_out});
}

template <typename T>
void add_surrogate_embedder(Model<T>& m, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  const auto stats_dim = static_cast<std::size_t>(2 * m.spec.n_mels);
  const auto hidden = static_cast<std::size_t>(m.spec.embedder_hidden_resolved());
  const auto out = static_cast<std::size_t>(m.spec.embed_dim_resolved());
  m.params["embedder.l1.weight"] = kaiming_uniform<T>(rng, {stats_dim, hidden}, stats_dim);
  m.params["embedder.l1.bias"] = Tensor<T>::zeros({hidden});
  m.params["embedder.l2.weight"] = kaiming_uniform<T>(rng, {hidden, out}, hidden);
  m.params["embedder.l2.bias"] = Tensor<T>::zeros({out});
}

// Spatial extent after the CNN stack: each maxpool halves an axis that is at
// least the window long and passes shorter axes through.
inline std::size_t pooled_extent(std::size_t len, std::size_t n_pools) {
  for (std::size_t i = 0; i < n_pools; ++i) {
    if (len >= 2) len /= 2;
  }
  return len;
}

}  // namespace detail

// Width of the time-major vector after a conv stack over a [T, width] input.
inline std::size_t cnn_output_width(const std::vector<int>& channels, std::size_t input_width) {
  const std::size_t freq = detail::pooled_extent(input_width, channels.size());
  return static_cast<std::size_t>(channels.back()) * freq;
}

// Builds a model with deterministic seeded initialization. Parameter
// creation order is fixed, so a given (spec, seed) always produces the same
// tensors.
template <typename T>
Model<T> init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model<T> m;
  m.spec = spec;
  m.init_seed = seed;
  Rng rng = make_rng(seed);

  const auto n_classes = static_cast<std::size_t>(spec.n_classes);
  const auto attn_dim = static_cast<std::size_t>(spec.pool_attn_dim_resolved());
  const auto embed_dim = static_cast<std::size_t>(spec.embed_dim_resolved());
  const auto d_model = static_cast<std::size_t>(spec.d_model_resolved());
  const std::vector<int> cnn = spec.cnn_channels_resolved();

  switch (spec.kind) {
    case ModelKind::base: {
      detail::add_conv_stack(m, rng, "cnn.", cnn);
      const std::size_t d = cnn_output_width(cnn, static_cast<std::size_t>(spec.n_mels));
      detail::add_pool(m, rng, "pool", d, attn_dim, spec.pool_heads);
      const std::size_t pooled =
          static_cast<std::size_t>(spec.pool_heads) * std::max<std::size_t>(1, d / spec.pool_heads);
      detail::add_linear(m, rng, "fc", pooled, n_classes);
      break;
    }
    case ModelKind::vfm: {
      detail::add_conv_stack(m, rng, "cnn.", cnn);
      const std::size_t d = cnn_output_width(cnn, embed_dim);
      detail::add_pool(m, rng, "pool", d, attn_dim, spec.pool_heads);
      const std::size_t pooled =
          static_cast<std::size_t>(spec.pool_heads) * std::max<std::size_t>(1, d / spec.pool_heads);
      detail::add_linear(m, rng, "fc", pooled, n_classes);
      break;
    }
    case ModelKind::jrm: {
      const std::vector<int> emb_cnn = spec.jrm_channels_resolved();
      detail::add_conv_stack(m, rng, "raw.cnn.", cnn);
      const std::size_t d_raw = cnn_output_width(cnn, static_cast<std::size_t>(spec.n_mels));
      detail::add_pool(m, rng, "raw.pool", d_raw, attn_dim, spec.pool_heads);
      detail::add_conv_stack(m, rng, "emb.cnn.", emb_cnn);
      const std::size_t d_emb = cnn_output_width(emb_cnn, embed_dim);
      detail::add_pool(m, rng, "emb.pool", d_emb, attn_dim, spec.pool_heads);
      const std::size_t pooled_raw =
          static_cast<std::size_t>(spec.pool_heads) * std::max<std::size_t>(1, d_raw / spec.pool_heads);
      const std::size_t pooled_emb =
          static_cast<std::size_t>(spec.pool_heads) * std::max<std::size_t>(1, d_emb / spec.pool_heads);
      detail::add_linear(m, rng, "fc", pooled_raw + pooled_emb, n_classes);
      break;
    }
    case ModelKind::cmam: {
      for (int l = 0; l < spec.attn_layers; ++l) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "sa.%02d", l);
        detail::add_mha(m, rng, buf, embed_dim, embed_dim, d_model);
      }
      detail::add_conv_stack(m, rng, "cnn.", cnn);
      const std::size_t d_raw = cnn_output_width(cnn, static_cast<std::size_t>(spec.n_mels));
      detail::add_linear(m, rng, "proj", d_raw, d_model);
      detail::add_mha(m, rng, "cross", embed_dim, d_model, d_model);
      detail::add_pool(m, rng, "pool", embed_dim, attn_dim, spec.pool_heads);
      const std::size_t pooled = static_cast<std::size_t>(spec.pool_heads) *
                                 std::max<std::size_t>(1, embed_dim / spec.pool_heads);
      detail::add_linear(m, rng, "fc", pooled, n_classes);
      break;
    }
  }

  if (spec.embedder == EmbedderKind::surrogate) {
    const std::uint64_t embed_seed = spec.strategy == Strategy::from_scratch
                                         ? derive_seed(seed, 0xE5CA9E)
                                         : spec.embedder_seed;
    detail::add_surrogate_embedder(m, embed_seed);
  }
  return m;
}

// Per-patch mean and standard deviation of each mel bin over ~1 s windows.
// A pure function of the input; never participates in gradients.
template <typename T>
Tensor<T> embedding_patch_stats(const Tensor<T>& features, int frames_per_embedding) {
  const std::size_t t_len = features.dim(0);
  const std::size_t n_mels = features.dim(1);
  const auto fpe = static_cast<std::size_t>(frames_per_embedding);
  const std::size_t n_patches = (t_len + fpe - 1) / fpe;
  Tensor<T> stats = Tensor<T>::zeros({n_patches, 2 * n_mels});
  for (std::size_t p = 0; p < n_patches; ++p) {
    const std::size_t f0 = p * fpe;
    const std::size_t f1 = std::min(t_len, f0 + fpe);
    const auto count = static_cast<double>(f1 - f0);
    for (std::size_t m = 0; m < n_mels; ++m) {
      double mean = 0.0;
      for (std::size_t f = f0; f < f1; ++f) mean += static_cast<double>((*features.data)[f * n_mels + m]);
      mean /= count;
      double var = 0.0;
      for (std::size_t f = f0; f < f1; ++f) {
        const double c = static_cast<double>((*features.data)[f * n_mels + m]) - mean;
        var += c * c;
      }
      var = std::max(0.0, var / count);
      (*stats.data)[p * 2 * n_mels + m] = static_cast<T>(mean);
      (*stats.data)[p * 2 * n_mels + n_mels + m] = static_cast<T>(std::sqrt(var));
    }
  }
  return stats;
}

// Event-embedding sequence [P, embed_dim] for one clip. Surrogate: frozen
// random-projection network over patch statistics (differentiable through
// its weights, so fine-tuning works). File-backed: ASCE sidecar next to the
// clip.
template <typename T>
Tensor<T> embed_clip(const Model<T>& m, const ModelInput<T>& input) {
  switch (m.spec.embedder) {
    case EmbedderKind::none:
      throw UsageError("model: " + std::string(to_string(m.spec.kind)) + " requires an embedder");
    case EmbedderKind::surrogate: {
      const Tensor<T> stats = embedding_patch_stats(input.features, m.spec.frames_per_embedding);
      const Tensor<T> h1 = relu(linear(stats, m.param("embedder.l1.weight"), m.param("embedder.l1.bias")));
      return linear(h1, m.param("embedder.l2.weight"), m.param("embedder.l2.bias"));
    }
    case EmbedderKind::file_backed: {
      if (input.clip_path.empty()) {
        throw DataError("model: file-backed embedder needs a clip path");
      }
      const Tensor<float> e = read_embedding_sidecar(embedding_sidecar_path(input.clip_path));
      if (e.dim(1) != static_cast<std::size_t>(m.spec.embed_dim_resolved())) {
        throw DataError("model: sidecar embedding dim " + std::to_string(e.dim(1)) +
                        " != expected " + std::to_string(m.spec.embed_dim_resolved()));
      }
      return e.template cast<T>();
    }
  }
  throw UsageError("model: unreachable embedder kind");
}

namespace detail {

template <typename T>
Tensor<T> run_conv_stack(const Model<T>& m, const std::string& prefix, const Tensor<T>& x2d,
                         std::size_t n_layers) {
  if (x2d.rank() != 2 || x2d.dim(0) < 1) {
    throw ShapeError("model: encoder input must be [T>=1, width], got " + shape_str(x2d.shape));
  }
  Tensor<T> x = reshape(x2d, {1, 1, x2d.dim(0), x2d.dim(1)});
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::string layer = prefix + std::to_string(i);
    x = conv2d(x, m.param(layer + ".kernel"), m.param(layer + ".bias"));
    x = relu(x);
    x = maxpool2d(x, 2);
  }
  return chw_to_time_major(x);
}

template <typename T>
AttnPoolParams<T> pool_params(const Model<T>& m, const std::string& prefix) {
  AttnPoolParams<T> p;
  for (int h = 0; h < m.spec.pool_heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    p.heads.push_back(AttnPoolHead<T>{m.param(hp + ".w1"), m.param(hp + ".w2"), m.param(hp + ".wv")});
  }
  return p;
}

template <typename T>
MhaParams<T> mha_params(const Model<T>& m, const std::string& prefix) {
  MhaParams<T> p;
  p.w_q = m.param(prefix + ".wq");
  p.w_k = m.param(prefix + ".wk");
  p.w_v = m.param(prefix + ".wv");
  p.w_o = m.param(prefix + ".wo");
  p.ln_gain = m.param(prefix + ".ln_gain");
  p.ln_shift = m.param(prefix + ".ln_shift");
  p.n_heads = m.spec.attn_heads;
  p.dropout_rate = static_cast<T>(m.spec.dropout_rate);
  return p;
}

template <typename T>
void check_features(const Model<T>& m, const ModelInput<T>& input) {
  if (input.features.rank() != 2 || input.features.dim(1) != static_cast<std::size_t>(m.spec.n_mels)) {
    throw ShapeError("model: features must be [T, " + std::to_string(m.spec.n_mels) + "], got " +
                     shape_str(input.features.shape));
  }
  if (input.features.dim(0) < 1) {
    throw ShapeError("model: need at least 1 feature frame (short axes pass through pooling)");
  }
}

}  // namespace detail

// Logits for one clip. Dispatches on the architecture; `cross_capture`
// (CMAM only) receives the cross-attention maps.
template <typename T>
Tensor<T> forward_logits(const Model<T>& m, const ModelInput<T>& input, bool training, Rng& rng,
                         AttnCapture<T>* cross_capture = nullptr) {
  detail::check_features(m, input);
  switch (m.spec.kind) {
    case ModelKind::base: {
      const Tensor<T> enc = detail::run_conv_stack(m, "cnn.", input.features,
                                                   m.spec.cnn_channels_resolved().size());
      const Tensor<T> pooled = attention_pool(enc, detail::pool_params(m, "pool"));
      return linear(pooled, m.param("fc.weight"), m.param("fc.bias"));
    }
    case ModelKind::vfm: {
      const Tensor<T> emb = embed_clip(m, input);
      const Tensor<T> enc =
          detail::run_conv_stack(m, "cnn.", emb, m.spec.cnn_channels_resolved().size());
      const Tensor<T> pooled = attention_pool(enc, detail::pool_params(m, "pool"));
      return linear(pooled, m.param("fc.weight"), m.param("fc.bias"));
    }
    case ModelKind::jrm: {
      const Tensor<T> enc_raw = detail::run_conv_stack(m, "raw.cnn.", input.features,
                                                       m.spec.cnn_channels_resolved().size());
      const Tensor<T> pooled_raw = attention_pool(enc_raw, detail::pool_params(m, "raw.pool"));
      const Tensor<T> emb = embed_clip(m, input);
      const Tensor<T> enc_emb =
          detail::run_conv_stack(m, "emb.cnn.", emb, m.spec.jrm_channels_resolved().size());
      const Tensor<T> pooled_emb = attention_pool(enc_emb, detail::pool_params(m, "emb.pool"));
      const Tensor<T> joint = concat_vec<T>({pooled_raw, pooled_emb});
      return linear(joint, m.param("fc.weight"), m.param("fc.bias"));
    }
    case ModelKind::cmam: {
      const Tensor<T> emb = embed_clip(m, input);
      const Tensor<T> pe = positional_encoding<T>(emb.dim(0), emb.dim(1));
      Tensor<T> h = add(emb, pe);
      std::vector<MhaParams<T>> layers;
      layers.reserve(static_cast<std::size_t>(m.spec.attn_layers));
      for (int l = 0; l < m.spec.attn_layers; ++l) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "sa.%02d", l);
        layers.push_back(detail::mha_params(m, buf));
      }
      h = self_attention_stack<T>(h, layers, training, rng);
      const Tensor<T> enc = detail::run_conv_stack(m, "cnn.", input.features,
                                                   m.spec.cnn_channels_resolved().size());
      const Tensor<T> kv = linear(enc, m.param("proj.weight"), m.param("proj.bias"));
      const Tensor<T> fused =
          mha_block(h, kv, detail::mha_params(m, "cross"), training, rng, cross_capture);
      const Tensor<T> pooled = attention_pool(fused, detail::pool_params(m, "pool"));
      return linear(pooled, m.param("fc.weight"), m.param("fc.bias"));
    }
  }
  throw UsageError("model: unreachable kind");
}

template <typename T>
std::size_t count_params(const Model<T>& m) {
  std::size_t n = 0;
  for (const auto& [name, t] : m.params) n += t.size();
  return n;
}

// Parameter names the optimizer updates under the current strategy: the
// feature-based strategy freezes embedder parameters.
template <typename T>
std::vector<std::string> trainable_param_names(const Model<T>& m) {
  std::vector<std::string> names;
  for (const auto& [name, t] : m.params) {
    if (m.spec.strategy == Strategy::feature_based && name.starts_with("embedder.")) continue;
    names.push_back(name);
  }
  return names;
}

template <typename T>
void set_strategy(Model<T>& m, Strategy strategy) {
  if (strategy != Strategy::from_scratch && !m.spec.has_embedder()) {
    throw UsageError(std::string("model: strategy ") + to_string(strategy) +
                     " requires an embedder, but " + to_string(m.spec.kind) + " has none");
  }
  if (m.spec.embedder == EmbedderKind::file_backed && strategy != Strategy::feature_based) {
    throw UsageError("model: file-backed embeddings are fixed; only feature_based applies");
  }
  m.spec.strategy = strategy;
  if (strategy == Strategy::from_scratch && m.spec.embedder == EmbedderKind::surrogate) {
    detail::add_surrogate_embedder(m, derive_seed(m.init_seed, 0xE5CA9E));
  }
}

}  // namespace asc
