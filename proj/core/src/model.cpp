#include "asc/model.hpp"

#include <cmath>
#include <numeric>

namespace asc {

const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::base: return "base";
    case ModelKind::vfm: return "vfm";
    case ModelKind::jrm: return "jrm";
    case ModelKind::cmam: return "cmam";
  }
  return "unknown";
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::from_scratch: return "from_scratch";
    case Strategy::feature_based: return "feature_based";
    case Strategy::fine_tuning: return "fine_tuning";
  }
  return "unknown";
}

const char* to_string(EmbedderKind k) {
  switch (k) {
    case EmbedderKind::none: return "none";
    case EmbedderKind::surrogate: return "surrogate";
    case EmbedderKind::file_backed: return "file_backed";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "base") return ModelKind::base;
  if (s == "vfm") return ModelKind::vfm;
  if (s == "jrm") return ModelKind::jrm;
  if (s == "cmam") return ModelKind::cmam;
  throw UsageError("unknown model kind: " + s);
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "from_scratch") return Strategy::from_scratch;
  if (s == "feature_based") return Strategy::feature_based;
  if (s == "fine_tuning") return Strategy::fine_tuning;
  throw UsageError("unknown strategy: " + s);
}

EmbedderKind embedder_kind_from_string(const std::string& s) {
  if (s == "none") return EmbedderKind::none;
  if (s == "surrogate") return EmbedderKind::surrogate;
  if (s == "file_backed") return EmbedderKind::file_backed;
  throw UsageError("unknown embedder kind: " + s);
}

int ModelSpec::scaled(int width) const {
  return std::max(1, static_cast<int>(std::llround(width * scale_factor)));
}

int ModelSpec::scaled_multiple_of(int width, int multiple) const {
  const int m = std::max(1, multiple);
  const int k = std::max(1, static_cast<int>(std::llround(width * scale_factor / m)));
  return k * m;
}

std::vector<int> ModelSpec::cnn_channels_resolved() const {
  std::vector<int> out;
  out.reserve(cnn_channels.size());
  for (int c : cnn_channels) out.push_back(scaled(c));
  return out;
}

std::vector<int> ModelSpec::jrm_channels_resolved() const {
  std::vector<int> out;
  out.reserve(jrm_channels.size());
  for (int c : jrm_channels) out.push_back(scaled(c));
  return out;
}

int ModelSpec::embed_dim_resolved() const {
  // Even for the sinusoidal table and divisible by the pooling head count.
  return scaled_multiple_of(embed_dim, std::lcm(2, std::max(1, pool_heads)));
}

void ModelSpec::validate() const {
  if (n_classes < 2) throw UsageError("model: n_classes must be >= 2");
  if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(n_classes)) {
    throw UsageError("model: class_names size must equal n_classes");
  }
  if (n_mels < 1) throw UsageError("model: n_mels must be >= 1");
  if (cnn_channels.empty()) throw UsageError("model: cnn_channels must be non-empty");
  if (kind == ModelKind::jrm && jrm_channels.empty()) {
    throw UsageError("model: jrm_channels must be non-empty");
  }
  for (int c : cnn_channels) {
    if (c < 1) throw UsageError("model: channel widths must be positive");
  }
  for (int c : jrm_channels) {
    if (c < 1) throw UsageError("model: channel widths must be positive");
  }
  if (attn_layers < 0) throw UsageError("model: attn_layers must be >= 0");
  if (attn_heads < 1 || pool_heads < 1) throw UsageError("model: head counts must be >= 1");
  if (d_model < attn_heads || d_model % attn_heads != 0) {
    throw UsageError("model: d_model must be a positive multiple of attn_heads");
  }
  if (pool_attn_dim < 1) throw UsageError("model: pool_attn_dim must be >= 1");
  if (scale_factor <= 0.0 || scale_factor > 1.0) {
    throw UsageError("model: scale_factor must be in (0, 1]");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw UsageError("model: dropout_rate must be in [0, 1)");
  }
  if (embed_dim < 1 || frames_per_embedding < 1) {
    throw UsageError("model: embedder dims must be positive");
  }
  if (kind == ModelKind::base) {
    if (embedder != EmbedderKind::none) {
      throw UsageError("model: the base architecture takes no embedder");
    }
  } else {
    if (embedder == EmbedderKind::none) {
      throw UsageError(std::string("model: ") + to_string(kind) + " requires an embedder");
    }
  }
  if (embedder == EmbedderKind::file_backed && strategy != Strategy::feature_based) {
    throw UsageError("model: file-backed embeddings support only the feature_based strategy");
  }
  if (kind == ModelKind::base && strategy != Strategy::from_scratch) {
    throw UsageError("model: base has no embedder; only from_scratch applies");
  }
}

}  // namespace asc
