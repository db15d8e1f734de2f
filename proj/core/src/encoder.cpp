#include "supcl/encoder.hpp"

#include <cmath>
#include <cstring>

#include "supcl/error.hpp"
#include "supcl/ops.hpp"

namespace supcl {

namespace {

constexpr double kInitStd = 0.02;
// Additive attention bias for padded keys; exp() of it underflows to 0.
constexpr double kMaskedScore = -1e30;

std::uint64_t site_tag(std::size_t layer, DropoutSite site) {
  return (static_cast<std::uint64_t>(layer) << 8) | static_cast<std::uint64_t>(site);
}

Tensor normal_param(Shape shape, std::mt19937_64& engine) {
  std::vector<double> data(numel(shape));
  for (double& v : data) v = kInitStd * standard_normal(engine);
  return Tensor(std::move(shape), std::move(data), true);
}

Tensor const_param(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

Tensor deep_copy(const Tensor& t) {
  return Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), t.requires_grad());
}

Tensor site_dropout(const Tensor& x, const EncoderConfig& config, DropoutSite site,
                    std::size_t layer, double p, const RngStream& rng, bool training) {
  if (!config.dropout_sites.enabled(site)) return x;
  return dropout(x, p, rng.derive(site_tag(layer, site)), training);
}

}  // namespace

std::string_view to_string(DropoutSite site) {
  switch (site) {
    case DropoutSite::embedding: return "embedding";
    case DropoutSite::attention_weights: return "attention_weights";
    case DropoutSite::attention_output: return "attention_output";
    case DropoutSite::ffn_hidden: return "ffn_hidden";
  }
  return "unknown";
}

DropoutSite dropout_site_from_string(std::string_view name) {
  for (DropoutSite site : {DropoutSite::embedding, DropoutSite::attention_weights,
                           DropoutSite::attention_output, DropoutSite::ffn_hidden}) {
    if (to_string(site) == name) return site;
  }
  fail(ErrorKind::config, "unknown dropout site '" + std::string(name) + "'");
}

bool DropoutSites::enabled(DropoutSite site) const {
  switch (site) {
    case DropoutSite::embedding: return embedding;
    case DropoutSite::attention_weights: return attention_weights;
    case DropoutSite::attention_output: return attention_output;
    case DropoutSite::ffn_hidden: return ffn_hidden;
  }
  return false;
}

std::vector<DropoutSite> DropoutSites::list() const {
  std::vector<DropoutSite> out;
  for (DropoutSite site : {DropoutSite::embedding, DropoutSite::attention_weights,
                           DropoutSite::attention_output, DropoutSite::ffn_hidden}) {
    if (enabled(site)) out.push_back(site);
  }
  return out;
}

DropoutSites DropoutSites::from_list(const std::vector<DropoutSite>& sites) {
  DropoutSites out{false, false, false, false};
  for (DropoutSite site : sites) {
    switch (site) {
      case DropoutSite::embedding: out.embedding = true; break;
      case DropoutSite::attention_weights: out.attention_weights = true; break;
      case DropoutSite::attention_output: out.attention_output = true; break;
      case DropoutSite::ffn_hidden: out.ffn_hidden = true; break;
    }
  }
  return out;
}

void EncoderConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::config, "encoder config: " + msg); };
  if (vocab_size < 4) bad("vocab_size must cover the 4 reserved ids");
  if (max_seq_len < 2) bad("max_seq_len must be >= 2");
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0) bad("dimensions must be positive");
  if (d_model % n_heads != 0) {
    bad("d_model " + std::to_string(d_model) + " not divisible by n_heads " + std::to_string(n_heads));
  }
}

std::vector<NamedTensor> EncoderWeights::named_parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"token_embedding", token_embedding});
  out.push_back({"position_embedding", position_embedding});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerWeights& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    out.push_back({p + "ln1_gain", l.ln1_gain});
    out.push_back({p + "ln1_bias", l.ln1_bias});
    out.push_back({p + "wq", l.wq});
    out.push_back({p + "bq", l.bq});
    out.push_back({p + "wk", l.wk});
    out.push_back({p + "bk", l.bk});
    out.push_back({p + "wv", l.wv});
    out.push_back({p + "bv", l.bv});
    out.push_back({p + "wo", l.wo});
    out.push_back({p + "bo", l.bo});
    out.push_back({p + "ln2_gain", l.ln2_gain});
    out.push_back({p + "ln2_bias", l.ln2_bias});
    out.push_back({p + "w1", l.w1});
    out.push_back({p + "b1", l.b1});
    out.push_back({p + "w2", l.w2});
    out.push_back({p + "b2", l.b2});
  }
  out.push_back({"final_ln_gain", final_ln_gain});
  out.push_back({"final_ln_bias", final_ln_bias});
  return out;
}

EncoderWeights EncoderWeights::clone() const {
  EncoderWeights out;
  out.config = config;
  out.token_embedding = deep_copy(token_embedding);
  out.position_embedding = deep_copy(position_embedding);
  for (const LayerWeights& l : layers) {
    out.layers.push_back({deep_copy(l.ln1_gain), deep_copy(l.ln1_bias), deep_copy(l.wq),
                          deep_copy(l.bq), deep_copy(l.wk), deep_copy(l.bk), deep_copy(l.wv),
                          deep_copy(l.bv), deep_copy(l.wo), deep_copy(l.bo),
                          deep_copy(l.ln2_gain), deep_copy(l.ln2_bias), deep_copy(l.w1),
                          deep_copy(l.b1), deep_copy(l.w2), deep_copy(l.b2)});
  }
  out.final_ln_gain = deep_copy(final_ln_gain);
  out.final_ln_bias = deep_copy(final_ln_bias);
  return out;
}

std::uint64_t EncoderWeights::checksum() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const NamedTensor& p : named_parameters()) {
    for (double v : p.tensor.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
      }
    }
  }
  return hash;
}

void EncoderWeights::validate() const {
  config.validate();
  const std::size_t d = config.d_model, f = config.d_ff;
  auto expect = [](const NamedTensor& p, const Shape& shape) {
    if (!p.tensor.defined() || p.tensor.shape() != shape) {
      fail(ErrorKind::shape, "encoder weight '" + p.name + "' should have shape " + shape_str(shape));
    }
    for (double v : p.tensor.data()) {
      if (!std::isfinite(v)) fail(ErrorKind::numeric, "encoder weight '" + p.name + "' is not finite");
    }
  };
  if (layers.size() != config.n_layers) fail(ErrorKind::shape, "encoder layer count mismatch");
  for (const NamedTensor& p : named_parameters()) {
    const std::string& n = p.name;
    auto ends = [&](std::string_view suffix) {
      return n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (n == "token_embedding") expect(p, {config.vocab_size, d});
    else if (n == "position_embedding") expect(p, {config.max_seq_len, d});
    else if (ends(".w1")) expect(p, {d, f});
    else if (ends(".b1")) expect(p, {f});
    else if (ends(".w2")) expect(p, {f, d});
    else if (ends("wq") || ends("wk") || ends("wv") || ends("wo")) expect(p, {d, d});
    else expect(p, {d});
  }
}

void TokenBatch::validate(const EncoderConfig& config) const {
  if (rows == 0 || seq_len == 0) fail(ErrorKind::empty_input, "token batch is empty");
  if (seq_len > config.max_seq_len) {
    fail(ErrorKind::length, "sequence length " + std::to_string(seq_len) +
                                " exceeds max_seq_len " + std::to_string(config.max_seq_len));
  }
  if (token_ids.size() != rows * seq_len || attention_mask.size() != rows * seq_len) {
    fail(ErrorKind::shape, "token batch buffers do not match rows x seq_len");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (token_ids[r * seq_len] != kClsId || !attention_mask[r * seq_len]) {
      fail(ErrorKind::shape, "token batch row " + std::to_string(r) + " does not start with CLS");
    }
    for (std::size_t l = 0; l < seq_len; ++l) {
      if (token_ids[r * seq_len + l] >= config.vocab_size) {
        fail(ErrorKind::shape, "token id " + std::to_string(token_ids[r * seq_len + l]) +
                                   " >= vocab_size " + std::to_string(config.vocab_size));
      }
    }
  }
}

EncoderWeights init_weights(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  auto engine = RngStream{seed, 0x1417}.engine();
  const std::size_t d = config.d_model, f = config.d_ff;
  EncoderWeights w;
  w.config = config;
  w.token_embedding = normal_param({config.vocab_size, d}, engine);
  w.position_embedding = normal_param({config.max_seq_len, d}, engine);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    LayerWeights l;
    l.ln1_gain = const_param({d}, 1.0);
    l.ln1_bias = const_param({d}, 0.0);
    l.wq = normal_param({d, d}, engine);
    l.bq = const_param({d}, 0.0);
    l.wk = normal_param({d, d}, engine);
    l.bk = const_param({d}, 0.0);
    l.wv = normal_param({d, d}, engine);
    l.bv = const_param({d}, 0.0);
    l.wo = normal_param({d, d}, engine);
    l.bo = const_param({d}, 0.0);
    l.ln2_gain = const_param({d}, 1.0);
    l.ln2_bias = const_param({d}, 0.0);
    l.w1 = normal_param({d, f}, engine);
    l.b1 = const_param({f}, 0.0);
    l.w2 = normal_param({f, d}, engine);
    l.b2 = const_param({d}, 0.0);
    w.layers.push_back(std::move(l));
  }
  w.final_ln_gain = const_param({d}, 1.0);
  w.final_ln_bias = const_param({d}, 0.0);
  return w;
}

Tensor encode(const EncoderWeights& weights, const TokenBatch& batch, double p,
              const RngStream& rng, bool training) {
  const EncoderConfig& cfg = weights.config;
  if (!(p >= 0.0 && p < 1.0)) {
    fail(ErrorKind::invalid_probability, "encode: dropout probability must lie in [0,1)");
  }
  batch.validate(cfg);
  const std::size_t rows = batch.rows, seq = batch.seq_len;
  const std::size_t heads = cfg.n_heads;

  std::vector<std::size_t> positions(rows * seq);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t l = 0; l < seq; ++l) positions[r * seq + l] = l;

  Tensor x = add(gather_rows(weights.token_embedding, batch.token_ids),
                 gather_rows(weights.position_embedding, positions));
  x = site_dropout(x, cfg, DropoutSite::embedding, 0, p, rng, training);

  std::vector<double> key_bias(rows * heads * seq * seq, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t q = 0; q < seq; ++q)
        for (std::size_t k = 0; k < seq; ++k)
          if (!batch.attention_mask[r * seq + k])
            key_bias[((r * heads + h) * seq + q) * seq + k] = kMaskedScore;
  const Tensor attention_bias({rows * heads, seq, seq}, std::move(key_bias));
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));

  for (std::size_t i = 0; i < weights.layers.size(); ++i) {
    const LayerWeights& l = weights.layers[i];
    const std::size_t layer = i + 1;

    Tensor h = layernorm(x, l.ln1_gain, l.ln1_bias);
    Tensor q = split_heads(add_bias(matmul(h, l.wq), l.bq), rows, seq, heads);
    Tensor k = split_heads(add_bias(matmul(h, l.wk), l.bk), rows, seq, heads);
    Tensor v = split_heads(add_bias(matmul(h, l.wv), l.bv), rows, seq, heads);
    Tensor scores = add(scale(bmm(q, k, true), score_scale), attention_bias);
    Tensor attn = softmax(scores, 2);
    attn = site_dropout(attn, cfg, DropoutSite::attention_weights, layer, p, rng, training);
    Tensor context = merge_heads(bmm(attn, v), rows, seq, heads);
    Tensor out = add_bias(matmul(context, l.wo), l.bo);
    out = site_dropout(out, cfg, DropoutSite::attention_output, layer, p, rng, training);
    x = add(x, out);

    Tensor h2 = layernorm(x, l.ln2_gain, l.ln2_bias);
    Tensor ff = gelu(add_bias(matmul(h2, l.w1), l.b1));
    ff = site_dropout(ff, cfg, DropoutSite::ffn_hidden, layer, p, rng, training);
    x = add(x, add_bias(matmul(ff, l.w2), l.b2));
  }

  x = layernorm(x, weights.final_ln_gain, weights.final_ln_bias);
  std::vector<std::size_t> cls_rows(rows);
  for (std::size_t r = 0; r < rows; ++r) cls_rows[r] = r * seq;
  return l2_normalize(gather_rows(x, cls_rows));
}

}  // namespace supcl
