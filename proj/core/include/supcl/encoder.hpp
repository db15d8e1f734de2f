#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "supcl/rng.hpp"
#include "supcl/tensor.hpp"

namespace supcl {

enum class DropoutSite : std::uint8_t {
  embedding,
  attention_weights,
  attention_output,
  ffn_hidden,
};

std::string_view to_string(DropoutSite site);
DropoutSite dropout_site_from_string(std::string_view name);

struct DropoutSites {
  bool embedding = true;
  bool attention_weights = true;
  bool attention_output = true;
  bool ffn_hidden = true;

  bool enabled(DropoutSite site) const;
  std::vector<DropoutSite> list() const;
  static DropoutSites from_list(const std::vector<DropoutSite>& sites);

  friend bool operator==(const DropoutSites&, const DropoutSites&) = default;
};

struct EncoderConfig {
  std::size_t vocab_size = 64;
  std::size_t max_seq_len = 32;
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 64;
  DropoutSites dropout_sites;

  void validate() const;
  std::size_t head_dim() const { return d_model / n_heads; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct LayerWeights {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Parameters of a pre-layernorm transformer encoder. Copies share tensor
// storage; use clone() for an independent set.
struct EncoderWeights {
  EncoderConfig config;
  Tensor token_embedding;     // [vocab_size, d_model]
  Tensor position_embedding;  // [max_seq_len, d_model]
  std::vector<LayerWeights> layers;
  Tensor final_ln_gain, final_ln_bias;

  std::vector<NamedTensor> named_parameters() const;
  EncoderWeights clone() const;
  // FNV-1a over every parameter's bytes, in named_parameters() order.
  std::uint64_t checksum() const;
  void validate() const;
};

// Rows of token ids with a CLS id in column 0. seq_len may be shorter than
// the config's max_seq_len.
struct TokenBatch {
  std::size_t rows = 0;
  std::size_t seq_len = 0;
  std::vector<std::size_t> token_ids;        // rows * seq_len
  std::vector<std::uint8_t> attention_mask;  // rows * seq_len, 1 = real token
  std::vector<std::size_t> labels;           // rows

  void validate(const EncoderConfig& config) const;
};

inline constexpr std::size_t kClsId = 1;

EncoderWeights init_weights(const EncoderConfig& config, std::uint64_t seed);

// Enc(x, p): final-layer first-token hidden states, L2-normalized, [rows, d_model].
// Every enabled dropout site uses probability p with its own derived stream.
Tensor encode(const EncoderWeights& weights, const TokenBatch& batch, double p,
              const RngStream& rng, bool training);

}  // namespace supcl
