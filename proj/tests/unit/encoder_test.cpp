#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "supcl/encoder.hpp"
#include "supcl/error.hpp"
#include "supcl/gradcheck.hpp"
#include "supcl/ops.hpp"

using namespace supcl;
using oracle::Vec;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected supcl::Error";
  return ErrorKind::io;
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.vocab_size = 20;
  c.max_seq_len = 10;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_ff = 16;
  return c;
}

// Random rows of length `len` starting with CLS; row r keeps r % 3 trailing pads.
TokenBatch random_batch(oracle::Gen& gen, std::size_t rows, std::size_t len, std::size_t vocab) {
  TokenBatch b;
  b.rows = rows;
  b.seq_len = len;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t pads = std::min(r % 3, len - 1);
    for (std::size_t l = 0; l < len; ++l) {
      const bool real = l + pads < len;
      b.token_ids.push_back(l == 0 ? kClsId : real ? 2 + gen.index(vocab - 2) : 0);
      b.attention_mask.push_back(real ? 1 : 0);
    }
    b.labels.push_back(r % 2);
  }
  return b;
}

Vec row(const Tensor& t, std::size_t r) {
  const std::size_t d = t.dim(1);
  return Vec(t.data().begin() + static_cast<std::ptrdiff_t>(r * d),
             t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
}

double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(EncoderConfig, HeadsMustDivideModelWidth) {
  EncoderConfig c = small_config();
  c.n_heads = 3;
  EXPECT_EQ(kind_of([&] { init_weights(c, 0); }), ErrorKind::config);
}

TEST(EncoderConfig, UnknownDropoutSiteIsConfigError) {
  EXPECT_EQ(kind_of([] { dropout_site_from_string("residual"); }), ErrorKind::config);
  EXPECT_EQ(dropout_site_from_string("ffn_hidden"), DropoutSite::ffn_hidden);
}

TEST(EncoderInit, SameSeedGivesIdenticalWeights) {
  const auto a = init_weights(small_config(), 11);
  const auto b = init_weights(small_config(), 11);
  const auto c = init_weights(small_config(), 12);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_NE(a.checksum(), c.checksum());
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(oracle::to_vec(pa[i].tensor.data()), oracle::to_vec(pb[i].tensor.data())) << pa[i].name;
  }
}

TEST(EncoderInit, MatricesHaveStd002AndLayernormIsIdentity) {
  EncoderConfig c = small_config();
  c.vocab_size = 1000;
  c.d_model = 16;
  c.d_ff = 64;
  const auto w = init_weights(c, 3);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const NamedTensor& p : w.named_parameters()) {
    const Vec v = oracle::to_vec(p.tensor.data());
    if (p.name.find("gain") != std::string::npos) {
      for (double x : v) EXPECT_EQ(x, 1.0) << p.name;
    } else if (p.tensor.rank() == 1) {
      for (double x : v) EXPECT_EQ(x, 0.0) << p.name;
    } else {
      for (double x : v) {
        sum += x;
        sq += x * x;
      }
      n += v.size();
    }
  }
  ASSERT_GE(n, 10000u);
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
  EXPECT_NEAR(sd, 0.02, 0.005);

  // The token table alone already has 16000 entries.
  const Vec table = oracle::to_vec(w.token_embedding.data());
  double tsq = 0.0;
  for (double x : table) tsq += x * x;
  EXPECT_NEAR(std::sqrt(tsq / static_cast<double>(table.size())), 0.02, 0.005);
}

TEST(Encode, RowsAreUnitNorm) {
  oracle::Gen gen(1);
  const auto w = init_weights(small_config(), 1);
  for (double p : {0.0, 0.1, 0.5}) {
    const Tensor e = encode(w, random_batch(gen, 6, 7, 20), p, RngStream{2, 0}, true);
    ASSERT_EQ(e.shape(), (Shape{6, 8}));
    for (std::size_t r = 0; r < 6; ++r) EXPECT_NEAR(oracle::norm(row(e, r)), 1.0, 1e-9);
  }
}

TEST(Encode, SameStreamIsDeterministicAndStreamsDiffer) {
  oracle::Gen gen(2);
  const auto w = init_weights(small_config(), 1);
  const TokenBatch b = random_batch(gen, 4, 6, 20);
  const Vec a = oracle::to_vec(encode(w, b, 0.3, RngStream{5, 1}, true).data());
  const Vec a2 = oracle::to_vec(encode(w, b, 0.3, RngStream{5, 1}, true).data());
  const Vec c = oracle::to_vec(encode(w, b, 0.3, RngStream{5, 2}, true).data());
  EXPECT_EQ(a, a2);
  EXPECT_GT(max_abs_diff(a, c), 1e-6);
}

TEST(Encode, ZeroProbabilityAndEvalModeIgnoreTheStream) {
  oracle::Gen gen(3);
  const auto w = init_weights(small_config(), 4);
  const TokenBatch b = random_batch(gen, 5, 8, 20);
  const Vec ref = oracle::to_vec(encode(w, b, 0.0, RngStream{0, 0}, false).data());
  EXPECT_EQ(oracle::to_vec(encode(w, b, 0.0, RngStream{9, 9}, true).data()), ref);
  for (double p : {0.1, 0.5, 0.9}) {
    EXPECT_EQ(oracle::to_vec(encode(w, b, p, RngStream{1, 7}, false).data()), ref) << p;
  }
}

TEST(Encode, DisabledSitesMeanNoDropout) {
  EncoderConfig c = small_config();
  c.dropout_sites = DropoutSites::from_list({});
  oracle::Gen gen(4);
  const auto w = init_weights(c, 4);
  const TokenBatch b = random_batch(gen, 3, 6, 20);
  EXPECT_EQ(oracle::to_vec(encode(w, b, 0.5, RngStream{1, 1}, true).data()),
            oracle::to_vec(encode(w, b, 0.0, RngStream{1, 1}, true).data()));
}

TEST(Encode, EachSiteOnItsOwnChangesTheOutput) {
  oracle::Gen gen(5);
  const TokenBatch b = random_batch(gen, 3, 6, 20);
  for (DropoutSite site : {DropoutSite::embedding, DropoutSite::attention_weights, DropoutSite::attention_output,
                           DropoutSite::ffn_hidden}) {
    EncoderConfig c = small_config();
    c.dropout_sites = DropoutSites::from_list({site});
    const auto w = init_weights(c, 4);
    const Vec on = oracle::to_vec(encode(w, b, 0.3, RngStream{1, 1}, true).data());
    const Vec off = oracle::to_vec(encode(w, b, 0.0, RngStream{1, 1}, true).data());
    EXPECT_GT(max_abs_diff(on, off), 1e-9) << to_string(site);
  }
}

TEST(Encode, TrailingPaddingDoesNotChangeEmbeddings) {
  oracle::Gen gen(6);
  const auto w = init_weights(small_config(), 8);
  for (int trial = 0; trial < 10; ++trial) {
    TokenBatch b = random_batch(gen, 4, 5, 20);
    TokenBatch padded;
    padded.rows = b.rows;
    padded.seq_len = b.seq_len + 3;
    padded.labels = b.labels;
    for (std::size_t r = 0; r < b.rows; ++r) {
      for (std::size_t l = 0; l < padded.seq_len; ++l) {
        const bool old = l < b.seq_len;
        padded.token_ids.push_back(old ? b.token_ids[r * b.seq_len + l] : 0);
        padded.attention_mask.push_back(old ? b.attention_mask[r * b.seq_len + l] : 0);
      }
    }
    const Vec x = oracle::to_vec(encode(w, b, 0.0, RngStream{}, false).data());
    const Vec y = oracle::to_vec(encode(w, padded, 0.0, RngStream{}, false).data());
    EXPECT_LT(max_abs_diff(x, y), 1e-9);
  }
}

TEST(Encode, PaddedTokenIdsAreIgnored) {
  oracle::Gen gen(7);
  const auto w = init_weights(small_config(), 8);
  TokenBatch b = random_batch(gen, 3, 6, 20);
  const Vec x = oracle::to_vec(encode(w, b, 0.0, RngStream{}, false).data());
  for (std::size_t i = 0; i < b.token_ids.size(); ++i) {
    if (b.attention_mask[i] == 0) b.token_ids[i] = 5;
  }
  const Vec y = oracle::to_vec(encode(w, b, 0.0, RngStream{}, false).data());
  EXPECT_LT(max_abs_diff(x, y), 1e-9);
}

TEST(Encode, RowPermutationPermutesOutputs) {
  oracle::Gen gen(8);
  const auto w = init_weights(small_config(), 9);
  const TokenBatch b = random_batch(gen, 5, 6, 20);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  TokenBatch pb = b;
  for (std::size_t r = 0; r < b.rows; ++r) {
    for (std::size_t l = 0; l < b.seq_len; ++l) {
      pb.token_ids[r * b.seq_len + l] = b.token_ids[perm[r] * b.seq_len + l];
      pb.attention_mask[r * b.seq_len + l] = b.attention_mask[perm[r] * b.seq_len + l];
    }
    pb.labels[r] = b.labels[perm[r]];
  }
  const Tensor x = encode(w, b, 0.0, RngStream{}, false);
  const Tensor y = encode(w, pb, 0.0, RngStream{}, false);
  for (std::size_t r = 0; r < b.rows; ++r) EXPECT_LT(max_abs_diff(row(y, r), row(x, perm[r])), 1e-12);
}

TEST(Encode, RejectsBadBatches) {
  const auto w = init_weights(small_config(), 0);
  oracle::Gen gen(9);
  EXPECT_EQ(kind_of([&] { encode(w, random_batch(gen, 2, 11, 20), 0.0, RngStream{}, false); }), ErrorKind::length);
  TokenBatch no_cls = random_batch(gen, 2, 4, 20);
  no_cls.token_ids[0] = 5;
  EXPECT_EQ(kind_of([&] { encode(w, no_cls, 0.0, RngStream{}, false); }), ErrorKind::shape);
  TokenBatch big_id = random_batch(gen, 2, 4, 20);
  big_id.token_ids[1] = 20;
  EXPECT_EQ(kind_of([&] { encode(w, big_id, 0.0, RngStream{}, false); }), ErrorKind::shape);
  TokenBatch empty;
  EXPECT_EQ(kind_of([&] { encode(w, empty, 0.0, RngStream{}, false); }), ErrorKind::empty_input);
  const TokenBatch ok = random_batch(gen, 2, 4, 20);
  EXPECT_EQ(kind_of([&] { encode(w, ok, 1.0, RngStream{}, true); }), ErrorKind::invalid_probability);
  EXPECT_EQ(kind_of([&] { encode(w, ok, -0.1, RngStream{}, true); }), ErrorKind::invalid_probability);
}

TEST(Encode, WeightsCloneIsIndependent) {
  const auto w = init_weights(small_config(), 0);
  const std::uint64_t before = w.checksum();
  EncoderWeights c = w.clone();
  c.token_embedding.mutable_data()[0] += 1.0;
  EXPECT_EQ(w.checksum(), before);
  EXPECT_NE(c.checksum(), before);
}

// Finite differences through the full encoder with dropout active; the
// fixed stream makes the masks part of the function.
TEST(Encode, GradientsMatchFiniteDifferences) {
  EncoderConfig c = small_config();
  c.vocab_size = 12;
  c.max_seq_len = 6;
  c.n_layers = 1;
  EncoderWeights w = init_weights(c, 21);
  oracle::Gen gen(10);
  for (NamedTensor& p : w.named_parameters()) {
    for (double& v : p.tensor.mutable_data()) v += 0.3 * gen.normal();
  }
  const TokenBatch b = random_batch(gen, 3, 5, 12);
  const Vec proj = gen.normals(3 * c.d_model);
  for (const NamedTensor& p : w.named_parameters()) {
    const auto r = check_gradients(
        p.name, [&] { return weighted_sum(encode(w, b, 0.2, RngStream{3, 3}, true), proj); }, {p.tensor});
    EXPECT_LE(r.max_relative_error, 1e-4) << p.name;
  }
}
