#include "ivg/encoder.hpp"

#include <cmath>
#include <string>

namespace ivg {

void EncoderConfig::validate() const {
  if (d_v < 1 || vocab_size < 1 || d_w < 1 || d < 1 || heads < 1 || conv_layers < 0)
    throw ConfigError("encoder sizes must be positive");
  if (d % heads != 0)
    throw ConfigError("model width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("convolution kernel size must be odd");
}

EncoderParams add_encoder_params(ParamStore& store, const EncoderConfig& c) {
  c.validate();
  EncoderParams p;
  p.config = c;
  p.embedding = store.add("encoder.embedding", c.vocab_size, c.d_w, Init::kUniformFanIn, 1);
  p.video_proj = store.add("encoder.video_proj.weight", c.d_v, c.d, Init::kUniformFanIn);
  p.video_proj_bias = store.add("encoder.video_proj.bias", 1, c.d, Init::kUniformFanIn, c.d_v);
  p.text_proj = store.add("encoder.text_proj.weight", c.d_w, c.d, Init::kUniformFanIn);
  p.text_proj_bias = store.add("encoder.text_proj.bias", 1, c.d, Init::kUniformFanIn, c.d_w);
  for (int i = 0; i < c.conv_layers; ++i) {
    const std::string pre = "encoder.conv" + std::to_string(i) + ".";
    p.convs.push_back({store.add(pre + "norm.gain", 1, c.d, Init::kOnes),
                       store.add(pre + "norm.bias", 1, c.d, Init::kZeros),
                       store.add(pre + "depthwise.weight", c.kernel, c.d, Init::kUniformFanIn),
                       store.add(pre + "depthwise.bias", 1, c.d, Init::kUniformFanIn, c.kernel),
                       store.add(pre + "pointwise.weight", c.d, c.d, Init::kUniformFanIn),
                       store.add(pre + "pointwise.bias", 1, c.d, Init::kUniformFanIn, c.d)});
  }
  p.attn_norm_gain = store.add("encoder.attn.norm.gain", 1, c.d, Init::kOnes);
  p.attn_norm_bias = store.add("encoder.attn.norm.bias", 1, c.d, Init::kZeros);
  p.wq = store.add("encoder.attn.query", c.d, c.d, Init::kUniformFanIn);
  p.wk = store.add("encoder.attn.key", c.d, c.d, Init::kUniformFanIn);
  p.wv = store.add("encoder.attn.value", c.d, c.d, Init::kUniformFanIn);
  p.wo = store.add("encoder.attn.output", c.d, c.d, Init::kUniformFanIn);
  p.ffn_norm_gain = store.add("encoder.ffn.norm.gain", 1, c.d, Init::kOnes);
  p.ffn_norm_bias = store.add("encoder.ffn.norm.bias", 1, c.d, Init::kZeros);
  p.ffn = store.add("encoder.ffn.weight", c.d, c.d, Init::kUniformFanIn);
  p.ffn_bias = store.add("encoder.ffn.bias", 1, c.d, Init::kUniformFanIn, c.d);
  return p;
}

EncoderParams init_params(ParamStore& store, const EncoderConfig& config, std::uint64_t seed) {
  auto p = add_encoder_params(store, config);
  store.initialize(seed);
  return p;
}

Matrix sinusoidal_positions(Eigen::Index rows, Eigen::Index d) {
  Matrix pe(rows, d);
  for (Eigen::Index pos = 0; pos < rows; ++pos)
    for (Eigen::Index i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  return pe;
}

Matrix to_matrix(const VideoFeatures& f) {
  Matrix m(f.rows, f.cols);
  for (std::uint32_t r = 0; r < f.rows; ++r)
    for (std::uint32_t c = 0; c < f.cols; ++c) m(r, c) = static_cast<double>(f.at(r, c));
  return m;
}

ad::Var encoder_stack(ad::Tape& tape, const ParamStore& store, const EncoderParams& p, ad::Var x,
                      const ad::RowMask& mask) {
  auto P = [&](int slot) { return tape.param(store.value(slot), slot); };
  const Eigen::Index L = x.rows();
  const Eigen::Index d = x.cols();

  bool padded = false;
  for (bool m : mask) padded = padded || !m;
  ad::Var zero_padding{};
  if (padded) {
    Matrix keep(L, d);
    for (Eigen::Index r = 0; r < L; ++r) keep.row(r).setConstant(mask[static_cast<std::size_t>(r)] ? 1.0 : 0.0);
    zero_padding = tape.constant(std::move(keep));
  }

  for (const auto& conv : p.convs) {
    ad::Var y = ad::layer_norm_rows(x, P(conv.norm_gain), P(conv.norm_bias));
    if (padded) y = ad::hadamard(y, zero_padding);
    y = ad::depthwise_conv1d(y, P(conv.depthwise), P(conv.depthwise_bias));
    y = ad::relu(ad::add_row(ad::matmul(y, P(conv.pointwise)), P(conv.pointwise_bias)));
    x = ad::add(x, y);
  }

  {
    const ad::Var y = ad::layer_norm_rows(x, P(p.attn_norm_gain), P(p.attn_norm_bias));
    const ad::Var q = ad::matmul(y, P(p.wq));
    const ad::Var k = ad::matmul(y, P(p.wk));
    const ad::Var v = ad::matmul(y, P(p.wv));
    const int dh = p.config.head_dim();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ad::Var> heads;
    heads.reserve(static_cast<std::size_t>(p.config.heads));
    for (int h = 0; h < p.config.heads; ++h) {
      const ad::Var qh = ad::slice_cols(q, h * dh, dh);
      const ad::Var kh = ad::slice_cols(k, h * dh, dh);
      const ad::Var vh = ad::slice_cols(v, h * dh, dh);
      const ad::Var att = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt), mask);
      heads.push_back(ad::matmul(att, vh));
    }
    x = ad::add(x, ad::matmul(ad::concat_cols(heads), P(p.wo)));
  }

  {
    ad::Var y = ad::layer_norm_rows(x, P(p.ffn_norm_gain), P(p.ffn_norm_bias));
    y = ad::relu(ad::add_row(ad::matmul(y, P(p.ffn)), P(p.ffn_bias)));
    x = ad::add(x, y);
  }
  return x;
}

EncodedNodes encode(ad::Tape& tape, const ParamStore& store, const EncoderParams& p, const Matrix& video,
                    std::span<const int> tokens, const ad::RowMask& query_mask) {
  const auto& c = p.config;
  if (video.cols() != c.d_v)
    throw ConfigError("video feature dimension " + std::to_string(video.cols()) + " does not match projection input " +
                      std::to_string(c.d_v));
  if (tokens.empty()) throw ConfigError("query has no tokens");
  for (int tok : tokens)
    if (tok < 0 || tok >= c.vocab_size) throw ConfigError("token id " + std::to_string(tok) + " outside embedding table");
  if (!query_mask.empty() && query_mask.size() != tokens.size()) throw ConfigError("query mask length mismatch");

  auto P = [&](int slot) { return tape.param(store.value(slot), slot); };

  ad::Var v = ad::add_row(ad::matmul(tape.constant(video), P(p.video_proj)), P(p.video_proj_bias));
  v = ad::add(v, tape.constant(sinusoidal_positions(v.rows(), c.d)));
  const ad::Var words = ad::gather_rows(P(p.embedding), tokens);
  ad::Var q = ad::add_row(ad::matmul(words, P(p.text_proj)), P(p.text_proj_bias));
  q = ad::add(q, tape.constant(sinusoidal_positions(q.rows(), c.d)));

  EncodedNodes out;
  out.v_prime = encoder_stack(tape, store, p, v);
  out.q_prime = encoder_stack(tape, store, p, q, query_mask);
  out.q_pooled = ad::max_rows(out.q_prime, query_mask);
  return out;
}

ContextualizedFeatures encode(const GroundingExample& example, const ParamStore& store, const EncoderParams& p) {
  if (example.video == nullptr) throw ConfigError("example has no video features");
  ad::Tape tape(false);
  const auto nodes = encode(tape, store, p, to_matrix(*example.video), example.query.tokens);
  return {nodes.v_prime.value(), nodes.q_prime.value(), nodes.q_pooled.value().row(0)};
}

}  // namespace ivg
