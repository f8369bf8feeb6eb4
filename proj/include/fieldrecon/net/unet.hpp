#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fieldrecon/fields.hpp"
#include "fieldrecon/net/optim.hpp"
#include "fieldrecon/net/tensor.hpp"

namespace fieldrecon::net {

enum class CondMode { none, cfg, cross };

inline std::string cond_mode_name(CondMode m) {
  switch (m) {
    case CondMode::none: return "unconditional";
    case CondMode::cfg: return "cfg";
    case CondMode::cross: return "cross-attention";
  }
  fail("cond_mode_name: bad enum");
}

inline CondMode parse_cond_mode(const std::string& s) {
  if (s == "unconditional") return CondMode::none;
  if (s == "cfg") return CondMode::cfg;
  if (s == "cross-attention") return CondMode::cross;
  fail("unknown conditioning mode '" + s + "'");
}

/// Architecture knobs shared by the denoiser, the condition encoder, and the
/// deterministic baseline.
struct NetConfig {
  int grid = 32;
  int field_channels = 2;
  std::vector<int> plan;  // channels per down level; empty -> desk default
  int emb_dim = 64;       // noise embedding width
  CondMode mode = CondMode::none;
  int patch = 4;        // encoder patch size
  int token_dim = 128;  // encoder token width
  int enc_attn_layers = 2;

  int n_blocks() const {
    require(grid >= 16 && (grid & (grid - 1)) == 0, "NetConfig: grid must be a power of two >= 16");
    int n = 0, g = grid;
    while (g > 8) {
      g /= 2;
      ++n;
    }
    require(g == 8, "NetConfig: grid must reduce to an 8x8 bottleneck");
    return n;
  }

  /// Desk-scale default: first level 32 channels, deeper levels 64. The
  /// reference-scale 128/256 plan is expressed through an explicit plan.
  std::vector<int> channel_plan() const {
    if (!plan.empty()) {
      require(int(plan.size()) == n_blocks(), "NetConfig: plan length must equal n_blocks");
      return plan;
    }
    std::vector<int> p(size_t(n_blocks()), 64);
    p[0] = 32;
    return p;
  }

  void validate() const {
    (void)channel_plan();
    require(field_channels >= 1, "NetConfig: field_channels must be >= 1");
    require(emb_dim >= 2 && emb_dim % 2 == 0, "NetConfig: emb_dim must be even");
    if (mode != CondMode::none) {
      require(patch >= 1 && grid % patch == 0, "NetConfig: patch must divide grid");
      require(token_dim >= 1, "NetConfig: token_dim must be >= 1");
      require(enc_attn_layers >= 0, "NetConfig: enc_attn_layers must be >= 0");
    }
  }
};

// ---------------------------------------------------------------------------
// Layer modules: thin structs that register parameters on construction and
// build graph nodes on call.

template <typename S>
struct Conv2dLayer {
  TensorPtr<S> w, b;
  int stride = 1;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<S>& ps, Rng& rng, const std::string& name, int in, int out, int k,
              int stride_ = 1, bool zero_init = false)
      : stride(stride_) {
    const Eigen::Index n = Eigen::Index(out) * in * k * k;
    w = ps.add(name + ".w", {out, in, k, k},
               zero_init ? init_zeros<S>(n) : init_kaiming<S>(rng, n, Eigen::Index(in) * k * k));
    b = ps.add(name + ".b", {out}, init_zeros<S>(out));
  }

  TensorPtr<S> operator()(const TensorPtr<S>& x) const { return conv2d(x, w, b, stride); }
};

template <typename S>
struct LinearLayer {
  TensorPtr<S> w, b;

  LinearLayer() = default;
  LinearLayer(ParamStore<S>& ps, Rng& rng, const std::string& name, int in, int out,
              bool zero_init = false) {
    const Eigen::Index n = Eigen::Index(out) * in;
    w = ps.add(name + ".w", {out, in},
               zero_init ? init_zeros<S>(n) : init_kaiming<S>(rng, n, in));
    b = ps.add(name + ".b", {out}, init_zeros<S>(out));
  }

  TensorPtr<S> operator()(const TensorPtr<S>& x) const { return linear(x, w, b); }
};

template <typename S>
struct GroupNormLayer {
  TensorPtr<S> gamma, beta;
  int groups = 1;

  GroupNormLayer() = default;
  GroupNormLayer(ParamStore<S>& ps, const std::string& name, int channels) {
    groups = std::min(8, channels);
    while (channels % groups != 0) --groups;
    gamma = ps.add(name + ".gamma", {channels}, init_ones<S>(channels));
    beta = ps.add(name + ".beta", {channels}, init_zeros<S>(channels));
  }

  TensorPtr<S> operator()(const TensorPtr<S>& x) const { return group_norm(x, gamma, beta, groups); }
};

template <typename S>
struct LayerNormLayer {
  TensorPtr<S> gamma, beta;

  LayerNormLayer() = default;
  LayerNormLayer(ParamStore<S>& ps, const std::string& name, int dim) {
    gamma = ps.add(name + ".gamma", {dim}, init_ones<S>(dim));
    beta = ps.add(name + ".beta", {dim}, init_zeros<S>(dim));
  }

  TensorPtr<S> operator()(const TensorPtr<S>& x) const { return layer_norm(x, gamma, beta); }
};

/// GN -> SiLU -> conv -> FiLM(embedding) -> GN -> SiLU -> conv, plus a skip
/// (1x1 conv when the channel count changes). The embedding projection is
/// zero-initialized so modulation starts as the identity.
template <typename S>
struct ResBlock {
  GroupNormLayer<S> gn1, gn2;
  Conv2dLayer<S> conv1, conv2;
  LinearLayer<S> emb_proj;
  Conv2dLayer<S> skip_conv;
  bool has_emb = false, has_skip = false;
  int out_ch = 0;

  ResBlock() = default;
  ResBlock(ParamStore<S>& ps, Rng& rng, const std::string& name, int in, int out, int emb_dim)
      : out_ch(out) {
    gn1 = GroupNormLayer<S>(ps, name + ".gn1", in);
    conv1 = Conv2dLayer<S>(ps, rng, name + ".conv1", in, out, 3);
    if (emb_dim > 0) {
      has_emb = true;
      emb_proj = LinearLayer<S>(ps, rng, name + ".emb", emb_dim, 2 * out, /*zero_init=*/true);
    }
    gn2 = GroupNormLayer<S>(ps, name + ".gn2", out);
    conv2 = Conv2dLayer<S>(ps, rng, name + ".conv2", out, out, 3);
    if (in != out) {
      has_skip = true;
      skip_conv = Conv2dLayer<S>(ps, rng, name + ".skip", in, out, 1);
    }
  }

  TensorPtr<S> operator()(const TensorPtr<S>& x, const TensorPtr<S>& emb) const {
    auto h = conv1(silu(gn1(x)));
    if (has_emb) {
      require(emb != nullptr, "ResBlock: embedding expected but missing");
      auto ss = reshape(emb_proj(emb), {2 * out_ch});
      auto sc = add_scalar(slice(ss, 0, out_ch), S(1));
      auto sh = slice(ss, out_ch, out_ch);
      h = film(h, sc, sh);
    }
    h = conv2(silu(gn2(h)));
    return add(h, has_skip ? skip_conv(x) : x);
  }
};

/// Pre-norm residual self-attention over the cells of a feature map.
template <typename S>
struct ImageSelfAttention {
  LayerNormLayer<S> ln;
  LinearLayer<S> q, k, v, o;

  ImageSelfAttention() = default;
  ImageSelfAttention(ParamStore<S>& ps, Rng& rng, const std::string& name, int channels) {
    ln = LayerNormLayer<S>(ps, name + ".ln", channels);
    q = LinearLayer<S>(ps, rng, name + ".q", channels, channels);
    k = LinearLayer<S>(ps, rng, name + ".k", channels, channels);
    v = LinearLayer<S>(ps, rng, name + ".v", channels, channels);
    o = LinearLayer<S>(ps, rng, name + ".o", channels, channels, /*zero_init=*/true);
  }

  TensorPtr<S> operator()(const TensorPtr<S>& x) const {
    auto t = image_to_tokens(x);
    auto tn = ln(t);
    auto a = attention(q(tn), k(tn), v(tn));
    return add(x, tokens_to_image(o(a), x->shape[1], x->shape[2]));
  }
};

/// Pre-norm residual cross-attention: feature-map cells query the condition
/// tokens.
template <typename S>
struct CrossAttentionLayer {
  LayerNormLayer<S> ln_img, ln_cond;
  LinearLayer<S> q, k, v, o;

  CrossAttentionLayer() = default;
  CrossAttentionLayer(ParamStore<S>& ps, Rng& rng, const std::string& name, int channels,
                      int token_dim) {
    ln_img = LayerNormLayer<S>(ps, name + ".ln_img", channels);
    ln_cond = LayerNormLayer<S>(ps, name + ".ln_cond", token_dim);
    q = LinearLayer<S>(ps, rng, name + ".q", channels, channels);
    k = LinearLayer<S>(ps, rng, name + ".k", token_dim, channels);
    v = LinearLayer<S>(ps, rng, name + ".v", token_dim, channels);
    o = LinearLayer<S>(ps, rng, name + ".o", channels, channels, /*zero_init=*/true);
  }

  TensorPtr<S> operator()(const TensorPtr<S>& x, const TensorPtr<S>& cond_tokens) const {
    require(cond_tokens != nullptr, "CrossAttentionLayer: condition tokens missing");
    auto tn = ln_img(image_to_tokens(x));
    auto cn = ln_cond(cond_tokens);
    auto a = attention(q(tn), k(cn), v(cn));
    return add(x, tokens_to_image(o(a), x->shape[1], x->shape[2]));
  }
};

/// Pre-norm residual token self-attention (condition encoder stack).
template <typename S>
struct TokenSelfAttention {
  LayerNormLayer<S> ln;
  LinearLayer<S> q, k, v, o;

  TokenSelfAttention() = default;
  TokenSelfAttention(ParamStore<S>& ps, Rng& rng, const std::string& name, int dim) {
    ln = LayerNormLayer<S>(ps, name + ".ln", dim);
    q = LinearLayer<S>(ps, rng, name + ".q", dim, dim);
    k = LinearLayer<S>(ps, rng, name + ".k", dim, dim);
    v = LinearLayer<S>(ps, rng, name + ".v", dim, dim);
    o = LinearLayer<S>(ps, rng, name + ".o", dim, dim, /*zero_init=*/true);
  }

  TensorPtr<S> operator()(const TensorPtr<S>& t) const {
    auto tn = ln(t);
    return add(t, o(attention(q(tn), k(tn), v(tn))));
  }
};

/// Pre-norm residual 2-layer MLP with SiLU, hidden width 2x.
template <typename S>
struct TokenMlp {
  LayerNormLayer<S> ln;
  LinearLayer<S> fc1, fc2;

  TokenMlp() = default;
  TokenMlp(ParamStore<S>& ps, Rng& rng, const std::string& name, int dim) {
    ln = LayerNormLayer<S>(ps, name + ".ln", dim);
    fc1 = LinearLayer<S>(ps, rng, name + ".fc1", dim, 2 * dim);
    fc2 = LinearLayer<S>(ps, rng, name + ".fc2", 2 * dim, dim, /*zero_init=*/true);
  }

  TensorPtr<S> operator()(const TensorPtr<S>& t) const { return add(t, fc2(silu(fc1(ln(t))))); }
};

/// Sinusoidal features of a scalar noise level followed by a 2-layer MLP.
template <typename S>
struct NoiseEmbed {
  int dim = 0;
  LinearLayer<S> fc1, fc2;

  NoiseEmbed() = default;
  NoiseEmbed(ParamStore<S>& ps, Rng& rng, const std::string& name, int dim_) : dim(dim_) {
    fc1 = LinearLayer<S>(ps, rng, name + ".fc1", dim, dim);
    fc2 = LinearLayer<S>(ps, rng, name + ".fc2", dim, dim);
  }

  TensorPtr<S> operator()(S c_noise) const {
    const int half = dim / 2;
    ArrayX<S> feats(dim);
    for (int i = 0; i < half; ++i) {
      const S freq = S(std::exp(-std::log(1e4) * double(i) / double(half)));
      feats[2 * i] = std::sin(c_noise * freq);
      feats[2 * i + 1] = std::cos(c_noise * freq);
    }
    return fc2(silu(fc1(make_leaf<S>({1, dim}, std::move(feats)))));
  }
};

// ---------------------------------------------------------------------------
// U-Net skeleton shared by the denoiser and the deterministic baseline.

template <typename S>
class UnetCore {
 public:
  UnetCore() = default;

  /// emb_dim 0 disables FiLM-from-embedding; cross enables one cross-attention
  /// layer after each residual stage plus one in the middle.
  UnetCore(ParamStore<S>& ps, Rng& rng, const std::string& prefix, int in_ch, int out_ch, int grid,
           const std::vector<int>& plan, int emb_dim, bool cross, int token_dim)
      : grid_(grid), plan_(plan), cross_(cross) {
    const int blocks = int(plan.size());
    require(blocks >= 1, "UnetCore: empty channel plan");
    require((grid >> blocks) == 8, "UnetCore: plan length does not reduce the grid to 8x8");

    stem_ = Conv2dLayer<S>(ps, rng, prefix + ".stem", in_ch, plan[0], 3);
    for (int i = 0; i < blocks; ++i) {
      const int cin = i == 0 ? plan[0] : plan[size_t(i) - 1];
      const std::string base = prefix + ".down" + std::to_string(i);
      res_down_.emplace_back(ps, rng, base + ".res", cin, plan[size_t(i)], emb_dim);
      if (cross) cross_down_.emplace_back(ps, rng, base + ".cross", plan[size_t(i)], token_dim);
      down_conv_.emplace_back(ps, rng, base + ".ds", plan[size_t(i)], plan[size_t(i)], 3, 2);
    }
    const int cm = plan.back();
    mid1_ = ResBlock<S>(ps, rng, prefix + ".mid.res1", cm, cm, emb_dim);
    mid_attn_ = ImageSelfAttention<S>(ps, rng, prefix + ".mid.attn", cm);
    if (cross) mid_cross_ = CrossAttentionLayer<S>(ps, rng, prefix + ".mid.cross", cm, token_dim);
    mid2_ = ResBlock<S>(ps, rng, prefix + ".mid.res2", cm, cm, emb_dim);
    for (int i = blocks - 1; i >= 0; --i) {
      const int cin = i == blocks - 1 ? plan.back() : plan[size_t(i) + 1];
      const std::string base = prefix + ".up" + std::to_string(i);
      up_conv_.emplace_back(ps, rng, base + ".us", cin, plan[size_t(i)], 3);
      res_up_.emplace_back(ps, rng, base + ".res", 2 * plan[size_t(i)], plan[size_t(i)], emb_dim);
      if (cross) cross_up_.emplace_back(ps, rng, base + ".cross", plan[size_t(i)], token_dim);
    }
    head_gn_ = GroupNormLayer<S>(ps, prefix + ".head.gn", plan[0]);
    head_ = Conv2dLayer<S>(ps, rng, prefix + ".head.conv", plan[0], out_ch, 3, 1,
                           /*zero_init=*/true);
  }

  /// emb may be null when built with emb_dim 0; cond_tokens may be null when
  /// built without cross-attention.
  TensorPtr<S> forward(const TensorPtr<S>& x, const TensorPtr<S>& emb,
                       const TensorPtr<S>& cond_tokens) const {
    require(x->shape.size() == 3 && x->shape[1] == grid_ && x->shape[2] == grid_,
            "UnetCore: input spatial shape mismatch");
    const int blocks = int(plan_.size());
    auto h = stem_(x);
    std::vector<TensorPtr<S>> skips;
    for (int i = 0; i < blocks; ++i) {
      h = res_down_[size_t(i)](h, emb);
      if (cross_) h = cross_down_[size_t(i)](h, cond_tokens);
      skips.push_back(h);
      h = down_conv_[size_t(i)](h);
    }
    h = mid1_(h, emb);
    h = mid_attn_(h);
    if (cross_) h = mid_cross_(h, cond_tokens);
    h = mid2_(h, emb);
    for (int j = 0; j < blocks; ++j) {
      const int i = blocks - 1 - j;
      h = up_conv_[size_t(j)](upsample_nearest2(h));
      h = concat_channels(h, skips[size_t(i)]);
      h = res_up_[size_t(j)](h, emb);
      if (cross_) h = cross_up_[size_t(j)](h, cond_tokens);
    }
    return head_(silu(head_gn_(h)));
  }

  int middle_resolution() const { return grid_ >> int(plan_.size()); }

 private:
  int grid_ = 0;
  std::vector<int> plan_;
  bool cross_ = false;
  Conv2dLayer<S> stem_;
  std::vector<ResBlock<S>> res_down_;
  std::vector<CrossAttentionLayer<S>> cross_down_;
  std::vector<Conv2dLayer<S>> down_conv_;
  ResBlock<S> mid1_, mid2_;
  ImageSelfAttention<S> mid_attn_;
  CrossAttentionLayer<S> mid_cross_;
  std::vector<Conv2dLayer<S>> up_conv_;
  std::vector<ResBlock<S>> res_up_;
  std::vector<CrossAttentionLayer<S>> cross_up_;
  Conv2dLayer<S> head_;
  GroupNormLayer<S> head_gn_;
};

// ---------------------------------------------------------------------------

/// Tokenizes the tessellated fields and the sensor layout, FiLM-merging the
/// two token streams (tessellation modulated by the layout), then runs an MLP
/// and a self-attention stack. Outputs the token sequence (cross-attention
/// conditioning) and its mean-pooled vector (CFG conditioning). The null
/// condition bypasses the stack and returns learned null tokens.
template <typename S>
class ConditionEncoder {
 public:
  struct Output {
    TensorPtr<S> tokens;  // {T, token_dim}
    TensorPtr<S> pooled;  // {1, token_dim}
  };

  ConditionEncoder() = default;
  ConditionEncoder(ParamStore<S>& ps, Rng& rng, const std::string& prefix, const NetConfig& cfg)
      : patch_(cfg.patch), dim_(cfg.token_dim), grid_(cfg.grid) {
    const int tokens = (cfg.grid / cfg.patch) * (cfg.grid / cfg.patch);
    patch_vor_ = LinearLayer<S>(ps, rng, prefix + ".patch_vor",
                                cfg.field_channels * cfg.patch * cfg.patch, dim_);
    patch_ind_ = LinearLayer<S>(ps, rng, prefix + ".patch_ind", cfg.patch * cfg.patch, dim_);
    film_scale_ = LinearLayer<S>(ps, rng, prefix + ".film_scale", dim_, dim_, /*zero_init=*/true);
    film_shift_ = LinearLayer<S>(ps, rng, prefix + ".film_shift", dim_, dim_, /*zero_init=*/true);
    pos_emb_ = ps.add(prefix + ".pos_emb", {tokens, dim_},
                      init_normal<S>(rng, Eigen::Index(tokens) * dim_, S(0.02)));
    null_tokens_ = ps.add(prefix + ".null_tokens", {tokens, dim_},
                          init_normal<S>(rng, Eigen::Index(tokens) * dim_, S(0.02)));
    mlp_in_ = TokenMlp<S>(ps, rng, prefix + ".mlp_in", dim_);
    for (int l = 0; l < cfg.enc_attn_layers; ++l) {
      attn_.emplace_back(ps, rng, prefix + ".attn" + std::to_string(l), dim_);
      mlp_.emplace_back(ps, rng, prefix + ".mlp" + std::to_string(l), dim_);
    }
  }

  int token_count() const { return (grid_ / patch_) * (grid_ / patch_); }

  Output forward(const FieldTensor<S>& voronoi_fields, const FieldTensor<S>& indicator) const {
    require(voronoi_fields.height == grid_ && voronoi_fields.width == grid_ &&
                indicator.height == grid_ && indicator.width == grid_,
            "ConditionEncoder: input grid mismatch");
    require(indicator.channels == 1, "ConditionEncoder: indicator must be one channel");
    auto xv = make_leaf<S>({voronoi_fields.channels, grid_, grid_}, voronoi_fields.values);
    auto xi = make_leaf<S>({1, grid_, grid_}, indicator.values);
    auto ta = patch_vor_(patchify(xv, patch_));
    auto tb = patch_ind_(patchify(xi, patch_));
    auto t = add(mul(ta, add_scalar(film_scale_(tb), S(1))), film_shift_(tb));
    t = add(t, pos_emb_);
    t = mlp_in_(t);
    for (size_t l = 0; l < attn_.size(); ++l) t = mlp_[l](attn_[l](t));
    return {t, reshape(mean_rows(t), {1, dim_})};
  }

  /// Learned unconditional embedding; ignores any sensor data by design.
  Output forward_null() const {
    return {null_tokens_, reshape(mean_rows(null_tokens_), {1, dim_})};
  }

 private:
  int patch_ = 4, dim_ = 0, grid_ = 0;
  LinearLayer<S> patch_vor_, patch_ind_, film_scale_, film_shift_;
  TensorPtr<S> pos_emb_, null_tokens_;
  TokenMlp<S> mlp_in_;
  std::vector<TokenSelfAttention<S>> attn_;
  std::vector<TokenMlp<S>> mlp_;
};

/// Noise-conditional U-Net F_theta. The caller supplies the preconditioned
/// input and c_noise; conditioning enters either as encoder tokens
/// (cross-attention) or as a pooled vector FiLM-merged into the noise
/// embedding (CFG).
template <typename S>
class DenoiserNet {
 public:
  DenoiserNet() = default;
  DenoiserNet(ParamStore<S>& ps, Rng& rng, const NetConfig& cfg) : config_(cfg) {
    cfg.validate();
    embed_ = NoiseEmbed<S>(ps, rng, "unet.embed", cfg.emb_dim);
    if (cfg.mode == CondMode::cfg)
      cfg_proj_ = LinearLayer<S>(ps, rng, "unet.cfg_proj", cfg.token_dim, 2 * cfg.emb_dim,
                                 /*zero_init=*/true);
    core_ = UnetCore<S>(ps, rng, "unet", cfg.field_channels, cfg.field_channels, cfg.grid,
                        cfg.channel_plan(), cfg.emb_dim, cfg.mode == CondMode::cross,
                        cfg.token_dim);
  }

  const NetConfig& config() const { return config_; }

  /// condition: tokens {T,token_dim} for cross mode, pooled {1,token_dim} for
  /// CFG mode, null for unconditional nets.
  TensorPtr<S> forward(const TensorPtr<S>& x_in, S c_noise, const TensorPtr<S>& condition) const {
    auto emb = embed_(c_noise);
    TensorPtr<S> tokens;
    switch (config_.mode) {
      case CondMode::none:
        require(condition == nullptr, "DenoiserNet: unconditional net given a condition");
        break;
      case CondMode::cfg: {
        require(condition != nullptr && condition->shape == std::vector<int>{1, config_.token_dim},
                "DenoiserNet: CFG mode expects a pooled {1, token_dim} condition");
        auto ss = reshape(cfg_proj_(condition), {2 * config_.emb_dim});
        auto sc = reshape(add_scalar(slice(ss, 0, config_.emb_dim), S(1)), {1, config_.emb_dim});
        auto sh = reshape(slice(ss, config_.emb_dim, config_.emb_dim), {1, config_.emb_dim});
        emb = add(mul(emb, sc), sh);
        break;
      }
      case CondMode::cross:
        require(condition != nullptr && condition->shape.size() == 2 &&
                    condition->shape[1] == config_.token_dim,
                "DenoiserNet: cross mode expects {T, token_dim} condition tokens");
        tokens = condition;
        break;
    }
    return core_.forward(x_in, emb, tokens);
  }

  int middle_resolution() const { return core_.middle_resolution(); }

 private:
  NetConfig config_;
  NoiseEmbed<S> embed_;
  LinearLayer<S> cfg_proj_;
  UnetCore<S> core_;
};

/// Deterministic baseline: the same U-Net skeleton fed the tessellated fields
/// plus the sensor indicator, no noise embedding, trained with plain MSE.
template <typename S>
class VtUnet {
 public:
  VtUnet() = default;
  VtUnet(ParamStore<S>& ps, Rng& rng, const NetConfig& cfg) : config_(cfg) {
    cfg.validate();
    core_ = UnetCore<S>(ps, rng, "vtunet", cfg.field_channels + 1, cfg.field_channels, cfg.grid,
                        cfg.channel_plan(), /*emb_dim=*/0, /*cross=*/false, 0);
  }

  const NetConfig& config() const { return config_; }

  TensorPtr<S> forward(const FieldTensor<S>& voronoi_fields,
                       const FieldTensor<S>& indicator) const {
    require(voronoi_fields.channels == config_.field_channels,
            "VtUnet: field channel mismatch");
    require(indicator.channels == 1 && indicator.height == voronoi_fields.height &&
                indicator.width == voronoi_fields.width,
            "VtUnet: indicator shape mismatch");
    ArrayX<S> joined(voronoi_fields.size() + indicator.size());
    joined.head(voronoi_fields.size()) = voronoi_fields.values;
    joined.tail(indicator.size()) = indicator.values;
    auto x = make_leaf<S>({config_.field_channels + 1, config_.grid, config_.grid},
                          std::move(joined));
    return core_.forward(x, nullptr, nullptr);
  }

 private:
  NetConfig config_;
  UnetCore<S> core_;
};

}  // namespace fieldrecon::net
