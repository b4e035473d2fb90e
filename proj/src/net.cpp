#include "sprint/net.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

#include "sprint/kernels.hpp"

namespace sprint {

namespace {

constexpr double kNormEps = 1e-6;

template <typename T>
void ensure(Tensor<T>& t, std::vector<int64_t> shape) {
  if (t.shape != shape) t = Tensor<T>(std::move(shape));
}

// Sinusoidal features of t: 128 frequencies, cosines then sines.
template <typename T>
void time_features(int64_t batch, const double* t, T* out) {
  int half = kTimeFeatureDim / 2;
  for (int64_t b = 0; b < batch; ++b) {
    for (int i = 0; i < half; ++i) {
      double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
      double a = t[b] * freq;
      out[b * kTimeFeatureDim + i] = static_cast<T>(std::cos(a));
      out[b * kTimeFeatureDim + half + i] = static_cast<T>(std::sin(a));
    }
  }
}

// y = x .* (1 + scale[b]) + shift[b]; shift/scale live in rows of mod at the
// given column offsets.
template <typename T>
void modulate_fwd(int64_t batch, int64_t n, int64_t c, const T* x, const T* mod,
                  int64_t mod_cols, int64_t off_shift, int64_t off_scale, T* y) {
#pragma omp parallel for
  for (int64_t r = 0; r < batch * n; ++r) {
    const T* shift = mod + (r / n) * mod_cols + off_shift;
    const T* scale = mod + (r / n) * mod_cols + off_scale;
    const T* xr = x + r * c;
    T* yr = y + r * c;
    for (int64_t i = 0; i < c; ++i) yr[i] = xr[i] * (T(1) + scale[i]) + shift[i];
  }
}

// dx = dy .* (1 + scale[b]); accumulates per-sample shift/scale gradients
// into dmod (double accumulation, token order).
template <typename T>
void modulate_bwd(int64_t batch, int64_t n, int64_t c, const T* dy, const T* x, const T* mod,
                  int64_t mod_cols, int64_t off_shift, int64_t off_scale, T* dx, T* dmod) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  using ArrD = Eigen::Array<double, Eigen::Dynamic, 1>;
#pragma omp parallel for
  for (int64_t b = 0; b < batch; ++b) {
    Eigen::Map<const Arr> scale(mod + b * mod_cols + off_scale, c);
    ArrD dsh = ArrD::Zero(c), dsc = ArrD::Zero(c);
    for (int64_t t = 0; t < n; ++t) {
      Eigen::Map<const Arr> dyr(dy + (b * n + t) * c, c);
      Eigen::Map<const Arr> xr(x + (b * n + t) * c, c);
      Eigen::Map<Arr> dxr(dx + (b * n + t) * c, c);
      dsh += dyr.template cast<double>();
      dsc += (dyr * xr).template cast<double>();
      dxr = dyr * (T(1) + scale);
    }
    Eigen::Map<Arr> sh_out(dmod + b * mod_cols + off_shift, c);
    Eigen::Map<Arr> sc_out(dmod + b * mod_cols + off_scale, c);
    sh_out += dsh.template cast<T>();
    sc_out += dsc.template cast<T>();
  }
}

// x += gate[b] .* branch
template <typename T>
void gated_add(int64_t batch, int64_t n, int64_t c, const T* branch, const T* mod,
               int64_t mod_cols, int64_t off_gate, T* x) {
#pragma omp parallel for
  for (int64_t r = 0; r < batch * n; ++r) {
    const T* gate = mod + (r / n) * mod_cols + off_gate;
    const T* br = branch + r * c;
    T* xr = x + r * c;
    for (int64_t i = 0; i < c; ++i) xr[i] += gate[i] * br[i];
  }
}

// dbranch = dy .* gate[b]; accumulates the gate gradient into dmod. The
// residual passthrough of dy is the caller's concern.
template <typename T>
void gated_bwd(int64_t batch, int64_t n, int64_t c, const T* dy, const T* branch, const T* mod,
               int64_t mod_cols, int64_t off_gate, T* dbranch, T* dmod) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  using ArrD = Eigen::Array<double, Eigen::Dynamic, 1>;
#pragma omp parallel for
  for (int64_t b = 0; b < batch; ++b) {
    Eigen::Map<const Arr> gate(mod + b * mod_cols + off_gate, c);
    ArrD dg = ArrD::Zero(c);
    for (int64_t t = 0; t < n; ++t) {
      Eigen::Map<const Arr> dyr(dy + (b * n + t) * c, c);
      Eigen::Map<const Arr> br(branch + (b * n + t) * c, c);
      Eigen::Map<Arr> dbr(dbranch + (b * n + t) * c, c);
      dg += (dyr * br).template cast<double>();
      dbr = dyr * gate;
    }
    Eigen::Map<Arr> g_out(dmod + b * mod_cols + off_gate, c);
    g_out += dg.template cast<T>();
  }
}

template <typename T>
void ln_reapply(int64_t rows, int64_t c, const T* x, const T* mean, const T* rstd, T* y) {
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * c;
    T* yr = y + r * c;
    for (int64_t i = 0; i < c; ++i) yr[i] = (xr[i] - mean[r]) * rstd[r];
  }
}

template <typename T>
void rms_reapply(int64_t rows, int64_t c, const T* x, const T* gain, const T* rrms, T* y) {
#pragma omp parallel for
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * c;
    T* yr = y + r * c;
    for (int64_t i = 0; i < c; ++i) yr[i] = xr[i] * rrms[r] * gain[i];
  }
}

template <typename T>
void add_into(int64_t n, const T* src, T* dst) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

template <typename T>
void mul_into(int64_t n, const T* src, T* dst) {
#pragma omp parallel for
  for (int64_t i = 0; i < n; ++i) dst[i] *= src[i];
}

}  // namespace

template <typename T>
Net<T>::Net(const ModelConfig& config) : cfg(config) {
  cfg.validate();
  int64_t c = cfg.hidden;
  int64_t hd = cfg.head_dim();
  params.add("embed.w", {cfg.token_dim(), c});
  params.add("embed.b", {c});
  params.add("temb.fc1.w", {kTimeFeatureDim, c});
  params.add("temb.fc1.b", {c});
  params.add("temb.fc2.w", {c, c});
  params.add("temb.fc2.b", {c});
  params.add("class.table", {cfg.num_classes + 1, c});
  params.add("mask_token", {c});
  auto add_blocks = [&](const std::string& stage, int depth) {
    for (int i = 0; i < depth; ++i) {
      std::string p = stage + "." + std::to_string(i) + ".";
      params.add(p + "adaln.w", {c, 6 * c});
      params.add(p + "adaln.b", {6 * c});
      params.add(p + "attn.qkv.w", {c, 3 * c});
      params.add(p + "attn.qkv.b", {3 * c});
      params.add(p + "attn.qnorm", {hd});
      params.add(p + "attn.knorm", {hd});
      params.add(p + "attn.out.w", {c, c});
      params.add(p + "attn.out.b", {c});
      params.add(p + "mlp.fc1.w", {c, 4 * c});
      params.add(p + "mlp.fc1.b", {4 * c});
      params.add(p + "mlp.fc2.w", {4 * c, c});
      params.add(p + "mlp.fc2.b", {c});
    }
  };
  add_blocks("f", cfg.enc_depth);
  add_blocks("g", cfg.mid_depth);
  add_blocks("h", cfg.dec_depth);
  params.add("fusion.w", {2 * c, c});
  params.add("fusion.b", {c});
  params.add("head.mod.w", {c, 2 * c});
  params.add("head.mod.b", {2 * c});
  params.add("head.out.w", {c, cfg.token_dim()});
  params.add("head.out.b", {cfg.token_dim()});
  params.finalize();
  bind();

  rope_table = make_rope_table(static_cast<int>(hd));
  int64_t n = cfg.tokens();
  rope_cos = Tensor<T>({n, hd / 2});
  rope_sin = Tensor<T>({n, hd / 2});
  auto pos = make_positions(cfg.grid_rows, cfg.grid_cols);
  bake_rope(rope_table, pos.data(), n, rope_cos.data(), rope_sin.data());
}

template <typename T>
BlockView<T> Net<T>::block_view(ParamStore<T>& store, const std::string& prefix) const {
  BlockView<T> v;
  v.adaln_w = store.ptr(prefix + "adaln.w");
  v.adaln_b = store.ptr(prefix + "adaln.b");
  v.qkv_w = store.ptr(prefix + "attn.qkv.w");
  v.qkv_b = store.ptr(prefix + "attn.qkv.b");
  v.qnorm = store.ptr(prefix + "attn.qnorm");
  v.knorm = store.ptr(prefix + "attn.knorm");
  v.out_w = store.ptr(prefix + "attn.out.w");
  v.out_b = store.ptr(prefix + "attn.out.b");
  v.fc1_w = store.ptr(prefix + "mlp.fc1.w");
  v.fc1_b = store.ptr(prefix + "mlp.fc1.b");
  v.fc2_w = store.ptr(prefix + "mlp.fc2.w");
  v.fc2_b = store.ptr(prefix + "mlp.fc2.b");
  return v;
}

template <typename T>
void Net<T>::bind() {
  views.embed_w = params.ptr("embed.w");
  views.embed_b = params.ptr("embed.b");
  views.temb1_w = params.ptr("temb.fc1.w");
  views.temb1_b = params.ptr("temb.fc1.b");
  views.temb2_w = params.ptr("temb.fc2.w");
  views.temb2_b = params.ptr("temb.fc2.b");
  views.class_table = params.ptr("class.table");
  views.mask_token = params.ptr("mask_token");
  views.fusion_w = params.ptr("fusion.w");
  views.fusion_b = params.ptr("fusion.b");
  views.head_mod_w = params.ptr("head.mod.w");
  views.head_mod_b = params.ptr("head.mod.b");
  views.head_out_w = params.ptr("head.out.w");
  views.head_out_b = params.ptr("head.out.b");
  views.f.clear();
  views.g.clear();
  views.h.clear();
  for (int i = 0; i < cfg.enc_depth; ++i)
    views.f.push_back(block_view(params, "f." + std::to_string(i) + "."));
  for (int i = 0; i < cfg.mid_depth; ++i)
    views.g.push_back(block_view(params, "g." + std::to_string(i) + "."));
  for (int i = 0; i < cfg.dec_depth; ++i)
    views.h.push_back(block_view(params, "h." + std::to_string(i) + "."));
}

template <typename T>
void Net<T>::init_params(Rng& rng) {
  auto& data = params.data();
  std::fill(data.begin(), data.end(), T(0));
  auto draw_normal = [&](T* p, int64_t count, double std) {
    for (int64_t i = 0; i < count; ++i) p[i] = static_cast<T>(rng.normal() * std);
  };
  auto fill_ones = [&](T* p, int64_t count) {
    for (int64_t i = 0; i < count; ++i) p[i] = T(1);
  };
  for (const auto& e : params.entries()) {
    T* p = data.data() + e.offset;
    bool is_weight = e.name.size() > 2 && e.name.rfind(".w") == e.name.size() - 2;
    if (e.name == "mask_token" || e.name == "class.table") {
      draw_normal(p, e.size, 0.02);
    } else if (e.name.find("qnorm") != std::string::npos ||
               e.name.find("knorm") != std::string::npos) {
      fill_ones(p, e.size);
    } else if (e.name.find("adaln") != std::string::npos ||
               e.name.rfind("head.", 0) == 0) {
      // zero: AdaLN-zero gates and the zero-output head
    } else if (is_weight) {
      draw_normal(p, e.size, 0.02);
    }
    // biases stay zero
  }
}

template <typename T>
void Net<T>::run_block(const BlockView<T>& bv, BlockActs<T>& acts, Workspace<T>& ws, T* x,
                       int64_t batch, int64_t n, const T* cos_t, const T* sin_t) const {
  int64_t c = cfg.hidden;
  int64_t h = cfg.heads;
  int64_t hd = cfg.head_dim();
  ensure(acts.x_in, {batch, n, c});
  ensure(acts.mod, {batch, 6 * c});
  ensure(acts.ln1_mean, {batch * n});
  ensure(acts.ln1_rstd, {batch * n});
  ensure(acts.qkv, {batch, n, 3 * c});
  ensure(acts.q_rrms, {batch * h * n});
  ensure(acts.k_rrms, {batch * h * n});
  ensure(acts.probs, {batch, h, n, n});
  ensure(acts.merged, {batch, n, c});
  ensure(acts.attn_out, {batch, n, c});
  ensure(acts.x_mid, {batch, n, c});
  ensure(acts.ln2_mean, {batch * n});
  ensure(acts.ln2_rstd, {batch * n});
  ensure(acts.h1, {batch, n, 4 * c});
  ensure(acts.mlp_out, {batch, n, c});

  std::memcpy(acts.x_in.data(), x, sizeof(T) * batch * n * c);
  kernels::matmul(batch, 6 * c, c, ws.silu_cond.data(), bv.adaln_w, acts.mod.data());
  kernels::add_bias(batch, 6 * c, acts.mod.data(), bv.adaln_b);

  kernels::layer_norm(batch * n, c, x, ws.s1.data(), acts.ln1_mean.data(), acts.ln1_rstd.data(),
                      static_cast<T>(kNormEps));
  modulate_fwd(batch, n, c, ws.s1.data(), acts.mod.data(), 6 * c, 0, c, ws.s2.data());
  kernels::matmul(batch * n, 3 * c, c, ws.s2.data(), bv.qkv_w, acts.qkv.data());
  kernels::add_bias(batch * n, 3 * c, acts.qkv.data(), bv.qkv_b);
  kernels::split_heads(batch, n, h, hd, acts.qkv.data(), ws.q.data(), ws.k.data(), ws.v.data());
  kernels::rms_norm(batch * h * n, hd, ws.q.data(), bv.qnorm, ws.q2.data(), acts.q_rrms.data(),
                    static_cast<T>(kNormEps));
  kernels::rms_norm(batch * h * n, hd, ws.k.data(), bv.knorm, ws.k2.data(), acts.k_rrms.data(),
                    static_cast<T>(kNormEps));
  kernels::rope_rotate(batch, h, n, hd, ws.q2.data(), cos_t, sin_t, 0, +1);
  kernels::rope_rotate(batch, h, n, hd, ws.k2.data(), cos_t, sin_t, 0, +1);
  T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
  kernels::attn_scores(batch * h, n, hd, ws.q2.data(), ws.k2.data(), scale, acts.probs.data());
  kernels::softmax_rows(batch * h * n, n, acts.probs.data(), acts.probs.data());
  kernels::attn_apply(batch * h, n, hd, acts.probs.data(), ws.v.data(), ws.heads_out.data());
  kernels::merge_heads(batch, n, h, hd, ws.heads_out.data(), acts.merged.data());
  kernels::matmul(batch * n, c, c, acts.merged.data(), bv.out_w, acts.attn_out.data());
  kernels::add_bias(batch * n, c, acts.attn_out.data(), bv.out_b);
  gated_add(batch, n, c, acts.attn_out.data(), acts.mod.data(), 6 * c, 2 * c, x);
  std::memcpy(acts.x_mid.data(), x, sizeof(T) * batch * n * c);

  kernels::layer_norm(batch * n, c, x, ws.s1.data(), acts.ln2_mean.data(), acts.ln2_rstd.data(),
                      static_cast<T>(kNormEps));
  modulate_fwd(batch, n, c, ws.s1.data(), acts.mod.data(), 6 * c, 3 * c, 4 * c, ws.s2.data());
  kernels::matmul(batch * n, 4 * c, c, ws.s2.data(), bv.fc1_w, acts.h1.data());
  kernels::add_bias(batch * n, 4 * c, acts.h1.data(), bv.fc1_b);
  kernels::gelu(batch * n * 4 * c, acts.h1.data(), ws.big.data());
  kernels::matmul(batch * n, c, 4 * c, ws.big.data(), bv.fc2_w, acts.mlp_out.data());
  kernels::add_bias(batch * n, c, acts.mlp_out.data(), bv.fc2_b);
  gated_add(batch, n, c, acts.mlp_out.data(), acts.mod.data(), 6 * c, 5 * c, x);
}

template <typename T>
void Net<T>::forward(const T* x, int64_t batch, const double* t, const int* labels,
                     const DropMask* mask, const uint8_t* path_drop, Workspace<T>& ws,
                     bool keep_acts, T* out) const {
  if (batch <= 0) throw std::invalid_argument("Net::forward: empty batch");
  int64_t n = cfg.tokens();
  int64_t c = cfg.hidden;
  int64_t cin = cfg.token_dim();
  int64_t h = cfg.heads;
  int64_t hd = cfg.head_dim();
  for (int64_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || labels[b] > cfg.num_classes)
      throw std::invalid_argument("Net::forward: label outside [0, num_classes]");
    if (t[b] < 0.0 || t[b] > 1.0)
      throw std::invalid_argument("Net::forward: t outside [0, 1]");
  }

  ws.batch = batch;
  ws.keep_acts = keep_acts;
  ws.mask = mask ? *mask : keep_all_mask(n);
  validate_mask(ws.mask, n);
  ws.path_drop.assign(path_drop, path_drop + batch);
  ws.labels.assign(labels, labels + batch);
  ws.t_vals.assign(t, t + batch);
  bool shallow = true;
  for (int64_t b = 0; b < batch; ++b) shallow = shallow && path_drop[b];
  ws.shallow = shallow;

  int64_t kept = ws.mask.kept_count();
  ensure(ws.x_input, {batch, n, cin});
  ensure(ws.tsin, {batch, static_cast<int64_t>(kTimeFeatureDim)});
  ensure(ws.temb_h1, {batch, c});
  ensure(ws.temb_h1s, {batch, c});
  ensure(ws.cond, {batch, c});
  ensure(ws.silu_cond, {batch, c});
  ensure(ws.f_t, {batch, n, c});
  ensure(ws.concat, {batch, n, 2 * c});
  ensure(ws.head_in, {batch, n, c});
  ensure(ws.lnf_mean, {batch * n});
  ensure(ws.lnf_rstd, {batch * n});
  ensure(ws.head_mod, {batch, 2 * c});
  ensure(ws.rope_cos_kept, {kept, hd / 2});
  ensure(ws.rope_sin_kept, {kept, hd / 2});
  ensure(ws.cur, {batch, n, c});
  ensure(ws.gcur, {batch, n, c});
  ensure(ws.gpad, {batch, n, c});
  ensure(ws.s1, {batch, n, c});
  ensure(ws.s2, {batch, n, c});
  ensure(ws.s3, {batch, n, c});
  ensure(ws.q, {batch, h, n, hd});
  ensure(ws.k, {batch, h, n, hd});
  ensure(ws.v, {batch, h, n, hd});
  ensure(ws.q2, {batch, h, n, hd});
  ensure(ws.k2, {batch, h, n, hd});
  ensure(ws.heads_out, {batch, h, n, hd});
  ensure(ws.big, {batch, n, 4 * c});
  if (keep_acts) {
    ws.facts.resize(static_cast<size_t>(cfg.enc_depth));
    ws.gacts.resize(static_cast<size_t>(cfg.mid_depth));
    ws.hacts.resize(static_cast<size_t>(cfg.dec_depth));
  }

  std::memcpy(ws.x_input.data(), x, sizeof(T) * batch * n * cin);

  // conditioning
  time_features(batch, t, ws.tsin.data());
  kernels::matmul(batch, c, kTimeFeatureDim, ws.tsin.data(), views.temb1_w, ws.temb_h1.data());
  kernels::add_bias(batch, c, ws.temb_h1.data(), views.temb1_b);
  kernels::silu(batch * c, ws.temb_h1.data(), ws.temb_h1s.data());
  kernels::matmul(batch, c, c, ws.temb_h1s.data(), views.temb2_w, ws.cond.data());
  kernels::add_bias(batch, c, ws.cond.data(), views.temb2_b);
  for (int64_t b = 0; b < batch; ++b) {
    const T* row = views.class_table + static_cast<int64_t>(labels[b]) * c;
    T* cb = ws.cond.data() + b * c;
    for (int64_t i = 0; i < c; ++i) cb[i] += row[i];
  }
  kernels::silu(batch * c, ws.cond.data(), ws.silu_cond.data());

  // encoder
  kernels::matmul(batch * n, c, cin, x, views.embed_w, ws.cur.data());
  kernels::add_bias(batch * n, c, ws.cur.data(), views.embed_b);
  for (int i = 0; i < cfg.enc_depth; ++i)
    run_block(views.f[static_cast<size_t>(i)],
              keep_acts ? ws.facts[static_cast<size_t>(i)] : ws.transient, ws, ws.cur.data(),
              batch, n, rope_cos.data(), rope_sin.data());
  std::memcpy(ws.f_t.data(), ws.cur.data(), sizeof(T) * batch * n * c);

  // middle stage on the kept subset, skipped when every sample path-drops
  if (!shallow) {
    apply_drop_rows(ws.f_t.data(), batch, n, c, ws.mask, ws.gcur.data());
    kernels::gather_rows(kept, hd / 2, rope_cos.data(), ws.mask.kept_indices.data(),
                         ws.rope_cos_kept.data());
    kernels::gather_rows(kept, hd / 2, rope_sin.data(), ws.mask.kept_indices.data(),
                         ws.rope_sin_kept.data());
    for (int i = 0; i < cfg.mid_depth; ++i)
      run_block(views.g[static_cast<size_t>(i)],
                keep_acts ? ws.gacts[static_cast<size_t>(i)] : ws.transient, ws, ws.gcur.data(),
                batch, kept, ws.rope_cos_kept.data(), ws.rope_sin_kept.data());
    ensure(ws.g_sparse, {batch, kept, c});
    std::memcpy(ws.g_sparse.data(), ws.gcur.data(), sizeof(T) * batch * kept * c);
    pad_rows_with_mask(ws.gcur.data(), batch, n, c, ws.mask, views.mask_token, ws.gpad.data());
    ++full_passes;
  } else {
    ++shallow_passes;
  }
  for (int64_t b = 0; b < batch; ++b) {
    if (shallow || path_drop[b]) {
      T* row = ws.gpad.data() + b * n * c;
      for (int64_t tok = 0; tok < n; ++tok)
        std::memcpy(row + tok * c, views.mask_token, sizeof(T) * c);
    }
  }

  // fusion: concat channels, project back to C
#pragma omp parallel for
  for (int64_t r = 0; r < batch * n; ++r) {
    std::memcpy(ws.concat.data() + r * 2 * c, ws.f_t.data() + r * c, sizeof(T) * c);
    std::memcpy(ws.concat.data() + r * 2 * c + c, ws.gpad.data() + r * c, sizeof(T) * c);
  }
  kernels::matmul(batch * n, c, 2 * c, ws.concat.data(), views.fusion_w, ws.cur.data());
  kernels::add_bias(batch * n, c, ws.cur.data(), views.fusion_b);

  // decoder
  for (int i = 0; i < cfg.dec_depth; ++i)
    run_block(views.h[static_cast<size_t>(i)],
              keep_acts ? ws.hacts[static_cast<size_t>(i)] : ws.transient, ws, ws.cur.data(),
              batch, n, rope_cos.data(), rope_sin.data());
  std::memcpy(ws.head_in.data(), ws.cur.data(), sizeof(T) * batch * n * c);

  // output head: norm, conditioned affine, linear to pixels
  kernels::layer_norm(batch * n, c, ws.head_in.data(), ws.s1.data(), ws.lnf_mean.data(),
                      ws.lnf_rstd.data(), static_cast<T>(kNormEps));
  kernels::matmul(batch, 2 * c, c, ws.silu_cond.data(), views.head_mod_w, ws.head_mod.data());
  kernels::add_bias(batch, 2 * c, ws.head_mod.data(), views.head_mod_b);
  modulate_fwd(batch, n, c, ws.s1.data(), ws.head_mod.data(), 2 * c, 0, c, ws.s2.data());
  kernels::matmul(batch * n, cin, c, ws.s2.data(), views.head_out_w, out);
  kernels::add_bias(batch * n, cin, out, views.head_out_b);
}

template <typename T>
void Net<T>::run_block_bwd(const BlockView<T>& bv, const BlockActs<T>& acts, Workspace<T>& ws,
                           T* dx, int64_t batch, int64_t n, const T* cos_t, const T* sin_t,
                           BlockView<T> gv, T* dsilu_cond) const {
  int64_t c = cfg.hidden;
  int64_t h = cfg.heads;
  int64_t hd = cfg.head_dim();
  ensure(ws.dmod, {batch, 6 * c});
  ws.dmod.fill(T(0));

  // feed-forward branch
  gated_bwd(batch, n, c, dx, acts.mlp_out.data(), acts.mod.data(), 6 * c, 5 * c,
            ws.dbranch.data(), ws.dmod.data());
  // one tanh pass recovers the activation and its derivative together
  kernels::gelu_with_deriv(batch * n * 4 * c, acts.h1.data(), ws.big.data(), ws.dbig2.data());
  kernels::matmul(4 * c, c, batch * n, ws.big.data(), ws.dbranch.data(), gv.fc2_w, true, false);
  kernels::col_sum(batch * n, c, ws.dbranch.data(), gv.fc2_b);
  kernels::matmul(batch * n, 4 * c, c, ws.dbranch.data(), bv.fc2_w, ws.dbig.data(), false, true);
  mul_into(batch * n * 4 * c, ws.dbig.data(), ws.dbig2.data());
  ln_reapply(batch * n, c, acts.x_mid.data(), acts.ln2_mean.data(), acts.ln2_rstd.data(),
             ws.s1.data());
  modulate_fwd(batch, n, c, ws.s1.data(), acts.mod.data(), 6 * c, 3 * c, 4 * c, ws.s2.data());
  kernels::matmul(c, 4 * c, batch * n, ws.s2.data(), ws.dbig2.data(), gv.fc1_w, true, false);
  kernels::col_sum(batch * n, 4 * c, ws.dbig2.data(), gv.fc1_b);
  kernels::matmul(batch * n, c, 4 * c, ws.dbig2.data(), bv.fc1_w, ws.dbranch.data(), false, true);
  modulate_bwd(batch, n, c, ws.dbranch.data(), ws.s1.data(), acts.mod.data(), 6 * c, 3 * c,
               4 * c, ws.s2.data(), ws.dmod.data());
  kernels::layer_norm_bwd(batch * n, c, acts.x_mid.data(), ws.s2.data(), acts.ln2_mean.data(),
                          acts.ln2_rstd.data(), ws.dtmp.data());
  add_into(batch * n * c, ws.dtmp.data(), dx);

  // attention branch
  gated_bwd(batch, n, c, dx, acts.attn_out.data(), acts.mod.data(), 6 * c, 2 * c,
            ws.dbranch.data(), ws.dmod.data());
  kernels::matmul(c, c, batch * n, acts.merged.data(), ws.dbranch.data(), gv.out_w, true, false);
  kernels::col_sum(batch * n, c, ws.dbranch.data(), gv.out_b);
  kernels::matmul(batch * n, c, c, ws.dbranch.data(), bv.out_w, ws.s1.data(), false, true);
  kernels::merge_heads_bwd(batch, n, h, hd, ws.s1.data(), ws.dheads.data());
  kernels::split_heads(batch, n, h, hd, acts.qkv.data(), ws.q.data(), ws.k.data(), ws.v.data());
  rms_reapply(batch * h * n, hd, ws.q.data(), bv.qnorm, acts.q_rrms.data(), ws.q2.data());
  rms_reapply(batch * h * n, hd, ws.k.data(), bv.knorm, acts.k_rrms.data(), ws.k2.data());
  kernels::rope_rotate(batch, h, n, hd, ws.q2.data(), cos_t, sin_t, 0, +1);
  kernels::rope_rotate(batch, h, n, hd, ws.k2.data(), cos_t, sin_t, 0, +1);
  ensure(ws.dprobs, {batch, h, n, n});
  kernels::attn_apply_bwd(batch * h, n, hd, acts.probs.data(), ws.v.data(), ws.dheads.data(),
                          ws.dprobs.data(), ws.dv.data());
  kernels::softmax_rows_bwd(batch * h * n, n, acts.probs.data(), ws.dprobs.data(),
                            ws.dprobs.data());
  T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
  kernels::attn_scores_bwd(batch * h, n, hd, ws.q2.data(), ws.k2.data(), ws.dprobs.data(), scale,
                           ws.dq.data(), ws.dk.data());
  kernels::rope_rotate(batch, h, n, hd, ws.dq.data(), cos_t, sin_t, 0, -1);
  kernels::rope_rotate(batch, h, n, hd, ws.dk.data(), cos_t, sin_t, 0, -1);
  kernels::rms_norm_bwd(batch * h * n, hd, ws.q.data(), bv.qnorm, ws.dq.data(),
                        acts.q_rrms.data(), ws.q2.data(), gv.qnorm);
  kernels::rms_norm_bwd(batch * h * n, hd, ws.k.data(), bv.knorm, ws.dk.data(),
                        acts.k_rrms.data(), ws.k2.data(), gv.knorm);
  kernels::split_heads_bwd(batch, n, h, hd, ws.q2.data(), ws.k2.data(), ws.dv.data(),
                           ws.dqkv.data());
  ln_reapply(batch * n, c, acts.x_in.data(), acts.ln1_mean.data(), acts.ln1_rstd.data(),
             ws.s1.data());
  modulate_fwd(batch, n, c, ws.s1.data(), acts.mod.data(), 6 * c, 0, c, ws.s2.data());
  kernels::matmul(c, 3 * c, batch * n, ws.s2.data(), ws.dqkv.data(), gv.qkv_w, true, false);
  kernels::col_sum(batch * n, 3 * c, ws.dqkv.data(), gv.qkv_b);
  kernels::matmul(batch * n, c, 3 * c, ws.dqkv.data(), bv.qkv_w, ws.dbranch.data(), false, true);
  modulate_bwd(batch, n, c, ws.dbranch.data(), ws.s1.data(), acts.mod.data(), 6 * c, 0, c,
               ws.s2.data(), ws.dmod.data());
  kernels::layer_norm_bwd(batch * n, c, acts.x_in.data(), ws.s2.data(), acts.ln1_mean.data(),
                          acts.ln1_rstd.data(), ws.dtmp.data());
  add_into(batch * n * c, ws.dtmp.data(), dx);

  // conditioning projection
  kernels::matmul(c, 6 * c, batch, ws.silu_cond.data(), ws.dmod.data(), gv.adaln_w, true, false);
  kernels::col_sum(batch, 6 * c, ws.dmod.data(), gv.adaln_b);
  kernels::matmul(batch, c, 6 * c, ws.dmod.data(), bv.adaln_w, dsilu_cond, false, true, T(1));
}

template <typename T>
void Net<T>::backward(Workspace<T>& ws, const T* dout, ParamStore<T>& grads) const {
  if (!ws.keep_acts)
    throw std::logic_error("Net::backward: forward was not recorded with keep_acts");
  int64_t batch = ws.batch;
  int64_t n = cfg.tokens();
  int64_t c = cfg.hidden;
  int64_t cin = cfg.token_dim();
  int64_t kept = ws.mask.kept_count();
  auto& gd = grads.data();
  std::fill(gd.begin(), gd.end(), T(0));

  ensure(ws.dcur, {batch, n, c});
  ensure(ws.dtmp, {batch, n, c});
  ensure(ws.dbranch, {batch, n, c});
  ensure(ws.df_t, {batch, n, c});
  ensure(ws.dgcur, {batch, n, c});
  ensure(ws.dqkv, {batch, n, 3 * c});
  ensure(ws.dq, {batch, cfg.heads, n, cfg.head_dim()});
  ensure(ws.dk, {batch, cfg.heads, n, cfg.head_dim()});
  ensure(ws.dv, {batch, cfg.heads, n, cfg.head_dim()});
  ensure(ws.dheads, {batch, cfg.heads, n, cfg.head_dim()});
  ensure(ws.dbig, {batch, n, 4 * c});
  ensure(ws.dbig2, {batch, n, 4 * c});
  ensure(ws.dconcat, {batch, n, 2 * c});
  ensure(ws.dcond, {batch, c});
  ensure(ws.dsilu_cond, {batch, c});
  ensure(ws.dhead_mod, {batch, 2 * c});
  ensure(ws.dtemb1, {batch, c});
  ws.dsilu_cond.fill(T(0));
  ws.dhead_mod.fill(T(0));

  // output head
  ln_reapply(batch * n, c, ws.head_in.data(), ws.lnf_mean.data(), ws.lnf_rstd.data(),
             ws.s1.data());
  modulate_fwd(batch, n, c, ws.s1.data(), ws.head_mod.data(), 2 * c, 0, c, ws.s2.data());
  kernels::matmul(c, cin, batch * n, ws.s2.data(), dout, grads.ptr("head.out.w"), true, false);
  kernels::col_sum(batch * n, cin, dout, grads.ptr("head.out.b"));
  kernels::matmul(batch * n, c, cin, dout, views.head_out_w, ws.s3.data(), false, true);
  modulate_bwd(batch, n, c, ws.s3.data(), ws.s1.data(), ws.head_mod.data(), 2 * c, 0, c,
               ws.s2.data(), ws.dhead_mod.data());
  kernels::matmul(c, 2 * c, batch, ws.silu_cond.data(), ws.dhead_mod.data(),
                  grads.ptr("head.mod.w"), true, false);
  kernels::col_sum(batch, 2 * c, ws.dhead_mod.data(), grads.ptr("head.mod.b"));
  kernels::matmul(batch, c, 2 * c, ws.dhead_mod.data(), views.head_mod_w, ws.dsilu_cond.data(),
                  false, true, T(1));
  kernels::layer_norm_bwd(batch * n, c, ws.head_in.data(), ws.s2.data(), ws.lnf_mean.data(),
                          ws.lnf_rstd.data(), ws.dcur.data());

  // decoder
  for (int i = cfg.dec_depth - 1; i >= 0; --i)
    run_block_bwd(views.h[static_cast<size_t>(i)], ws.hacts[static_cast<size_t>(i)], ws,
                  ws.dcur.data(), batch, n, rope_cos.data(), rope_sin.data(),
                  block_view(grads, "h." + std::to_string(i) + "."), ws.dsilu_cond.data());

  // fusion
  kernels::matmul(2 * c, c, batch * n, ws.concat.data(), ws.dcur.data(), grads.ptr("fusion.w"),
                  true, false);
  kernels::col_sum(batch * n, c, ws.dcur.data(), grads.ptr("fusion.b"));
  kernels::matmul(batch * n, 2 * c, c, ws.dcur.data(), views.fusion_w, ws.dconcat.data(), false,
                  true);
#pragma omp parallel for
  for (int64_t r = 0; r < batch * n; ++r) {
    std::memcpy(ws.df_t.data() + r * c, ws.dconcat.data() + r * 2 * c, sizeof(T) * c);
    std::memcpy(ws.gpad.data() + r * c, ws.dconcat.data() + r * 2 * c + c, sizeof(T) * c);
  }
  // ws.gpad now holds d(g_pad)

  // mask-token gradient: every padded slot, plus whole sequences where the
  // sparse path was dropped
  {
    std::vector<double> acc(static_cast<size_t>(c), 0.0);
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t tok = 0; tok < n; ++tok) {
        bool from_mask = ws.shallow || ws.path_drop[static_cast<size_t>(b)] ||
                         !ws.mask.keep[static_cast<size_t>(tok)];
        if (!from_mask) continue;
        const T* row = ws.gpad.data() + (b * n + tok) * c;
        for (int64_t i = 0; i < c; ++i) acc[static_cast<size_t>(i)] += static_cast<double>(row[i]);
      }
    }
    if (cfg.mask_token_trainable) {
      T* dm = grads.ptr("mask_token");
      for (int64_t i = 0; i < c; ++i) dm[i] = static_cast<T>(acc[static_cast<size_t>(i)]);
    }
  }

  // middle stage
  if (!ws.shallow) {
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t j = 0; j < kept; ++j) {
        T* d = ws.dgcur.data() + (b * kept + j) * c;
        if (ws.path_drop[static_cast<size_t>(b)]) {
          std::fill(d, d + c, T(0));
        } else {
          const T* s = ws.gpad.data() +
                       (b * n + ws.mask.kept_indices[static_cast<size_t>(j)]) * c;
          std::memcpy(d, s, sizeof(T) * c);
        }
      }
    }
    for (int i = cfg.mid_depth - 1; i >= 0; --i)
      run_block_bwd(views.g[static_cast<size_t>(i)], ws.gacts[static_cast<size_t>(i)], ws,
                    ws.dgcur.data(), batch, kept, ws.rope_cos_kept.data(),
                    ws.rope_sin_kept.data(),
                    block_view(grads, "g." + std::to_string(i) + "."), ws.dsilu_cond.data());
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t j = 0; j < kept; ++j) {
        const T* s = ws.dgcur.data() + (b * kept + j) * c;
        T* d = ws.df_t.data() + (b * n + ws.mask.kept_indices[static_cast<size_t>(j)]) * c;
        for (int64_t i = 0; i < c; ++i) d[i] += s[i];
      }
    }
  }

  // encoder
  std::memcpy(ws.dcur.data(), ws.df_t.data(), sizeof(T) * batch * n * c);
  for (int i = cfg.enc_depth - 1; i >= 0; --i)
    run_block_bwd(views.f[static_cast<size_t>(i)], ws.facts[static_cast<size_t>(i)], ws,
                  ws.dcur.data(), batch, n, rope_cos.data(), rope_sin.data(),
                  block_view(grads, "f." + std::to_string(i) + "."), ws.dsilu_cond.data());

  // patch embedding
  kernels::matmul(cin, c, batch * n, ws.x_input.data(), ws.dcur.data(), grads.ptr("embed.w"),
                  true, false);
  kernels::col_sum(batch * n, c, ws.dcur.data(), grads.ptr("embed.b"));

  // conditioning chain
  kernels::silu_bwd(batch * c, ws.cond.data(), ws.dsilu_cond.data(), ws.dcond.data());
  {
    T* ct = grads.ptr("class.table");
    for (int64_t b = 0; b < batch; ++b) {
      T* row = ct + static_cast<int64_t>(ws.labels[static_cast<size_t>(b)]) * c;
      const T* d = ws.dcond.data() + b * c;
      for (int64_t i = 0; i < c; ++i) row[i] += d[i];
    }
  }
  kernels::matmul(c, c, batch, ws.temb_h1s.data(), ws.dcond.data(), grads.ptr("temb.fc2.w"),
                  true, false);
  kernels::col_sum(batch, c, ws.dcond.data(), grads.ptr("temb.fc2.b"));
  kernels::matmul(batch, c, c, ws.dcond.data(), views.temb2_w, ws.dtemb1.data(), false, true);
  kernels::silu_bwd(batch * c, ws.temb_h1.data(), ws.dtemb1.data(), ws.dtemb1.data());
  kernels::matmul(kTimeFeatureDim, c, batch, ws.tsin.data(), ws.dtemb1.data(),
                  grads.ptr("temb.fc1.w"), true, false);
  kernels::col_sum(batch, c, ws.dtemb1.data(), grads.ptr("temb.fc1.b"));
}

// TokenBatch wrappers

template <typename T>
TokenBatch<T> block_forward(const Net<T>& net, char stage, int index,
                            const TokenBatch<T>& tokens, const Tensor<T>& cond) {
  const auto& cfg = net.cfg;
  int64_t batch = tokens.tokens.dim(0);
  int64_t n = tokens.tokens.dim(1);
  if (tokens.tokens.dim(2) != cfg.hidden)
    throw std::invalid_argument("block_forward: token channels != hidden width");
  if (cond.rank() != 2 || cond.dim(0) != batch || cond.dim(1) != cfg.hidden)
    throw std::invalid_argument("block_forward: cond must be (batch, hidden)");
  if (static_cast<int64_t>(tokens.positions.size()) != n)
    throw std::invalid_argument("block_forward: positions do not cover tokens");
  const std::vector<BlockView<T>>* stage_views = nullptr;
  if (stage == 'f') stage_views = &net.views.f;
  else if (stage == 'g') stage_views = &net.views.g;
  else if (stage == 'h') stage_views = &net.views.h;
  else throw std::invalid_argument("block_forward: stage must be one of f, g, h");
  if (index < 0 || index >= static_cast<int>(stage_views->size()))
    throw std::invalid_argument("block_forward: block index out of range");

  Workspace<T> ws;
  int64_t c = cfg.hidden, h = cfg.heads, hd = cfg.head_dim();
  ensure(ws.silu_cond, {batch, c});
  kernels::silu(batch * c, cond.data(), ws.silu_cond.data());
  ensure(ws.s1, {batch, n, c});
  ensure(ws.s2, {batch, n, c});
  ensure(ws.q, {batch, h, n, hd});
  ensure(ws.k, {batch, h, n, hd});
  ensure(ws.v, {batch, h, n, hd});
  ensure(ws.q2, {batch, h, n, hd});
  ensure(ws.k2, {batch, h, n, hd});
  ensure(ws.heads_out, {batch, h, n, hd});
  ensure(ws.big, {batch, n, 4 * c});
  Tensor<T> cos_t({n, hd / 2}), sin_t({n, hd / 2});
  bake_rope(net.rope_table, tokens.positions.data(), n, cos_t.data(), sin_t.data());

  TokenBatch<T> out = tokens;
  BlockActs<T> acts;
  net.run_block((*stage_views)[static_cast<size_t>(index)], acts, ws, out.tokens.data(), batch,
                n, cos_t.data(), sin_t.data());
  return out;
}

template <typename T>
TokenBatch<T> fuse(const TokenBatch<T>& f_t, const TokenBatch<T>& g_pad, const T* fusion_w,
                   const T* fusion_b, int64_t c) {
  if (f_t.tokens.shape != g_pad.tokens.shape)
    throw std::invalid_argument("fuse: mismatched shapes " + shape_str(f_t.tokens.shape) +
                                " vs " + shape_str(g_pad.tokens.shape));
  if (f_t.tokens.dim(2) != c) throw std::invalid_argument("fuse: channel width != C");
  int64_t batch = f_t.tokens.dim(0), n = f_t.tokens.dim(1);
  Tensor<T> concat({batch, n, 2 * c});
  for (int64_t r = 0; r < batch * n; ++r) {
    std::memcpy(concat.data() + r * 2 * c, f_t.tokens.data() + r * c, sizeof(T) * c);
    std::memcpy(concat.data() + r * 2 * c + c, g_pad.tokens.data() + r * c, sizeof(T) * c);
  }
  TokenBatch<T> out = f_t;
  kernels::matmul(batch * n, c, 2 * c, concat.data(), fusion_w, out.tokens.data());
  kernels::add_bias(batch * n, c, out.tokens.data(), fusion_b);
  return out;
}

template <typename T>
TokenBatch<T> forward_pretrain(const Net<T>& net, const TokenBatch<T>& x_t,
                               const std::vector<double>& t, const std::vector<int>& labels,
                               const DropMask& mask, const std::vector<uint8_t>& path_drop,
                               Workspace<T>& ws, bool keep_acts) {
  int64_t batch = x_t.tokens.dim(0);
  if (x_t.tokens.dim(1) != net.cfg.tokens() || x_t.grid_rows != net.cfg.grid_rows ||
      x_t.grid_cols != net.cfg.grid_cols)
    throw std::invalid_argument("forward_pretrain: token grid does not match the model");
  if (x_t.tokens.dim(2) != net.cfg.token_dim())
    throw std::invalid_argument("forward_pretrain: token width != patch^2 * channels");
  if (static_cast<int64_t>(t.size()) != batch ||
      static_cast<int64_t>(labels.size()) != batch ||
      static_cast<int64_t>(path_drop.size()) != batch)
    throw std::invalid_argument("forward_pretrain: per-sample inputs != batch size");
  TokenBatch<T> out;
  out.tokens = Tensor<T>({batch, net.cfg.tokens(), net.cfg.token_dim()});
  out.positions = make_positions(net.cfg.grid_rows, net.cfg.grid_cols);
  out.grid_rows = net.cfg.grid_rows;
  out.grid_cols = net.cfg.grid_cols;
  net.forward(x_t.tokens.data(), batch, t.data(), labels.data(), &mask, path_drop.data(), ws,
              keep_acts, out.tokens.data());
  return out;
}

template <typename T>
TokenBatch<T> forward_full(const Net<T>& net, const TokenBatch<T>& x_t,
                           const std::vector<double>& t, const std::vector<int>& labels,
                           const std::vector<uint8_t>& path_drop, Workspace<T>& ws,
                           bool keep_acts) {
  return forward_pretrain(net, x_t, t, labels, keep_all_mask(net.cfg.tokens()), path_drop, ws,
                          keep_acts);
}

template class Net<float>;
template class Net<double>;

#define SPRINT_NET_FREE(T)                                                                     \
  template TokenBatch<T> block_forward<T>(const Net<T>&, char, int, const TokenBatch<T>&,      \
                                          const Tensor<T>&);                                   \
  template TokenBatch<T> fuse<T>(const TokenBatch<T>&, const TokenBatch<T>&, const T*,         \
                                 const T*, int64_t);                                           \
  template TokenBatch<T> forward_pretrain<T>(const Net<T>&, const TokenBatch<T>&,              \
                                             const std::vector<double>&,                       \
                                             const std::vector<int>&, const DropMask&,         \
                                             const std::vector<uint8_t>&, Workspace<T>&,       \
                                             bool);                                            \
  template TokenBatch<T> forward_full<T>(const Net<T>&, const TokenBatch<T>&,                  \
                                         const std::vector<double>&, const std::vector<int>&,  \
                                         const std::vector<uint8_t>&, Workspace<T>&, bool);

SPRINT_NET_FREE(float)
SPRINT_NET_FREE(double)

#undef SPRINT_NET_FREE

}  // namespace sprint
