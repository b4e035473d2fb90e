#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sprint/grid.hpp"
#include "sprint/rng.hpp"
#include "sprint/subsample.hpp"
#include "sprint/tensor.hpp"

namespace sprint {

// Depth split and widths of the encoder/middle/decoder transformer.
struct ModelConfig {
  int enc_depth = 2;
  int mid_depth = 8;
  int dec_depth = 2;
  int hidden = 128;  // C
  int heads = 4;
  int patch = 2;
  int num_classes = 4;  // conditioning vocabulary; one extra null slot is appended
  int grid_rows = 8;
  int grid_cols = 8;
  int in_channels = 1;
  bool mask_token_trainable = true;

  int64_t tokens() const { return static_cast<int64_t>(grid_rows) * grid_cols; }
  int token_dim() const { return patch * patch * in_channels; }
  int head_dim() const { return hidden / heads; }
  int null_class() const { return num_classes; }

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    if (enc_depth < 1 || mid_depth < 1 || dec_depth < 1)
      throw std::invalid_argument("ModelConfig: every stage needs at least one block");
    if (hidden <= 0 || heads <= 0 || hidden % heads != 0)
      throw std::invalid_argument("ModelConfig: hidden must be a positive multiple of heads");
    if ((hidden / heads) % 4 != 0)
      throw std::invalid_argument("ModelConfig: head dim must be a multiple of 4 for 2D rotary");
    if (patch <= 0 || grid_rows <= 0 || grid_cols <= 0 || in_channels <= 0)
      throw std::invalid_argument("ModelConfig: non-positive geometry");
    if (num_classes < 1) throw std::invalid_argument("ModelConfig: num_classes < 1");
  }
};

// Flat parameter arena with named, shaped entries. Gradients and moment
// buffers reuse the same layout so elementwise updates are simple loops.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::vector<int64_t> shape;
    int64_t offset = 0;
    int64_t size = 0;
  };

  int64_t add(std::string name, std::vector<int64_t> shape) {
    if (finalized_) throw std::logic_error("ParamStore: add after finalize");
    Entry e;
    e.name = std::move(name);
    e.shape = std::move(shape);
    e.size = Tensor<T>::numel_of(e.shape);
    e.offset = total_;
    total_ += e.size;
    by_name_.emplace(e.name, entries_.size());
    entries_.push_back(std::move(e));
    return static_cast<int64_t>(entries_.size()) - 1;
  }

  void finalize() {
    data_.assign(static_cast<size_t>(total_), T(0));
    finalized_ = true;
  }

  bool has(std::string_view name) const { return by_name_.count(std::string(name)) > 0; }

  const Entry& entry(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end())
      throw std::invalid_argument("ParamStore: no entry named " + std::string(name));
    return entries_[it->second];
  }

  T* ptr(std::string_view name) { return data_.data() + entry(name).offset; }
  const T* ptr(std::string_view name) const { return data_.data() + entry(name).offset; }

  const std::vector<Entry>& entries() const { return entries_; }
  AlignedVec<T>& data() { return data_; }
  const AlignedVec<T>& data() const { return data_; }
  int64_t size() const { return total_; }

  // Same entry layout, zero-filled values.
  ParamStore<T> like() const {
    ParamStore<T> out;
    out.entries_ = entries_;
    out.by_name_ = by_name_;
    out.total_ = total_;
    out.finalize();
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> by_name_;
  AlignedVec<T> data_;
  int64_t total_ = 0;
  bool finalized_ = false;
};

// Resolved pointers into the store for one transformer block.
template <typename T>
struct BlockView {
  T* adaln_w;  // (C, 6C)
  T* adaln_b;  // (6C)
  T* qkv_w;    // (C, 3C)
  T* qkv_b;    // (3C)
  T* qnorm;    // (head_dim)
  T* knorm;    // (head_dim)
  T* out_w;    // (C, C)
  T* out_b;    // (C)
  T* fc1_w;    // (C, 4C)
  T* fc1_b;    // (4C)
  T* fc2_w;    // (4C, C)
  T* fc2_b;    // (C)
};

template <typename T>
struct NetViews {
  T* embed_w;
  T* embed_b;
  T* temb1_w;
  T* temb1_b;
  T* temb2_w;
  T* temb2_b;
  T* class_table;  // (num_classes + 1, C), last row is the null class
  T* mask_token;   // (C)
  T* fusion_w;     // (2C, C)
  T* fusion_b;     // (C)
  T* head_mod_w;   // (C, 2C)
  T* head_mod_b;   // (2C)
  T* head_out_w;   // (C, C_out)
  T* head_out_b;   // (C_out)
  std::vector<BlockView<T>> f, g, h;
};

// Saved activations of one block, retained for the backward pass.
template <typename T>
struct BlockActs {
  Tensor<T> x_in;       // (B, n, C)
  Tensor<T> mod;        // (B, 6C)
  Tensor<T> ln1_mean, ln1_rstd;  // (B*n)
  Tensor<T> qkv;        // (B, n, 3C)
  Tensor<T> q_rrms, k_rrms;      // (B*H*n)
  Tensor<T> probs;      // (B, H, n, n)
  Tensor<T> merged;     // (B, n, C)
  Tensor<T> attn_out;   // (B, n, C)
  Tensor<T> x_mid;      // (B, n, C)
  Tensor<T> ln2_mean, ln2_rstd;  // (B*n)
  Tensor<T> h1;         // (B, n, 4C)
  Tensor<T> mlp_out;    // (B, n, C)
};

// Scratch and saved state for one forward/backward evaluation. Reused across
// steps; buffers grow on demand and are never shrunk.
template <typename T>
struct Workspace {
  // evaluation metadata captured by forward, consumed by backward
  int64_t batch = 0;
  bool keep_acts = false;
  bool shallow = false;  // middle stage skipped (every sample path-dropped)
  DropMask mask;
  std::vector<uint8_t> path_drop;
  std::vector<int> labels;
  std::vector<double> t_vals;

  // embedding / conditioning
  Tensor<T> x_input;   // (B, N, C_in)
  Tensor<T> tsin;      // (B, time_dim)
  Tensor<T> temb_h1;   // (B, C) pre-activation
  Tensor<T> temb_h1s;  // (B, C)
  Tensor<T> cond;      // (B, C)
  Tensor<T> silu_cond; // (B, C)

  Tensor<T> f_t;       // (B, N, C)
  Tensor<T> g_sparse;  // (B, n', C) middle-stage output before padding
  Tensor<T> concat;    // (B, N, 2C)
  Tensor<T> head_in;   // (B, N, C)
  Tensor<T> lnf_mean, lnf_rstd;  // (B*N)
  Tensor<T> head_mod;  // (B, 2C)

  std::vector<BlockActs<T>> facts, gacts, hacts;
  BlockActs<T> transient;  // stands in for all blocks when keep_acts is false

  Tensor<T> rope_cos_kept, rope_sin_kept;  // (n', hd/2)

  // forward scratch
  Tensor<T> cur;    // (B, N, C)
  Tensor<T> gcur;   // (B, N, C) sparse running buffer (allocated at N, used at n')
  Tensor<T> gpad;   // (B, N, C)
  Tensor<T> s1, s2, s3;  // (B, N, C)
  Tensor<T> q, k, v, q2, k2, heads_out;  // (B, H, N, hd)
  Tensor<T> big;    // (B, N, 4C)

  // backward scratch
  Tensor<T> dcur, dtmp, dbranch, df_t, dgcur;  // (B, N, C)
  Tensor<T> dqkv;       // (B, N, 3C)
  Tensor<T> dq, dk, dv, dheads;  // (B, H, N, hd)
  Tensor<T> dprobs;     // (B, H, N, N)
  Tensor<T> dbig, dbig2; // (B, N, 4C)
  Tensor<T> dmod;       // (B, 6C)
  Tensor<T> dconcat;    // (B, N, 2C)
  Tensor<T> dcond, dsilu_cond, dhead_mod, dtemb1;  // (B, C) / (B, 2C)
};

inline constexpr int kTimeFeatureDim = 256;

// The network: dense encoder f, droppable middle g, dense decoder h, a
// learned mask token, and a 2C->C fusion projection joining the encoder
// output with the (padded) middle output. Blocks are AdaLN-zero conditioned
// self-attention + feed-forward with QK RMS norm and 2D rotary positions.
template <typename T>
class Net {
 public:
  explicit Net(const ModelConfig& config);
  Net(const Net&) = delete;
  Net& operator=(const Net&) = delete;

  // Fills parameters: normal(0, 0.02) for projection weights, ones for norm
  // gains, zeros for biases, modulation layers, and the output projection
  // (fresh blocks are identity maps and the fresh network outputs zero).
  void init_params(Rng& rng);

  // x: (batch, N, C_in) interpolant tokens; t in [0,1] per sample; labels in
  // [0, num_classes] (num_classes = null); mask: shared keep set or nullptr
  // for keep-all; path_drop: per-sample flag replacing the padded middle
  // output with the mask token everywhere. out: (batch, N, C_out).
  // When every sample is path-dropped the middle stage is skipped entirely.
  void forward(const T* x, int64_t batch, const double* t, const int* labels,
               const DropMask* mask, const uint8_t* path_drop, Workspace<T>& ws,
               bool keep_acts, T* out) const;

  // Parameter gradients for the forward recorded in ws (requires
  // keep_acts=true). grads must share this net's entry layout; overwritten.
  void backward(Workspace<T>& ws, const T* dout, ParamStore<T>& grads) const;

  void reset_counters() const { full_passes = 0; shallow_passes = 0; }

  ModelConfig cfg;
  ParamStore<T> params;
  NetViews<T> views;
  RopeTable rope_table;
  Tensor<T> rope_cos, rope_sin;  // (N, head_dim/2) full-grid tables
  mutable std::atomic<int64_t> full_passes{0};
  mutable std::atomic<int64_t> shallow_passes{0};

  // Re-resolves views after params.data() may have been replaced (checkpoint
  // load writes through the store, so this is only needed internally).
  void bind();

  // Runs one transformer block in place over x (batch, n, hidden). Exposed so
  // single blocks can be exercised on arbitrary token subsets.
  void run_block(const BlockView<T>& bv, BlockActs<T>& acts, Workspace<T>& ws, T* x,
                 int64_t batch, int64_t n, const T* cos_t, const T* sin_t) const;

 private:
  void run_block_bwd(const BlockView<T>& bv, const BlockActs<T>& acts, Workspace<T>& ws,
                     T* dx, int64_t batch, int64_t n, const T* cos_t, const T* sin_t,
                     BlockView<T> gv, T* dsilu_cond) const;
  BlockView<T> block_view(ParamStore<T>& store, const std::string& prefix) const;
};

// Spec-level conveniences over TokenBatch. cond is the per-sample
// conditioning vector (timestep + class embedding, pre-activation).
template <typename T>
TokenBatch<T> block_forward(const Net<T>& net, char stage, int index,
                            const TokenBatch<T>& tokens, const Tensor<T>& cond);

template <typename T>
TokenBatch<T> fuse(const TokenBatch<T>& f_t, const TokenBatch<T>& g_pad, const T* fusion_w,
                   const T* fusion_b, int64_t c);

template <typename T>
TokenBatch<T> forward_pretrain(const Net<T>& net, const TokenBatch<T>& x_t,
                               const std::vector<double>& t, const std::vector<int>& labels,
                               const DropMask& mask, const std::vector<uint8_t>& path_drop,
                               Workspace<T>& ws, bool keep_acts = false);

template <typename T>
TokenBatch<T> forward_full(const Net<T>& net, const TokenBatch<T>& x_t,
                           const std::vector<double>& t, const std::vector<int>& labels,
                           const std::vector<uint8_t>& path_drop, Workspace<T>& ws,
                           bool keep_acts = false);

}  // namespace sprint
