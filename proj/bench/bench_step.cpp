#include <chrono>
#include <cstdio>
#include <functional>

#include "sprint/flow.hpp"
#include "sprint/net.hpp"
#include "sprint/rng.hpp"
#include "sprint/subsample.hpp"
#include "sprint/train.hpp"

using namespace sprint;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warmup
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

}  // namespace

// Times the phases of one training step at the default desk-scale shape so
// kernel work can be attributed: forward, backward, optimizer tail, full step.
int main() {
  ModelConfig mc;
  mc.hidden = 128;
  mc.heads = 4;
  mc.patch = 2;
  mc.grid_rows = 8;
  mc.grid_cols = 8;
  mc.in_channels = 1;
  mc.enc_depth = 2;
  mc.mid_depth = 8;
  mc.dec_depth = 2;
  mc.num_classes = 4;

  TrainConfig tc;
  const int64_t batch = 64;

  TrainState st(mc, 1);
  Rng rng(2);

  int64_t n = mc.tokens(), d = mc.token_dim();
  Tensor<float> x0({batch, n, d}), eps({batch, n, d}), xt({batch, n, d});
  Tensor<float> vt({batch, n, d}), grad({batch, n, d}), out({batch, n, d});
  for (int64_t i = 0; i < x0.numel(); ++i) x0[i] = static_cast<float>(rng.normal());
  for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = static_cast<float>(rng.normal());
  std::vector<double> t(batch, 0.5);
  std::vector<int> labels(batch, 1);
  std::vector<uint8_t> pd(batch, 0);
  interpolate(x0, eps, t, xt, vt);

  DropMask mask = structured_mask(mc.grid_rows, mc.grid_cols, 2, 1, rng);
  DropMask keep_all = keep_all_mask(n);

  auto fwd = [&](const DropMask* m) {
    st.net.forward(xt.data(), batch, t.data(), labels.data(), m, pd.data(), st.ws, true,
                   out.data());
  };
  double fwd_sparse = time_of([&] { fwd(&mask); }, 5);
  double fwd_dense = time_of([&] { fwd(&keep_all); }, 5);

  velocity_loss_grad(out, vt, grad);
  fwd(&mask);
  double bwd_sparse = time_of([&] { st.net.backward(st.ws, grad.data(), st.grads); }, 5);
  fwd(&keep_all);
  double bwd_dense = time_of([&] { st.net.backward(st.ws, grad.data(), st.grads); }, 5);

  double tail = time_of(
      [&] {
        clip_grads(st.grads, tc.clip);
        ema_update(st.ema, st.net.params, tc.ema_decay);
      },
      5);

  Tensor<float> images({batch, 16, 16, 1});
  for (int64_t i = 0; i < images.numel(); ++i) images[i] = static_cast<float>(rng.normal());
  double pre = time_of([&] { pretrain_step(st, images, labels, tc); }, 5);
  st.phase = Phase::finetune;
  st.phase_iter = 0;
  double fin = time_of([&] { finetune_step(st, images, labels, tc); }, 5);

  std::printf("forward   sparse %7.1f ms   dense %7.1f ms\n", fwd_sparse * 1e3,
              fwd_dense * 1e3);
  std::printf("backward  sparse %7.1f ms   dense %7.1f ms\n", bwd_sparse * 1e3,
              bwd_dense * 1e3);
  std::printf("clip+ema         %7.1f ms\n", tail * 1e3);
  std::printf("pretrain_step    %7.1f ms   finetune_step %7.1f ms\n", pre * 1e3, fin * 1e3);
  return 0;
}
