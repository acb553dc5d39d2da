#pragma once

#include <vector>

#include "dsgsum/tensor.hpp"

namespace dsgsum {

struct LinearP {
  Tensor w;  // [in, out]
  Tensor b;  // [1, out]
};

// dropout is applied to the input (train-time only), matching the training
// regime of dropout before every linear layer
Tensor linear(const LinearP& p, const Tensor& x, double dropout_p);

struct LayerNormP {
  Tensor gain;  // [1, d]
  Tensor bias;  // [1, d]
};

Tensor apply_ln(const LayerNormP& p, const Tensor& x, double eps = 1e-5);

struct FfnP {
  LinearP fc1;
  LinearP fc2;
};

// fc2(relu(fc1(x)))
Tensor apply_ffn(const FfnP& p, const Tensor& x, double dropout_p);

// blocked entries (mask != 0) receive -inf logits; mask is [tq * tk]
std::vector<uint8_t> build_attn_mask(int64_t tq, int64_t tk,
                                     const std::vector<uint8_t>* key_valid, bool causal);

// scaled dot-product attention over full vectors:
//   out = (softmax(q k^T / sqrt(d_k)) [+ g]) v
// g, when given, is the token-independent additive weight matrix; the
// combined weights are intentionally not renormalized
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v,
              const std::vector<uint8_t>& mask, const Tensor* g = nullptr);

struct MhaP {
  LinearP wq, wk, wv, wo;
  int heads = 1;
};

Tensor mha(const MhaP& p, const Tensor& q_in, const Tensor& kv_in,
           const std::vector<uint8_t>& mask, double dropout_p, const Tensor* g = nullptr);

struct LstmDirP {
  Tensor w_ih;  // [in, 4H], gate order i f g o
  Tensor w_hh;  // [H, 4H]
  Tensor b;     // [1, 4H]
};

struct BiLstmP {
  std::vector<LstmDirP> fwd;  // one per layer
  std::vector<LstmDirP> bwd;
  int hidden = 0;
};

// per-position outputs of one direction, rows aligned with input positions
Tensor lstm_dir(const LstmDirP& p, const Tensor& x, bool reverse, double dropout_p);

// stacked Bi-LSTM; returns the top layer's [L, 2H] outputs
Tensor bilstm(const BiLstmP& p, const Tensor& x, double dropout_p);

}  // namespace dsgsum
