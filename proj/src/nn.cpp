#include "dsgsum/nn.hpp"

#include <cmath>
#include <limits>

namespace dsgsum {

Tensor linear(const LinearP& p, const Tensor& x, double dropout_p) {
  return add(matmul(dropout(x, dropout_p), p.w), p.b);
}

Tensor apply_ln(const LayerNormP& p, const Tensor& x, double eps) {
  return layer_norm(x, p.gain, p.bias, eps);
}

Tensor apply_ffn(const FfnP& p, const Tensor& x, double dropout_p) {
  return linear(p.fc2, relu(linear(p.fc1, x, dropout_p)), dropout_p);
}

std::vector<uint8_t> build_attn_mask(int64_t tq, int64_t tk,
                                     const std::vector<uint8_t>* key_valid, bool causal) {
  std::vector<uint8_t> mask(static_cast<size_t>(tq * tk), 0);
  for (int64_t i = 0; i < tq; ++i) {
    for (int64_t j = 0; j < tk; ++j) {
      bool blocked = false;
      if (causal && j > i) blocked = true;
      if (key_valid != nullptr && !(*key_valid)[j]) blocked = true;
      mask[i * tk + j] = blocked ? 1 : 0;
    }
  }
  return mask;
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v,
              const std::vector<uint8_t>& mask, const Tensor* g) {
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor logits = scale(matmul_nt(q, k), inv_sqrt_dk);
  logits = masked_fill(logits, mask, -std::numeric_limits<double>::infinity());
  Tensor weights = softmax_rows(logits);
  if (g != nullptr) weights = add(weights, *g);
  return matmul(weights, v);
}

Tensor mha(const MhaP& p, const Tensor& q_in, const Tensor& kv_in,
           const std::vector<uint8_t>& mask, double dropout_p, const Tensor* g) {
  const int64_t d = p.wq.w.cols();
  const int heads = p.heads;
  DSG_CHECK(d % heads == 0, "model width " << d << " not divisible by " << heads << " heads");
  const int64_t dh = d / heads;
  Tensor q = linear(p.wq, q_in, dropout_p);
  Tensor k = linear(p.wk, kv_in, dropout_p);
  Tensor v = linear(p.wv, kv_in, dropout_p);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    outs.push_back(attend(qh, kh, vh, mask, g));
  }
  return linear(p.wo, concat_cols(outs), dropout_p);
}

Tensor lstm_dir(const LstmDirP& p, const Tensor& x, bool reverse, double dropout_p) {
  const int64_t len = x.rows();
  const int64_t hidden = p.w_hh.rows();
  Tensor xd = dropout(x, dropout_p);
  Tensor h = Tensor::zeros({1, hidden});
  Tensor c = Tensor::zeros({1, hidden});
  std::vector<Tensor> outs(static_cast<size_t>(len));
  for (int64_t step = 0; step < len; ++step) {
    const int64_t t = reverse ? len - 1 - step : step;
    Tensor xt = slice_rows(xd, t, t + 1);
    Tensor gates = add(add(matmul(xt, p.w_ih), matmul(h, p.w_hh)), p.b);
    Tensor in_g = sigmoid(slice_cols(gates, 0, hidden));
    Tensor forget_g = sigmoid(slice_cols(gates, hidden, 2 * hidden));
    Tensor cand = tanh(slice_cols(gates, 2 * hidden, 3 * hidden));
    Tensor out_g = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden));
    c = add(mul(forget_g, c), mul(in_g, cand));
    h = mul(out_g, tanh(c));
    outs[static_cast<size_t>(t)] = h;
  }
  return concat_rows(outs);
}

Tensor bilstm(const BiLstmP& p, const Tensor& x, double dropout_p) {
  DSG_CHECK(!p.fwd.empty() && p.fwd.size() == p.bwd.size(), "malformed BiLSTM parameters");
  Tensor cur = x;
  for (size_t layer = 0; layer < p.fwd.size(); ++layer) {
    Tensor f = lstm_dir(p.fwd[layer], cur, false, dropout_p);
    Tensor b = lstm_dir(p.bwd[layer], cur, true, dropout_p);
    cur = concat_cols({f, b});
  }
  return cur;
}

}  // namespace dsgsum
