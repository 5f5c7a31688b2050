#include "cabin/model.hpp"

#include <cmath>
#include <cstdio>

#include "cabin/chain.hpp"
#include "cabin/vocab.hpp"

namespace cabin::model {

using namespace cabin::num;

Tensor forward(const Tensor& embeddings, ParamStore& params,
               const Config& cfg) {
  const std::size_t s = embeddings.rows();
  const std::size_t c = cfg.d_model;
  if (embeddings.cols() != c)
    throw DimensionError("model expects width " + std::to_string(c) +
                         ", sequence has " + std::to_string(embeddings.cols()));
  if (s > cfg.max_seq_len)
    throw SizeError("sequence length " + std::to_string(s) +
                    " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  const std::size_t heads = cfg.n_heads;
  const std::size_t dh = c / heads;

  Tensor x = add(embeddings, slice_rows(params.get("pos.embed"), 0, s));
  for (std::size_t layer = 0; layer < cfg.n_layers; ++layer) {
    const std::string p = "layer" + std::to_string(layer) + ".";
    Tensor h = layer_norm(x, params.get(p + "ln1.gain"),
                          params.get(p + "ln1.bias"));
    Tensor q = matmul(h, params.get(p + "attn.wq"));
    Tensor k = matmul(h, params.get(p + "attn.wk"));
    Tensor v = matmul(h, params.get(p + "attn.wv"));
    std::vector<Tensor> head_outs;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      Tensor qh = slice_cols(q, hd * dh, dh);
      Tensor kh = slice_cols(k, hd * dh, dh);
      Tensor vh = slice_cols(v, hd * dh, dh);
      Tensor scores = scale(matmul(qh, transpose(kh)),
                            1.0 / std::sqrt(static_cast<double>(dh)));
      head_outs.push_back(matmul(causal_softmax(scores), vh));
    }
    Tensor attn = matmul(concat_cols(head_outs), params.get(p + "attn.wo"));
    x = add(x, attn);

    Tensor h2 = layer_norm(x, params.get(p + "ln2.gain"),
                           params.get(p + "ln2.bias"));
    Tensor m = tanh_op(broadcast_add_row(matmul(h2, params.get(p + "mlp.w1")),
                                         params.get(p + "mlp.b1")));
    Tensor mlp = broadcast_add_row(matmul(m, params.get(p + "mlp.w2")),
                                   params.get(p + "mlp.b2"));
    x = add(x, mlp);
  }
  x = layer_norm(x, params.get("final.ln.gain"), params.get("final.ln.bias"));
  return broadcast_add_row(matmul(x, params.get("out.weight")),
                           params.get("out.bias"));
}

LossBreakdown total_loss(const streams::AssembledSequence& seq,
                         const Tensor& cot, ParamStore& params,
                         const Config& cfg, double lambda_lce) {
  const std::size_t s = seq.embeddings.rows();
  if (s < 2) throw SizeError("loss needs at least two positions");
  Tensor logits = forward(seq.embeddings, params, cfg);

  // Position i predicts token i+1, so logits lose the last row and targets
  // with their mask lose the first.
  std::vector<int> targets(seq.ids.begin() + 1, seq.ids.end());
  std::vector<char> mask(seq.loss_mask.begin() + 1, seq.loss_mask.end());
  bool any = false;
  for (char m : mask) any |= (m != 0);
  if (!any)
    std::fprintf(stderr, "warning: sequence with no supervised positions\n");

  LossBreakdown out;
  out.lvi = cross_entropy(slice_rows(logits, 0, s - 1), targets, mask);
  out.lce_raw = chain::lce_loss(cot);
  out.total = add(out.lvi, scale(out.lce_raw, lambda_lce));
  return out;
}

std::vector<int> generate(const streams::AssembledSequence& prefix,
                          ParamStore& params, const Config& cfg,
                          std::size_t max_new_tokens) {
  TapeScope no_tape(nullptr);
  Tensor emb = prefix.embeddings;
  const Tensor& table = params.get("vocab.embed");
  std::vector<int> out;
  for (std::size_t n = 0; n < max_new_tokens; ++n) {
    if (emb.rows() >= cfg.max_seq_len) break;  // context window full
    Tensor logits = forward(emb, params, cfg);
    const std::size_t last = logits.rows() - 1;
    int best = 0;
    double best_val = logits.at(last, 0);
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits.at(last, j) > best_val) {  // ties keep the lowest id
        best_val = logits.at(last, j);
        best = static_cast<int>(j);
      }
    if (best == data::Vocab::kCos) break;
    out.push_back(best);
    emb = concat_rows({emb, embed_rows(table, {best})});
  }
  return out;
}

}  // namespace cabin::model
