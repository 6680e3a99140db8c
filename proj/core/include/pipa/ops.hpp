#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pipa/tensor.hpp"

namespace pipa {

// ---- elementwise -----------------------------------------------------------
// Tensor-tensor forms require equal shapes; scalar forms broadcast the scalar.

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, double b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, double b);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
/// relu with subgradient 0 at the origin.
Tensor relu(const Tensor& a);
Tensor scale(const Tensor& a, double s);

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

/// Cross-correlation of x[B x C x H x W] with w[F x C x k x k].
/// k in {1,3}, stride in {1,2}; the output extent must come out integral.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);

/// x[B x F x H x W] + b[F] broadcast over batch and space.
Tensor bias_add_channels(const Tensor& x, const Tensor& b);
/// x[N x M] + b[M] broadcast over rows.
Tensor bias_add_cols(const Tensor& x, const Tensor& b);

// ---- losses ----------------------------------------------------------------

/// Mean of -log softmax(logits)[target] over rows whose target is not
/// ignore_index and whose mask entry (when given) is true. Stabilized by
/// row-max subtraction. Returns exactly 0 when no row survives.
Tensor softmax_ce(const Tensor& logits, const std::vector<int>& targets, int ignore_index,
                  const std::vector<std::uint8_t>* mask = nullptr);

// ---- reductions and views --------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Global max; subgradient goes to the first attaining element.
Tensor max(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose2d(const Tensor& a);
/// Picks rows of a [N x D] matrix; backward scatter-adds.
Tensor gather_rows(const Tensor& a, const std::vector<int>& rows);
/// Bilinear resize of x[B x C x H x W] (align-corners-false sampling).
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

/// [B x C x H x W] -> [(B*H*W) x C] with rows ordered batch-major, then
/// row-major over space. rows_to_nchw is its exact inverse.
Tensor nchw_to_rows(const Tensor& x);
Tensor rows_to_nchw(const Tensor& x, int b, int c, int h, int w);

/// Rows scaled to unit L2 norm: y_i = x_i / sqrt(|x_i|^2 + eps).
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

/// exp(<a,b>/tau) for unit vectors; plain value helper shared by the
/// contrastive losses and their tests.
double exp_cos_sim(const std::vector<double>& a, const std::vector<double>& b, double tau);

// ---- softmax utility (no graph) ---------------------------------------------

/// Row-wise softmax probabilities of a [N x C] matrix of plain values.
void softmax_rows(const double* logits, int n, int c, double* probs);

}  // namespace pipa
