"""Per-user sampled training objective and its exact analytic gradients.

The loss for one user sums elementwise logistic losses over the observed
positives plus the sampled negatives of both views, a cross-view penalty
tying the two codes together, and l2 terms on all tensors. Targets are
the clean binary values even though the encoded inputs are corrupted.

Gradient derivation, with e = prediction - target per coordinate:
    d/d(dec_w row j) = e_j * fused            d/d(dec_b_j) = e_j
    g_fused          = sum_j e_j * dec_w[j]   over both decoders
    g_zr = alpha*g_fused     + 2*beta*(d_r - M1^T d_t)
    g_zt = (1-alpha)*g_fused + 2*beta*(d_t - M0^T d_r)
        where d_r = z_r - M0 z_t, d_t = z_t - M1 z_r
    d/d(enc pre-activation) = g_z * z * (1 - z)
    d/d(enc_w row i) = input_value_i * g_pre   (zeroed inputs contribute nothing)
    d/d(M0) = -2*beta * outer(d_r, z_t), likewise M1.

`decay_scale` scales only the l2 terms: the trainer passes 1/n so that a
sweep over all users applies one full decay step per epoch, while scale
1.0 gives the plain global objective.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import ForwardTrace, Hyperparams, ModelParams, clamp_probs


@dataclass
class LossBreakdown:
    rating_recon: float
    trust_recon: float
    correlative: float
    weight_decay: float
    map_decay: float
    total: float

    _FIELDS = ("rating_recon", "trust_recon", "correlative",
               "weight_decay", "map_decay", "total")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in self._FIELDS)


@dataclass
class Gradients:
    """Dense gradient, one array per model tensor with identical shape."""

    rating_enc_w: np.ndarray
    trust_enc_w: np.ndarray
    rating_enc_b: np.ndarray
    trust_enc_b: np.ndarray
    rating_dec_w: np.ndarray
    rating_dec_b: np.ndarray
    trust_dec_w: np.ndarray
    trust_dec_b: np.ndarray
    map_trust_to_rating: np.ndarray
    map_rating_to_trust: np.ndarray
    user_vecs: np.ndarray | None = None

    def tensors(self):
        for name in ("rating_enc_w", "trust_enc_w", "rating_enc_b", "trust_enc_b",
                     "rating_dec_w", "rating_dec_b", "trust_dec_w", "trust_dec_b",
                     "map_trust_to_rating", "map_rating_to_trust", "user_vecs"):
            arr = getattr(self, name)
            if arr is not None:
                yield name, arr


class SparseStep(NamedTuple):
    """Data-dependent gradient pieces, indexed by the touched rows only.

    Decay is deliberately excluded; the trainer applies it multiplicatively
    and `user_gradients` scatters these pieces plus decay into dense form.
    """

    rating_enc_rows: np.ndarray
    rating_enc_vals: np.ndarray
    trust_enc_rows: np.ndarray
    trust_enc_vals: np.ndarray
    rating_enc_b: np.ndarray
    trust_enc_b: np.ndarray
    rating_dec_rows: np.ndarray
    rating_dec_vals: np.ndarray
    rating_dec_b_vals: np.ndarray
    trust_dec_rows: np.ndarray
    trust_dec_vals: np.ndarray
    trust_dec_b_vals: np.ndarray
    map_trust_to_rating: np.ndarray
    map_rating_to_trust: np.ndarray
    user_vec: np.ndarray | None


def logistic_loss(y, y_hat):
    """Elementwise -y*log(p) - (1-y)*log(1-p), with p clamped away from {0,1}."""
    p = clamp_probs(np.asarray(y_hat, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def correlative_term(z_rating: np.ndarray, z_trust: np.ndarray,
                     map_t2r: np.ndarray, map_r2t: np.ndarray) -> float:
    """Squared residuals of predicting each view's code from the other."""
    d_r = z_rating - map_t2r @ z_trust
    d_t = z_trust - map_r2t @ z_rating
    return float(d_r @ d_r + d_t @ d_t)


def _check_targets(trace: ForwardTrace, targets_r, targets_t):
    idx_r, y_r = targets_r
    idx_t, y_t = targets_t
    if len(idx_r) != len(trace.rating_idx) or len(idx_t) != len(trace.trust_idx):
        raise ValueError("targets do not match the traced forward pass")
    return (np.asarray(idx_r), np.asarray(y_r, dtype=np.float64),
            np.asarray(idx_t), np.asarray(y_t, dtype=np.float64))


def user_loss(params: ModelParams, hp: Hyperparams, trace: ForwardTrace,
              targets_r, targets_t, decay_scale: float = 1.0) -> LossBreakdown:
    """Loss of one user over their sampled coordinate sets.

    `targets_r` / `targets_t` are (indices, binary targets) pairs aligned
    with the coordinates the trace was evaluated at.
    """
    _, y_r, _, y_t = _check_targets(trace, targets_r, targets_t)
    rating_recon = float(logistic_loss(y_r, trace.rating_pred).sum())
    trust_recon = float(logistic_loss(y_t, trace.trust_pred).sum())
    corr = correlative_term(trace.z_rating, trace.z_trust,
                            params.map_trust_to_rating, params.map_rating_to_trust)
    wd = decay_scale * sum(
        float((arr * arr).sum())
        for name, arr in params.tensors()
        if name not in ("map_trust_to_rating", "map_rating_to_trust"))
    md = decay_scale * (float((params.map_trust_to_rating ** 2).sum())
                        + float((params.map_rating_to_trust ** 2).sum()))
    total = (rating_recon + trust_recon + hp.beta * corr
             + 0.5 * hp.weight_decay * wd + 0.5 * hp.map_decay * md)
    return LossBreakdown(rating_recon=rating_recon, trust_recon=trust_recon,
                         correlative=corr, weight_decay=wd, map_decay=md,
                         total=total)


def backprop_core(hp: Hyperparams, k: int, rating_in, trust_in,
                  z_r: np.ndarray, z_t: np.ndarray, fused: np.ndarray,
                  idx_r: np.ndarray, e_r: np.ndarray, dec_rows_r: np.ndarray,
                  idx_t: np.ndarray, e_t: np.ndarray, dec_rows_t: np.ndarray,
                  m0: np.ndarray, m1: np.ndarray,
                  want_user_vec: bool) -> SparseStep:
    """Shared backprop math on pre-gathered rows.

    `dec_rows_r` / `dec_rows_t` are the decoder weight rows at the target
    coordinates; `e_*` the prediction-minus-target residuals there.
    """
    g_fused = dec_rows_r.T @ e_r + dec_rows_t.T @ e_t

    if hp.beta != 0.0:
        d_r = z_r - m0 @ z_t
        d_t = z_t - m1 @ z_r
        g_zr = hp.alpha * g_fused + 2.0 * hp.beta * (d_r - m1.T @ d_t)
        g_zt = (1.0 - hp.alpha) * g_fused + 2.0 * hp.beta * (d_t - m0.T @ d_r)
        g_m0 = -2.0 * hp.beta * np.outer(d_r, z_t)
        g_m1 = -2.0 * hp.beta * np.outer(d_t, z_r)
    else:
        g_zr = hp.alpha * g_fused
        g_zt = (1.0 - hp.alpha) * g_fused
        g_m0 = np.zeros((k, k))
        g_m1 = np.zeros((k, k))

    g_pre_r = g_zr * z_r * (1.0 - z_r)
    g_pre_t = g_zt * z_t * (1.0 - z_t)

    return SparseStep(
        rating_enc_rows=rating_in.indices,
        rating_enc_vals=np.broadcast_to(
            rating_in.value * g_pre_r, (len(rating_in.indices), k)),
        trust_enc_rows=trust_in.indices,
        trust_enc_vals=np.broadcast_to(
            trust_in.value * g_pre_t, (len(trust_in.indices), k)),
        rating_enc_b=g_pre_r,
        trust_enc_b=g_pre_t,
        rating_dec_rows=idx_r,
        rating_dec_vals=e_r[:, None] * fused[None, :],
        rating_dec_b_vals=e_r,
        trust_dec_rows=idx_t,
        trust_dec_vals=e_t[:, None] * fused[None, :],
        trust_dec_b_vals=e_t,
        map_trust_to_rating=g_m0,
        map_rating_to_trust=g_m1,
        user_vec=(g_pre_r + g_pre_t) if want_user_vec else None,
    )


def backprop(params: ModelParams, hp: Hyperparams, trace: ForwardTrace,
             targets_r, targets_t) -> SparseStep:
    """Data gradient of one user's reconstruction + cross-view loss.

    Target indices within each view must be distinct (observed and sampled
    sets are disjoint by construction), otherwise the sparse row updates
    would collide.
    """
    idx_r, y_r, idx_t, y_t = _check_targets(trace, targets_r, targets_t)
    return backprop_core(
        hp, params.k, trace.rating_in, trace.trust_in,
        trace.z_rating, trace.z_trust, trace.fused,
        idx_r, trace.rating_pred - y_r, params.rating_dec_w[idx_r],
        idx_t, trace.trust_pred - y_t, params.trust_dec_w[idx_t],
        params.map_trust_to_rating, params.map_rating_to_trust,
        want_user_vec=params.user_vecs is not None)


def user_gradients(params: ModelParams, hp: Hyperparams, trace: ForwardTrace,
                   targets_r, targets_t, decay_scale: float = 1.0) -> Gradients:
    """Dense exact gradient of `user_loss` with respect to every tensor."""
    step = backprop(params, hp, trace, targets_r, targets_t)
    lam_w = decay_scale * hp.weight_decay
    lam_m = decay_scale * hp.map_decay

    grads = Gradients(
        rating_enc_w=lam_w * params.rating_enc_w,
        trust_enc_w=lam_w * params.trust_enc_w,
        rating_enc_b=lam_w * params.rating_enc_b + step.rating_enc_b,
        trust_enc_b=lam_w * params.trust_enc_b + step.trust_enc_b,
        rating_dec_w=lam_w * params.rating_dec_w,
        rating_dec_b=lam_w * params.rating_dec_b,
        trust_dec_w=lam_w * params.trust_dec_w,
        trust_dec_b=lam_w * params.trust_dec_b,
        map_trust_to_rating=lam_m * params.map_trust_to_rating + step.map_trust_to_rating,
        map_rating_to_trust=lam_m * params.map_rating_to_trust + step.map_rating_to_trust,
        user_vecs=lam_w * params.user_vecs if params.user_vecs is not None else None,
    )
    grads.rating_enc_w[step.rating_enc_rows] += step.rating_enc_vals
    grads.trust_enc_w[step.trust_enc_rows] += step.trust_enc_vals
    grads.rating_dec_w[step.rating_dec_rows] += step.rating_dec_vals
    grads.rating_dec_b[step.rating_dec_rows] += step.rating_dec_b_vals
    grads.trust_dec_w[step.trust_dec_rows] += step.trust_dec_vals
    grads.trust_dec_b[step.trust_dec_rows] += step.trust_dec_b_vals
    if step.user_vec is not None:
        grads.user_vecs[trace.user] += step.user_vec

    for name, arr in grads.tensors():
        if not np.isfinite(arr).all():
            raise FloatingPointError(f"non-finite gradient in {name}")
    return grads
