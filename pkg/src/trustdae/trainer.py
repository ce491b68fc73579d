"""Per-user sampled SGD with keyed random streams and per-epoch telemetry.

Each (epoch, user) pair owns independent sub-streams for corruption,
item negatives and user negatives, all derived from the master seed.
Runs with the same seed are therefore bit-identical, and variants that
differ only in loss coefficients consume randomness identically.

l2 decay is folded into a per-tensor scale factor: one multiplication per
user step instead of a full-matrix subtraction, so the per-epoch cost
stays proportional to the interaction count times the latent dimension.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .model import (Hyperparams, ModelParams, Row, corrupt, forward_sampled,
                    fuse, init_params, sigmoid)
from .objective import (LossBreakdown, backprop_core, correlative_term,
                        logistic_loss)
from .sparse import SparseInteractions

# purpose tags for the keyed streams
_CORRUPT, _ITEM_NEG, _USER_NEG, _EVAL_ITEM, _EVAL_USER, _SHUFFLE = range(6)


class TrainingError(RuntimeError):
    pass


@dataclass
class EpochStats:
    epoch: int
    loss: LossBreakdown
    wall_time: float
    param_norm: float


@dataclass
class TrainLog:
    epochs: list[EpochStats]
    stop_reason: str = "max_epochs"

    CSV_HEADER = ("epoch,rating_recon,trust_recon,correlative,"
                  "weight_decay,map_decay,total,param_norm,wall_time")

    def csv_rows(self) -> list[str]:
        rows = [self.CSV_HEADER]
        for e in self.epochs:
            parts = [str(e.epoch)] + [repr(v) for v in e.loss.as_tuple()]
            parts += [repr(e.param_norm), repr(e.wall_time)]
            rows.append(",".join(parts))
        return rows


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, tag, ...) key."""
    return np.random.default_rng((seed,) + key)


class _Scaled:
    """A tensor stored as scale * array so decay is O(1) per step."""

    __slots__ = ("arr", "scale")

    def __init__(self, arr: np.ndarray):
        self.arr = arr.astype(np.float64, copy=True)
        self.scale = 1.0

    def decay(self, factor: float) -> None:
        self.scale *= factor

    def rows(self, idx) -> np.ndarray:
        return self.arr[idx] * self.scale

    def sub_rows(self, idx, vals, lr: float) -> None:
        self.arr[idx] -= (lr / self.scale) * vals

    def sub(self, vals, lr: float) -> None:
        self.arr -= (lr / self.scale) * vals

    def value(self) -> np.ndarray:
        return self.arr * self.scale


class _ScaledParams:
    """All model tensors in scaled form, snapshottable to ModelParams."""

    def __init__(self, params: ModelParams):
        self.t = {name: _Scaled(arr) for name, arr in params.tensors()}
        self.has_user_vecs = params.user_vecs is not None

    def snapshot(self) -> ModelParams:
        kw = {name: s.value() for name, s in self.t.items()}
        if not self.has_user_vecs:
            kw["user_vecs"] = None
        return ModelParams(**kw)


def per_user_cost(train: SparseInteractions, hp: Hyperparams) -> int:
    """Multiply-accumulate budget of one epoch: sampled coordinates times k.

    The implementation must stay within a constant factor of this count;
    it is what makes the per-epoch cost independent of the full n*m grid.
    """
    total = 0
    r_counts = train.counts("rating")
    t_counts = train.counts("trust")
    for o_r, o_t in zip(r_counts.tolist(), t_counts.tolist()):
        s_r = min(o_r, train.m - o_r)
        s_t = min(o_t, train.n - o_t)
        total += (o_r + s_r + o_t + s_t) * hp.latent_dim
    return total


def _user_targets(train: SparseInteractions, u: int, rng_items, rng_users):
    """Clean binary targets over observed positives plus fresh negatives."""
    pos_r = train.row(u, "rating")
    pos_t = train.row(u, "trust")
    neg_r = train.sample_item_negatives(u, rng_items)
    neg_t = train.sample_user_negatives(u, rng_users)
    idx_r = np.concatenate([pos_r, neg_r])
    idx_t = np.concatenate([pos_t, neg_t])
    y_r = np.concatenate([np.ones(len(pos_r)), np.zeros(len(neg_r))])
    y_t = np.concatenate([np.ones(len(pos_t)), np.zeros(len(neg_t))])
    return (idx_r, y_r), (idx_t, y_t), pos_r, pos_t


def _epoch_loss(scaled: _ScaledParams, train: SparseInteractions, hp: Hyperparams,
                epoch: int) -> tuple[LossBreakdown, float]:
    """Mean per-user loss on clean inputs with freshly sampled negatives.

    The decay norms are identical for every user of a frozen snapshot, so
    they are computed once and folded in analytically; only reconstruction
    and the cross-view residual are accumulated per user.
    """
    params = scaled.snapshot()
    n = train.n
    rating_sum = trust_sum = corr_sum = 0.0
    for u in range(n):
        targets_r, targets_t, pos_r, pos_t = _user_targets(
            train, u,
            stream(hp.seed, _EVAL_ITEM, epoch, u),
            stream(hp.seed, _EVAL_USER, epoch, u))
        trace = forward_sampled(params, hp, Row(pos_r, 1.0), Row(pos_t, 1.0),
                                targets_r[0], targets_t[0], user=u)
        rating_u = float(logistic_loss(targets_r[1], trace.rating_pred).sum())
        trust_u = float(logistic_loss(targets_t[1], trace.trust_pred).sum())
        corr_u = correlative_term(trace.z_rating, trace.z_trust,
                                  params.map_trust_to_rating,
                                  params.map_rating_to_trust)
        if not np.isfinite(rating_u + trust_u + corr_u):
            raise TrainingError(f"non-finite loss at epoch {epoch}, user {u}")
        rating_sum += rating_u
        trust_sum += trust_u
        corr_sum += corr_u
    wd = sum(float((arr * arr).sum()) for name, arr in params.tensors()
             if name not in ("map_trust_to_rating", "map_rating_to_trust")) / n
    md = (float((params.map_trust_to_rating ** 2).sum())
          + float((params.map_rating_to_trust ** 2).sum())) / n
    mean = LossBreakdown(
        rating_recon=rating_sum / n, trust_recon=trust_sum / n,
        correlative=corr_sum / n, weight_decay=wd, map_decay=md,
        total=(rating_sum + trust_sum) / n + hp.beta * corr_sum / n
              + 0.5 * hp.weight_decay * wd + 0.5 * hp.map_decay * md)
    return mean, params.norm()


def _user_step(t: dict, hp: Hyperparams, u: int, rating_in: Row, trust_in: Row,
               targets_r, targets_t):
    """Forward + backprop for one user, gathering only the needed rows."""
    idx_r, y_r = targets_r
    idx_t, y_t = targets_t
    k = hp.latent_dim

    pre_r = t["rating_enc_w"].rows(rating_in.indices).sum(axis=0) * rating_in.value \
        + t["rating_enc_b"].value()
    pre_t = t["trust_enc_w"].rows(trust_in.indices).sum(axis=0) * trust_in.value \
        + t["trust_enc_b"].value()
    if "user_vecs" in t:
        uvec = t["user_vecs"].rows(u)
        pre_r = pre_r + uvec
        pre_t = pre_t + uvec
    z_r, z_t = sigmoid(pre_r), sigmoid(pre_t)
    fused = fuse(z_r, z_t, hp.alpha)

    dec_rows_r = t["rating_dec_w"].rows(idx_r)
    dec_rows_t = t["trust_dec_w"].rows(idx_t)
    pred_r = sigmoid(dec_rows_r @ fused + t["rating_dec_b"].rows(idx_r))
    pred_t = sigmoid(dec_rows_t @ fused + t["trust_dec_b"].rows(idx_t))

    return backprop_core(
        hp, k, rating_in, trust_in, z_r, z_t, fused,
        idx_r, pred_r - y_r, dec_rows_r,
        idx_t, pred_t - y_t, dec_rows_t,
        t["map_trust_to_rating"].value(), t["map_rating_to_trust"].value(),
        want_user_vec="user_vecs" in t)


def _apply_step(t: dict, step, lr: float, u: int) -> None:
    t["rating_enc_w"].sub_rows(step.rating_enc_rows, step.rating_enc_vals, lr)
    t["trust_enc_w"].sub_rows(step.trust_enc_rows, step.trust_enc_vals, lr)
    t["rating_enc_b"].sub(step.rating_enc_b, lr)
    t["trust_enc_b"].sub(step.trust_enc_b, lr)
    t["rating_dec_w"].sub_rows(step.rating_dec_rows, step.rating_dec_vals, lr)
    t["rating_dec_b"].sub_rows(step.rating_dec_rows, step.rating_dec_b_vals, lr)
    t["trust_dec_w"].sub_rows(step.trust_dec_rows, step.trust_dec_vals, lr)
    t["trust_dec_b"].sub_rows(step.trust_dec_rows, step.trust_dec_b_vals, lr)
    t["map_trust_to_rating"].sub(step.map_trust_to_rating, lr)
    t["map_rating_to_trust"].sub(step.map_rating_to_trust, lr)
    if step.user_vec is not None:
        t["user_vecs"].sub_rows(u, step.user_vec, lr)


def train(train_data: SparseInteractions, hp: Hyperparams,
          checkpoint=None, checkpoint_every: int = 0) -> tuple[ModelParams, TrainLog]:
    """SGD over users, one full pass per epoch.

    For every user in a freshly shuffled order: resample negatives, corrupt
    the inputs, run the forward pass, and take one gradient step. Decay is
    applied per user step at 1/n strength, so an epoch amounts to one full
    decay application. `checkpoint(epoch, params)` is invoked every
    `checkpoint_every` epochs and at termination when provided.
    """
    if train_data.nnz("rating") == 0:
        raise TrainingError("training data has no rating interactions")
    n = train_data.n
    scaled = _ScaledParams(init_params(
        n, train_data.m, hp.latent_dim, hp.seed, user_embedding=hp.user_embedding))
    t = scaled.t
    decay_w = 1.0 - hp.lr * hp.weight_decay / n
    decay_m = 1.0 - hp.lr * hp.map_decay / n
    net_tensors = [s for name, s in t.items()
                   if name not in ("map_trust_to_rating", "map_rating_to_trust")]

    log = TrainLog(epochs=[])
    stall = 0
    for epoch in range(hp.epochs):
        tic = time.perf_counter()
        order = stream(hp.seed, _SHUFFLE, epoch).permutation(n)
        for u in order.tolist():
            targets_r, targets_t, pos_r, pos_t = _user_targets(
                train_data, u,
                stream(hp.seed, _ITEM_NEG, epoch, u),
                stream(hp.seed, _USER_NEG, epoch, u))
            rng_c = stream(hp.seed, _CORRUPT, epoch, u)
            rating_in, _ = corrupt(pos_r, hp.corruption, rng_c)
            trust_in, _ = corrupt(pos_t, hp.corruption, rng_c)

            step = _user_step(t, hp, u, rating_in, trust_in, targets_r, targets_t)

            # decay first, then the data step: params*(1 - lr*lam/n) - lr*grad
            for s in net_tensors:
                s.decay(decay_w)
            t["map_trust_to_rating"].decay(decay_m)
            t["map_rating_to_trust"].decay(decay_m)
            _apply_step(t, step, hp.lr, u)

        epoch_loss, param_norm = _epoch_loss(scaled, train_data, hp, epoch)
        log.epochs.append(EpochStats(epoch=epoch, loss=epoch_loss,
                                     wall_time=time.perf_counter() - tic,
                                     param_norm=param_norm))
        if checkpoint is not None and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            checkpoint(epoch, scaled.snapshot())
        if hp.early_stop and epoch > 0:
            prev = log.epochs[-2].loss.total
            rel = (prev - epoch_loss.total) / max(abs(prev), 1e-12)
            stall = stall + 1 if rel < hp.stop_tol else 0
            if stall >= hp.patience:
                log.stop_reason = "early_stop"
                break

    params = scaled.snapshot()
    if checkpoint is not None:
        checkpoint(len(log.epochs) - 1, params)
    return params, log
