"""The network: input corruption, two encoders, weighted fusion, two decoders.

A user is represented twice, from their rating row and from their trust
row. Both sparse rows are dropout-corrupted, encoded through sigmoid
layers into k-dimensional codes, fused by a convex combination, and the
fused code is decoded back into per-item and per-user probabilities.
Prediction runs the same pass on clean inputs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple

import numpy as np

from .sparse import SparseInteractions

_CKPT_MAGIC = b"TRDAECK1"

# sigmoid outputs are clamped to this band before any logarithm
PROB_EPS = 1e-7


@dataclass(frozen=True)
class Hyperparams:
    """Training configuration; defaults are the shipped desk-scale settings."""

    latent_dim: int = 10
    alpha: float = 0.8          # fusion weight on the rating-view code
    beta: float = 0.01          # cross-view regularizer weight
    corruption: float = 0.2     # per-coordinate dropout probability
    weight_decay: float = 0.01  # l2 coefficient on network tensors
    map_decay: float = 0.01     # l2 coefficient on the cross-view maps
    lr: float = 0.5
    epochs: int = 50
    seed: int = 0
    top_n: int = 10
    user_embedding: bool = False
    early_stop: bool = False
    patience: int = 5
    stop_tol: float = 1e-5

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")
        if not 0.0 <= self.corruption < 1.0:
            raise ValueError("corruption must be in [0, 1)")
        if self.weight_decay < 0.0 or self.map_decay < 0.0:
            raise ValueError("decay coefficients must be >= 0")
        if self.lr < 0.0:
            raise ValueError("lr must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")

    @property
    def keep_scale(self) -> float:
        """Survivor rescale factor 1/(1-q) that keeps corruption unbiased."""
        return 1.0 / (1.0 - self.corruption)

    def replace(self, **kw) -> "Hyperparams":
        return replace(self, **kw)


@dataclass
class ModelParams:
    """All trainable tensors.

    Encoders map rating rows (m inputs) and trust rows (n inputs) to k
    dims; decoders map the fused k-vector back out. The two k x k maps
    predict each view's code from the other. `user_vecs` is the optional
    additive per-user vector, absent by default.
    """

    rating_enc_w: np.ndarray   # (m, k)
    trust_enc_w: np.ndarray    # (n, k)
    rating_enc_b: np.ndarray   # (k,)
    trust_enc_b: np.ndarray    # (k,)
    rating_dec_w: np.ndarray   # (m, k)
    rating_dec_b: np.ndarray   # (m,)
    trust_dec_w: np.ndarray    # (n, k)
    trust_dec_b: np.ndarray    # (n,)
    map_trust_to_rating: np.ndarray  # (k, k)
    map_rating_to_trust: np.ndarray  # (k, k)
    user_vecs: np.ndarray | None = None  # (n, k)

    @property
    def n(self) -> int:
        return self.trust_enc_w.shape[0]

    @property
    def m(self) -> int:
        return self.rating_enc_w.shape[0]

    @property
    def k(self) -> int:
        return self.rating_enc_w.shape[1]

    def tensors(self):
        """Yield (name, array) for every present tensor, in field order."""
        for f in fields(self):
            arr = getattr(self, f.name)
            if arr is not None:
                yield f.name, arr

    def copy(self) -> "ModelParams":
        kw = {name: arr.copy() for name, arr in self.tensors()}
        return ModelParams(**kw)

    def norm(self) -> float:
        return float(np.sqrt(sum(float((a * a).sum()) for _, a in self.tensors())))


class Row(NamedTuple):
    """A sparse binary row: nonzero positions, all sharing one value."""

    indices: np.ndarray
    value: float


@dataclass
class ForwardTrace:
    """Intermediate activations of one user's pass, kept for backprop.

    `rating_pred` / `trust_pred` are aligned with the target coordinate
    arrays handed to the forward pass, not with the full output rows.
    """

    rating_in: Row
    trust_in: Row
    z_rating: np.ndarray
    z_trust: np.ndarray
    fused: np.ndarray
    rating_idx: np.ndarray
    trust_idx: np.ndarray
    rating_pred: np.ndarray
    trust_pred: np.ndarray
    user: int | None = None
    mask_rating: np.ndarray | None = field(default=None, repr=False)
    mask_trust: np.ndarray | None = field(default=None, repr=False)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function: exp(-log(1 + e^-x))."""
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))


def clamp_probs(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def init_params(n: int, m: int, k: int, seed: int,
                user_embedding: bool = False) -> ModelParams:
    """Glorot-uniform weights, zero biases, identity cross-view maps."""
    if min(n, m, k) < 1:
        raise ValueError("n, m, k must all be >= 1")
    rng = np.random.default_rng(seed)

    def glorot(rows, cols):
        limit = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-limit, limit, size=(rows, cols))

    return ModelParams(
        rating_enc_w=glorot(m, k),
        trust_enc_w=glorot(n, k),
        rating_enc_b=np.zeros(k),
        trust_enc_b=np.zeros(k),
        rating_dec_w=glorot(m, k),
        rating_dec_b=np.zeros(m),
        trust_dec_w=glorot(n, k),
        trust_dec_b=np.zeros(n),
        map_trust_to_rating=np.eye(k),
        map_rating_to_trust=np.eye(k),
        user_vecs=glorot(n, k) if user_embedding else None,
    )


def corrupt(indices: np.ndarray, q: float,
            rng: np.random.Generator) -> tuple[Row, np.ndarray]:
    """Drop each nonzero coordinate with probability q, rescale survivors.

    Survivors carry 1/(1-q) so the corrupted row is unbiased. Exactly
    len(indices) uniforms are consumed even at q=0, which keeps stream
    consumption a function of the row length alone.
    """
    indices = np.asarray(indices, dtype=np.int64)
    draws = rng.random(len(indices))
    if q == 0.0:
        return Row(indices, 1.0), np.ones(len(indices), dtype=bool)
    keep = draws >= q
    return Row(indices[keep], 1.0 / (1.0 - q)), keep


def encode(params: ModelParams, rating_row: Row, trust_row: Row,
           user: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sigmoid codes of both views, accumulating only nonzero inputs."""
    pre_r = params.rating_enc_w[rating_row.indices].sum(axis=0) * rating_row.value \
        + params.rating_enc_b
    pre_t = params.trust_enc_w[trust_row.indices].sum(axis=0) * trust_row.value \
        + params.trust_enc_b
    if params.user_vecs is not None:
        if user is None:
            raise ValueError("user index required when user_vecs are enabled")
        pre_r = pre_r + params.user_vecs[user]
        pre_t = pre_t + params.user_vecs[user]
    return sigmoid(pre_r), sigmoid(pre_t)


def fuse(z_rating: np.ndarray, z_trust: np.ndarray, alpha: float) -> np.ndarray:
    """Convex combination of the two view codes."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    return alpha * z_rating + (1.0 - alpha) * z_trust


def decode(params: ModelParams, fused: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full reconstructed rows: per-item and per-user probabilities."""
    r_hat = sigmoid(params.rating_dec_w @ fused + params.rating_dec_b)
    t_hat = sigmoid(params.trust_dec_w @ fused + params.trust_dec_b)
    return r_hat, t_hat


def decode_at(params: ModelParams, fused: np.ndarray, item_idx: np.ndarray,
              user_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reconstructions at selected coordinates only."""
    r_hat = sigmoid(params.rating_dec_w[item_idx] @ fused + params.rating_dec_b[item_idx])
    t_hat = sigmoid(params.trust_dec_w[user_idx] @ fused + params.trust_dec_b[user_idx])
    return r_hat, t_hat


def forward_sampled(params: ModelParams, hp: Hyperparams, rating_in: Row,
                    trust_in: Row, rating_idx: np.ndarray, trust_idx: np.ndarray,
                    user: int | None = None) -> ForwardTrace:
    """Forward pass materializing outputs only at the target coordinates.

    The inputs are taken as given (already corrupted or clean); this
    function is deterministic, which is what the finite-difference check
    relies on.
    """
    z_rating, z_trust = encode(params, rating_in, trust_in, user)
    fused = fuse(z_rating, z_trust, hp.alpha)
    rating_pred, trust_pred = decode_at(params, fused, rating_idx, trust_idx)
    return ForwardTrace(rating_in=rating_in, trust_in=trust_in,
                        z_rating=z_rating, z_trust=z_trust, fused=fused,
                        rating_idx=rating_idx, trust_idx=trust_idx,
                        rating_pred=rating_pred, trust_pred=trust_pred,
                        user=user)


def predict_scores(params: ModelParams, train: SparseInteractions, u: int,
                   alpha: float) -> np.ndarray:
    """Item scores for ranking: clean inputs, no corruption or rescaling."""
    rating_row = Row(train.row(u, "rating"), 1.0)
    trust_row = Row(train.row(u, "trust"), 1.0)
    z_rating, z_trust = encode(params, rating_row, trust_row, u)
    r_hat, _ = decode(params, fuse(z_rating, z_trust, alpha))
    return r_hat


def save_checkpoint(params: ModelParams, hp: Hyperparams, path) -> None:
    """Versioned binary checkpoint; round-trips bit-exactly."""
    names = [name for name, _ in params.tensors()]
    header = {
        "hyperparams": {f.name: getattr(hp, f.name) for f in fields(hp)},
        "tensors": [[name, list(getattr(params, name).shape)] for name in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, Hyperparams]:
    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (bad header)")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        kw = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape))
            arr = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            kw[name] = arr.astype(np.float64)
    return ModelParams(**kw), Hyperparams(**header["hyperparams"])
