"""Per-view autoencoders, the granular-ball contrastive objective and training."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .association import MaskMatrix, pair_mask
from .diffcore import Adam, Tensor
from .granular import BallSet, generate_balls_kmeans, make_ballset

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class NumericalError(FloatingPointError):
    """Raised when a training step produces a non-finite loss."""

    def __init__(self, msg, snapshot=None):
        super().__init__(msg)
        self.snapshot = snapshot or {}


@dataclass
class TrainConfig:
    p: int = 2
    tau: float = 0.1
    lam: float = 1.0
    dim: int = 64
    temperature: float = 1.0
    batch_size: int = 256
    epochs: int = 100
    seed: int = 0
    lr: float = 1e-4
    weight_decay: float = 0.0
    hidden: tuple = (2000, 500, 500)
    variant: str = "mlp"            # "mlp" or "linear"
    normalization: str = "zscore"   # "zscore" or "l2"
    contrastive: bool = True        # False trains on reconstruction only

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.dim < 1 or self.batch_size < 2 or self.epochs < 0:
            raise ValueError("dim >= 1, batch_size >= 2 and epochs >= 0 are required")
        if self.lr < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.lr}")
        if self.variant not in ("mlp", "linear"):
            raise ValueError(f"unknown network variant {self.variant!r}")
        if self.normalization not in ("zscore", "l2"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if not self.contrastive and self.lam == 0:
            raise ValueError("with the contrastive term disabled lambda must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# ----------------------------------------------------------------------------
# networks

def _init_linear(fan_in, fan_out, rng):
    bound = 1.0 / np.sqrt(fan_in)
    W = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True)
    b = Tensor(rng.uniform(-bound, bound, (1, fan_out)), requires_grad=True)
    return W, b


class ViewNetwork:
    """Encoder ``in_dim -> hidden... -> dim`` and its mirrored decoder.

    ``variant="linear"`` drops the activations; with no hidden layers it is
    a single affine map.
    """

    def __init__(self, in_dim: int, dim: int, hidden: Sequence[int] = (2000, 500, 500),
                 variant: str = "mlp", decoder: bool = True, rng=None):
        rng = np.random.default_rng(rng)
        self.in_dim, self.dim, self.variant = in_dim, dim, variant
        dims = [in_dim, *hidden, dim]
        self.encoder = [_init_linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        rdims = dims[::-1]
        self.decoder = [_init_linear(a, b, rng) for a, b in zip(rdims[:-1], rdims[1:])] if decoder else []

    def _run(self, layers, x):
        for i, (W, b) in enumerate(layers):
            x = dc.add(dc.matmul(x, W), b)
            if self.variant == "mlp" and i < len(layers) - 1:
                x = dc.relu(x)
        return x

    def encode_raw(self, x) -> Tensor:
        x = dc.as_tensor(x)
        if x.shape[1] != self.in_dim:
            raise dc.ShapeError(f"view expects {self.in_dim} features, got {x.shape[1]}")
        return self._run(self.encoder, x)

    def encode(self, x, normalization: str = "zscore") -> Tensor:
        z = self.encode_raw(x)
        return dc.standardize(z) if normalization == "zscore" else dc.l2_normalize_rows(z)

    def decode(self, z) -> Tensor:
        if not self.decoder:
            raise RuntimeError("this network was built without a decoder")
        return self._run(self.decoder, z)

    def named_parameters(self, prefix=""):
        out = []
        for part, layers in (("enc", self.encoder), ("dec", self.decoder)):
            for i, (W, b) in enumerate(layers):
                out.append((f"{prefix}{part}{i}.W", W))
                out.append((f"{prefix}{part}{i}.b", b))
        return out

    def parameters(self):
        return [t for _, t in self.named_parameters()]


# ----------------------------------------------------------------------------
# losses

def reconstruction_loss(pairs) -> Tensor:
    """Summed squared reconstruction error over views and samples."""
    terms = [dc.squared_error(xh, x) for x, xh in pairs]
    if not terms:
        raise ValueError("no views given")
    out = terms[0]
    for t in terms[1:]:
        out = dc.add(out, t)
    return out


def _logsumexp_masked(S, mask):
    m = np.where(mask, S, -np.inf).max(axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.where(mask, np.exp(S - m), 0.0)
    s = e.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        return np.log(s) + m, e / np.where(s > 0, s, 1.0)


def masked_nce(S: Tensor, mask: MaskMatrix, k: int) -> Tensor:
    """``-(1/k) sum_i sum_{j in pos_i} log(e^S_ij / (e^S_ij + sum_{z in neg_i} e^S_iz))``.

    Rows without positives or without negatives contribute nothing.
    """
    pos = mask.M.astype(bool)
    neg = mask.negative_mask
    valid = pos.any(1) & neg.any(1)
    pos = pos & valid[:, None]
    neg = neg & valid[:, None]
    Sv = S.value
    lse_neg, q = _logsumexp_masked(Sv, neg)  # q: softmax over negatives
    lse_neg = np.where(valid[:, None], lse_neg, 0.0)
    both = np.logaddexp(Sv, lse_neg)
    terms = np.where(pos, both - Sv, 0.0)
    value = terms.sum() / k

    def backward(g):
        sig = np.where(pos, np.exp(Sv - both), 0.0)  # prob of the positive
        w = np.where(pos, 1.0 - sig, 0.0)
        gS = -w + w.sum(axis=1, keepdims=True) * q * neg
        return (gS * (g[0, 0] / k),)

    return dc.custom(np.array([[value]]), (S,), backward)


def literal_ratio(S: Tensor, mask: MaskMatrix, k: int) -> float:
    """The printed objective without the log: (1/k) sum sum e^S_ij / sum_neg e^S_iz.

    Inspection only; it is not a quantity to minimize.
    """
    pos = mask.M.astype(bool)
    neg = mask.negative_mask
    Sv = S.value
    total = 0.0
    for i in range(len(Sv)):
        if pos[i].any() and neg[i].any():
            total += np.exp(Sv[i, pos[i]]).sum() / np.exp(Sv[i, neg[i]]).sum()
    return total / k


def contrastive_loss_pair(c_m, c_n, mask: MaskMatrix, temperature: float = 1.0, literal: bool = False):
    """Granular-ball contrastive loss for one view pair.

    Centers of both views are stacked into a 2k x d matrix; every stacked
    row acts as an anchor and the sum is divided by k.
    """
    c_m, c_n = dc.as_tensor(c_m), dc.as_tensor(c_n)
    k = c_m.shape[0]
    if mask.M.shape != (2 * k, 2 * k):
        raise dc.ShapeError(f"mask is {mask.M.shape}, expected {(2 * k, 2 * k)}")
    C = dc.vstack([c_m, c_n])
    S = dc.scale(dc.cosine_matrix(C, C), 1.0 / temperature)
    if literal:
        return literal_ratio(S, mask, k)
    return masked_nce(S, mask, k)


def average_pairs(losses: Sequence[Tensor]) -> Tensor:
    if not losses:
        raise ValueError("need at least one view pair")
    out = losses[0]
    for t in losses[1:]:
        out = dc.add(out, t)
    return dc.scale(out, 1.0 / len(losses))


def total_contrastive(ball_sets: Sequence[BallSet], masks: dict, temperature: float = 1.0) -> Tensor:
    """Mean pair loss over all view pairs m < n; ``masks`` is keyed by (m, n)."""
    V = len(ball_sets)
    if V < 2:
        raise ValueError(f"contrastive loss needs at least 2 views, got {V}")
    losses = [contrastive_loss_pair(ball_sets[m].centers, ball_sets[n].centers, masks[(m, n)], temperature)
              for m, n in combinations(range(V), 2)]
    return average_pairs(losses)


def total_loss(l_con, l_rec, lam: float) -> Tensor:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if lam == 0:
        return dc.as_tensor(l_con)
    return dc.add(l_con, dc.scale(l_rec, lam))


# ----------------------------------------------------------------------------
# training

@dataclass
class BatchLoss:
    total: Tensor
    con: Tensor
    rec: Tensor | None
    ball_sets: list = field(default_factory=list)
    masks: dict = field(default_factory=dict)

    def values(self):
        rec = self.rec.item() if self.rec is not None else 0.0
        return self.con.item(), rec, self.total.item()


@dataclass
class EpochSummary:
    epoch: int
    l_con: float
    l_rec: float
    l_total: float
    batches: int


class MGBCC:
    """Multi-view autoencoders trained with the granular-ball contrastive loss."""

    def __init__(self, view_dims: Sequence[int], cfg: TrainConfig | None = None):
        self.cfg = cfg = cfg or TrainConfig()
        if len(view_dims) < 2:
            raise ValueError("at least two views are required")
        self.view_dims = [int(d) for d in view_dims]
        rng = np.random.default_rng([cfg.seed, 0])
        with_decoder = cfg.lam > 0 or cfg.variant == "mlp"
        self.nets = [ViewNetwork(d, cfg.dim, cfg.hidden, cfg.variant, with_decoder, rng)
                     for d in self.view_dims]
        self.optimizer = Adam(self.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        self.epoch = 0

    def named_parameters(self):
        out = []
        for v, net in enumerate(self.nets):
            out.extend(net.named_parameters(prefix=f"view{v}."))
        return out

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def encode(self, views) -> list[Tensor]:
        return [net.encode(x, self.cfg.normalization) for net, x in zip(self.nets, views)]

    def embed(self, views) -> list[np.ndarray]:
        """Latent features of every view over the whole dataset in one pass."""
        self._check_views(views)
        return [h.value for h in self.encode(views)]

    def _check_views(self, views):
        if len(views) != len(self.nets):
            raise ValueError(f"model has {len(self.nets)} views, got {len(views)}")
        for v, (x, d) in enumerate(zip(views, self.view_dims)):
            if x.shape[1] != d:
                raise dc.ShapeError(f"view {v}: expected {d} features, got {x.shape[1]}")

    def assign_balls(self, hs, ids, batch_id: int = 0) -> list[np.ndarray]:
        """k-means ball assignments for each view (discrete, no gradient)."""
        out = []
        for v, h in enumerate(hs):
            hv = h.value if isinstance(h, Tensor) else np.asarray(h)
            rng = np.random.default_rng([self.cfg.seed, 2, self.epoch, batch_id, v])
            bs = generate_balls_kmeans(hv, self.cfg.p, ids, rng, view_id=v)
            out.append(bs.labels)
        return out

    def batch_loss(self, xs, ids=None, batch_id: int = 0, assignments=None, masks=None) -> BatchLoss:
        """Loss on one aligned batch.

        ``assignments`` (per-view ball labels) and ``masks`` (keyed by view
        pair) freeze the discrete parts of the graph, e.g. for gradient checks.
        """
        cfg = self.cfg
        n = xs[0].shape[0]
        ids = np.arange(n) if ids is None else np.asarray(ids)
        zs = [net.encode_raw(x) for net, x in zip(self.nets, xs)]
        if cfg.normalization == "zscore":
            hs = [dc.standardize(z) for z in zs]
        else:
            hs = [dc.l2_normalize_rows(z) for z in zs]
        ball_sets = []
        if cfg.contrastive:
            bad = [v for v, h in enumerate(hs) if not np.all(np.isfinite(h.value))]
            if bad:
                snap = {"epoch": self.epoch, "batch": batch_id, "views": bad}
                raise NumericalError(f"non-finite latent features in view(s) {bad}", snap)
            if assignments is None:
                assignments = self.assign_balls(hs, ids, batch_id)
            ball_sets = [make_ballset(h, lab, ids, v) for v, (h, lab) in enumerate(zip(hs, assignments))]
            if masks is None:
                masks = {(m, k): pair_mask(ball_sets[m], ball_sets[k], cfg.tau)
                         for m, k in combinations(range(len(hs)), 2)}
            l_con = total_contrastive(ball_sets, masks, cfg.temperature)
        else:
            l_con = Tensor(0.0)
        l_rec = None
        if self.nets[0].decoder:
            if cfg.lam > 0:
                l_rec = reconstruction_loss([(x, net.decode(z)) for net, x, z in zip(self.nets, xs, zs)])
            else:
                # reported only; kept off the graph so decoders get no gradient
                l_rec = Tensor(reconstruction_loss(
                    [(x, net.decode(z.detach())) for net, x, z in zip(self.nets, xs, zs)]).value)
        loss = total_loss(l_con, l_rec if l_rec is not None else Tensor(0.0), cfg.lam)
        return BatchLoss(loss, l_con, l_rec, ball_sets, masks or {})

    def batches(self, n: int):
        """Shuffled index batches for the current epoch; short tails are dropped."""
        cfg = self.cfg
        order = np.random.default_rng([cfg.seed, 1, self.epoch]).permutation(n)
        bs = min(cfg.batch_size, n)
        floor = max(2 * cfg.p, 2)
        out = []
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            if len(idx) < floor and out:
                break
            out.append(idx)
        return out

    def train_epoch(self, views) -> EpochSummary:
        self._check_views(views)
        n = views[0].shape[0]
        if any(x.shape[0] != n for x in views):
            raise ValueError("views are not aligned (row counts differ)")
        sums = np.zeros(3)
        batches = self.batches(n)
        for b, idx in enumerate(batches):
            xs = [x[idx] for x in views]
            out = self.batch_loss(xs, idx, batch_id=b)
            vals = out.values()
            if not np.all(np.isfinite(vals)):
                snap = {"epoch": self.epoch, "batch": b, "l_con": vals[0], "l_rec": vals[1], "l_total": vals[2]}
                raise NumericalError(f"non-finite loss at epoch {self.epoch} batch {b}: {snap}", snap)
            self.optimizer.zero_grad()
            out.total.backward()
            self.optimizer.step()
            sums += vals
        self.epoch += 1
        mean = sums / max(len(batches), 1)
        summary = EpochSummary(self.epoch, *map(float, mean), len(batches))
        log.info("epoch %d: l_con=%.6f l_rec=%.6f l_total=%.6f", summary.epoch, *mean)
        return summary

    def fit(self, views, epochs: int | None = None, callback=None) -> list[EpochSummary]:
        epochs = self.cfg.epochs if epochs is None else epochs
        history = []
        for _ in range(epochs):
            s = self.train_epoch(views)
            history.append(s)
            if callback is not None:
                callback(self, s)
        return history


# ----------------------------------------------------------------------------
# checkpoints
#
# A checkpoint is an .npz archive (numpy's zip-of-.npy container):
#   meta                 JSON string: version, config, view_dims, epoch,
#                        adam step, rng description
#   param/<name>         float64 little-endian parameter matrix
#   adam_m/<name>, adam_v/<name>   optimizer moments (absent before step 1)
# All randomness is derived from (seed, epoch, batch, view), so the seed and
# epoch counter are the complete RNG state.

def save_checkpoint(model: MGBCC, path) -> Path:
    path = Path(path)
    st = model.optimizer.state
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "view_dims": model.view_dims,
        "epoch": model.epoch,
        "adam": {"step": st.step, "lr": st.lr, "beta1": st.beta1, "beta2": st.beta2,
                 "eps": st.eps, "weight_decay": st.weight_decay},
        "rng": {"seed": model.cfg.seed, "epoch": model.epoch},
    }
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    names = [n for n, _ in model.named_parameters()]
    for name, t in model.named_parameters():
        arrays[f"param/{name}"] = t.value.astype("<f8")
    if st.m:
        for name, m, v in zip(names, st.m, st.v):
            arrays[f"adam_m/{name}"] = m.astype("<f8")
            arrays[f"adam_v/{name}"] = v.astype("<f8")
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> MGBCC:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        cfg = TrainConfig.from_dict(meta["config"])
        model = MGBCC(meta["view_dims"], cfg)
        for name, t in model.named_parameters():
            key = f"param/{name}"
            if key not in z:
                raise ValueError(f"checkpoint is missing parameter {name}")
            arr = z[key]
            if arr.shape != t.shape:
                raise dc.ShapeError(f"parameter {name}: checkpoint {arr.shape}, model {t.shape}")
            t.value = arr.astype(np.float64)
        st = model.optimizer.state
        st.step = meta["adam"]["step"]
        if st.step > 0:
            names = [n for n, _ in model.named_parameters()]
            st.m = [z[f"adam_m/{n}"].astype(np.float64) for n in names]
            st.v = [z[f"adam_v/{n}"].astype(np.float64) for n in names]
        model.epoch = meta["epoch"]
    return model
