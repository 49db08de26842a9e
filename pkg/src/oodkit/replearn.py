"""Adapted representation learning on frozen base embeddings.

A small trainable head (linear, GELU, dropout, linear) replaces encoder
fine-tuning; a two-layer projection feeds the contrastive term. Training
jointly minimizes a clustering KL loss against a sharpened target
distribution and an NT-Xent loss over dropout-pair views, with cluster
centroids as free parameters initialized by K-means.

The hidden nonlinearity is the exact (erf-based) GELU: smooth everywhere,
zero at zero, and asymptotically linear for large positive inputs, so the
head does not flatten inputs that sit outside the training range the way a
doubly-saturating activation would.

All gradients are analytic and verified against central finite
differences in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Mapping
import warnings

import numpy as np
from scipy import special

from .datamodel import EmbeddingSet
from .errors import DataError, NumericError

_Q_CLAMP = 1e-12
_INV_SQRT_2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a: np.ndarray) -> np.ndarray:
    """Exact Gaussian error linear unit: ``a * Phi(a)``."""
    return 0.5 * a * (1.0 + special.erf(a * _INV_SQRT_2))


def gelu_deriv(a: np.ndarray) -> np.ndarray:
    """Derivative ``Phi(a) + a * phi(a)`` of the exact GELU."""
    phi = np.exp(-0.5 * a * a) * _INV_SQRT_2PI
    return 0.5 * (1.0 + special.erf(a * _INV_SQRT_2)) + a * phi


@dataclass
class TrainConfig:
    k: int
    gamma: float = 1.0
    tau: float = 0.5
    alpha: float = 1.0
    batch_size: int = 64
    epochs: int = 15
    learning_rate: float = 1e-3
    seed: int = 0
    cluster_loss_on: bool = True
    cl_loss_on: bool = True
    dropout: float = 0.1
    hidden_dim: int | None = None
    out_dim: int | None = None
    proj_hidden_dim: int | None = None
    proj_dim: int | None = None
    optimizer: str = "adam"
    deterministic_q: bool = False

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise DataError("tau must be > 0")
        if self.alpha <= 0:
            raise DataError("alpha must be > 0")
        if self.gamma < 0:
            raise DataError("gamma must be >= 0")
        if not (0 <= self.dropout < 1):
            raise DataError("dropout must be in [0, 1)")
        if self.cl_loss_on and self.batch_size < 2:
            raise DataError("batch_size must be >= 2 when the contrastive loss is on")
        if self.cluster_loss_on and self.k < 2:
            raise DataError("k must be >= 2 when the clustering loss is on")
        if self.k < 1:
            raise DataError("k must be >= 1")
        if self.epochs < 0:
            raise DataError("epochs must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise DataError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EncoderHead:
    """base_dim -> hidden (GELU, dropout) -> out_dim."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    dropout: float = 0.0

    @property
    def base_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]


@dataclass
class ProjectionHead:
    """out_dim -> proj_hidden (GELU) -> proj_dim."""

    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray

    @property
    def proj_dim(self) -> int:
        return self.w4.shape[1]


@dataclass
class EncoderState:
    head: EncoderHead
    projection: ProjectionHead
    centroids: np.ndarray
    config: TrainConfig
    loss_trace: list[float] = field(default_factory=list)

    def embed(self, base_vectors: np.ndarray) -> np.ndarray:
        return head_forward(self.head, base_vectors, mode="deterministic")

    def parameters(self) -> dict[str, np.ndarray]:
        """Name -> live array; updates through these references mutate the state."""
        return {
            "w1": self.head.w1,
            "b1": self.head.b1,
            "w2": self.head.w2,
            "b2": self.head.b2,
            "w3": self.projection.w3,
            "b3": self.projection.b3,
            "w4": self.projection.w4,
            "b4": self.projection.b4,
            "mu": self.centroids,
        }

    def to_dict(self) -> dict:
        return {
            "head": {
                "w1": self.head.w1.tolist(),
                "b1": self.head.b1.tolist(),
                "w2": self.head.w2.tolist(),
                "b2": self.head.b2.tolist(),
                "dropout": self.head.dropout,
            },
            "projection": {
                "w3": self.projection.w3.tolist(),
                "b3": self.projection.b3.tolist(),
                "w4": self.projection.w4.tolist(),
                "b4": self.projection.b4.tolist(),
            },
            "centroids": self.centroids.tolist(),
            "config": asdict(self.config),
            "loss_trace": list(self.loss_trace),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EncoderState":
        head = EncoderHead(
            w1=np.array(doc["head"]["w1"], dtype=np.float64),
            b1=np.array(doc["head"]["b1"], dtype=np.float64),
            w2=np.array(doc["head"]["w2"], dtype=np.float64),
            b2=np.array(doc["head"]["b2"], dtype=np.float64),
            dropout=float(doc["head"]["dropout"]),
        )
        projection = ProjectionHead(
            w3=np.array(doc["projection"]["w3"], dtype=np.float64),
            b3=np.array(doc["projection"]["b3"], dtype=np.float64),
            w4=np.array(doc["projection"]["w4"], dtype=np.float64),
            b4=np.array(doc["projection"]["b4"], dtype=np.float64),
        )
        return cls(
            head=head,
            projection=projection,
            centroids=np.array(doc["centroids"], dtype=np.float64),
            config=TrainConfig(**doc["config"]),
            loss_trace=list(doc["loss_trace"]),
        )


# ---------------------------------------------------------------------------
# forward passes


def sample_dropout_mask(
    rng: np.random.Generator, shape: tuple[int, ...], rate: float
) -> np.ndarray:
    """Inverted dropout: zeros with probability ``rate``, survivors scaled
    by 1/(1-rate) so the deterministic pass needs no rescaling."""
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _hidden_pre(head: EncoderHead, x: np.ndarray) -> np.ndarray:
    return x @ head.w1 + head.b1


def _hidden(head: EncoderHead, x: np.ndarray) -> np.ndarray:
    return gelu(_hidden_pre(head, x))


def head_forward_masked(
    head: EncoderHead, x: np.ndarray, mask: np.ndarray | None
) -> np.ndarray:
    h = _hidden(head, x)
    if mask is not None:
        h = h * mask
    return h @ head.w2 + head.b2


def head_forward(
    head: EncoderHead,
    base_vec: np.ndarray,
    mode: str = "deterministic",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Forward pass; ``stochastic`` samples a fresh seeded dropout mask."""
    x = np.asarray(base_vec, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != head.base_dim:
        raise DataError(
            f"input dim {x.shape[1]} does not match head base_dim {head.base_dim}"
        )
    if mode == "deterministic":
        mask = None
    elif mode == "stochastic":
        if rng is None:
            raise DataError("stochastic mode needs a random generator")
        mask = sample_dropout_mask(rng, (x.shape[0], head.hidden_dim), head.dropout)
    else:
        raise DataError(f"unknown forward mode {mode!r}")
    e = head_forward_masked(head, x, mask)
    return e[0] if single else e


def project(proj: ProjectionHead, e: np.ndarray) -> np.ndarray:
    g1 = gelu(e @ proj.w3 + proj.b3)
    return g1 @ proj.w4 + proj.b4


# ---------------------------------------------------------------------------
# k-means (Lloyd with seeded k-means++ starts)


def _kmeans_once(
    points: np.ndarray, k: int, rng: np.random.Generator, max_iters: int, tol: float
) -> tuple[np.ndarray, float]:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=int)
    for _ in range(max_iters):
        dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = dists.argmin(axis=1)
        new_centroids = centroids.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centroids[j] = points[members].mean(axis=0)
            else:
                # repair: the point farthest from its centroid seeds the empty cluster
                farthest = dists[np.arange(n), labels].argmax()
                new_centroids[j] = points[farthest]
                labels[farthest] = j
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < tol:
            break
    dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    inertia = float(dists.min(axis=1).sum())
    return centroids, inertia


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int | np.random.Generator = 0,
    max_iters: int = 300,
    tol: float = 1e-6,
    n_init: int = 10,
) -> np.ndarray:
    """Lloyd iterations from repeated k-means++ seeded starts.

    Runs ``n_init`` independent seeded starts and keeps the centroids with
    the lowest within-cluster sum of squares.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DataError("kmeans expects an (n, d) array")
    n = points.shape[0]
    if n < k:
        raise DataError(f"kmeans needs at least k={k} points, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    best: np.ndarray | None = None
    best_inertia = np.inf
    for _ in range(max(1, n_init)):
        centroids, inertia = _kmeans_once(points, k, rng, max_iters, tol)
        if inertia < best_inertia:
            best, best_inertia = centroids, inertia
    assert best is not None
    return best


def kmeans_assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return dists.argmin(axis=1)


# ---------------------------------------------------------------------------
# clustering objective


def soft_assign(
    e: np.ndarray, centroids: np.ndarray, alpha: float = 1.0
) -> np.ndarray:
    """Student-t kernel similarities to each centroid, normalized per row."""
    if alpha <= 0:
        raise DataError("alpha must be > 0")
    e = np.asarray(e, dtype=np.float64)
    single = e.ndim == 1
    if single:
        e = e[None, :]
    if e.shape[1] != centroids.shape[1]:
        raise DataError(
            f"embedding dim {e.shape[1]} does not match centroid dim {centroids.shape[1]}"
        )
    d2 = ((e[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    logw = -(alpha + 1.0) / 2.0 * np.log1p(d2 / alpha)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    q = w / w.sum(axis=1, keepdims=True)
    return q[0] if single else q


def target_distribution(q: np.ndarray) -> np.ndarray:
    """Sharpen soft assignments (square) and normalize by batch cluster
    frequency f_k; rows sum to one. Treated as constant under gradients."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2:
        raise DataError("target_distribution expects an (M, K) array")
    if q.shape[0] == 1:
        # single row: q^2/f with f = q cancels exactly
        return q.copy()
    f = q.sum(axis=0)
    f = np.maximum(f, _Q_CLAMP)
    raw = q * q / f
    return raw / raw.sum(axis=1, keepdims=True)


def cluster_loss(p: np.ndarray, q: np.ndarray) -> float:
    """Mean over the batch of KL(p_i || q_i), with 0 log 0 taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DataError("p and q must have the same shape")
    if ((q <= 0) & (p > 0)).any():
        warnings.warn("zero assignment probability clamped for KL")
    q = np.maximum(q, _Q_CLAMP)
    terms = np.where(p > 0, p * (np.log(np.maximum(p, _Q_CLAMP)) - np.log(q)), 0.0)
    return float(terms.sum(axis=1).mean())


# ---------------------------------------------------------------------------
# contrastive objective (NT-Xent over cosine similarity)


def _pair_index(n: int) -> np.ndarray:
    out = np.arange(n)
    out[0::2] += 1
    out[1::2] -= 1
    return out


def contrastive_loss(z: np.ndarray, tau: float) -> float:
    """NT-Xent averaged over all 2M anchors; rows are view pairs (2i, 2i+1);
    the denominator excludes only the anchor itself."""
    value, _ = _contrastive_loss_and_grad(np.asarray(z, dtype=np.float64), tau)
    return value


def _contrastive_loss_and_grad(z: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    if tau <= 0:
        raise DataError("tau must be > 0")
    if z.ndim != 2 or z.shape[0] % 2 != 0 or z.shape[0] < 2:
        raise DataError("z must be a (2M, d) array of paired rows")
    n = z.shape[0]
    norms = np.sqrt((z * z).sum(axis=1))
    if (norms == 0).any():
        raise DataError("zero-norm row in contrastive input")
    u = z / norms[:, None]
    sims = u @ u.T
    logits = sims / tau
    np.fill_diagonal(logits, -np.inf)
    mx = logits.max(axis=1, keepdims=True)
    expl = np.exp(logits - mx)
    denom = expl.sum(axis=1)
    pair = _pair_index(n)
    lse = np.log(denom) + mx[:, 0]
    losses = -logits[np.arange(n), pair] + lse
    value = float(losses.mean())

    # d(loss)/d(sims): softmax over non-self entries minus the positive indicator
    soft = expl / denom[:, None]
    g_s = soft.copy()
    g_s[np.arange(n), pair] -= 1.0
    g_s /= n * tau
    np.fill_diagonal(g_s, 0.0)

    g_u = (g_s + g_s.T) @ u
    g_z = (g_u - (g_u * u).sum(axis=1, keepdims=True) * u) / norms[:, None]
    return value, g_z


# ---------------------------------------------------------------------------
# joint objective with analytic gradients


def joint_loss(p: np.ndarray, q: np.ndarray, z: np.ndarray, cfg: TrainConfig) -> float:
    """Loss value: cluster term plus gamma times the contrastive term,
    with ablation flags dropping either side."""
    total = 0.0
    if cfg.cluster_loss_on:
        total += cluster_loss(p, q)
    if cfg.cl_loss_on and cfg.gamma != 0.0:
        total += cfg.gamma * contrastive_loss(z, cfg.tau)
    return total


def _interleave(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty((a.shape[0] * 2, a.shape[1]))
    out[0::2] = a
    out[1::2] = b
    return out


def joint_loss_and_grads(
    state: EncoderState,
    x: np.ndarray,
    mask0: np.ndarray | None,
    mask1: np.ndarray | None,
    cfg: TrainConfig,
    target_p: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray], dict]:
    """Forward and analytic backward for one batch.

    ``mask0``/``mask1`` are the frozen (already scaled) dropout masks of the
    two stochastic views. The target distribution is constant under the
    gradient; centroids receive gradients only through the soft assignment.
    ``target_p`` substitutes a fixed target (finite-difference checks must
    freeze it, exactly as they freeze the dropout masks).
    """
    head, proj, mu = state.head, state.projection, state.centroids
    m_batch = x.shape[0]
    a1 = _hidden_pre(head, x)
    h = gelu(a1)
    hm0 = h * mask0 if mask0 is not None else h
    hm1 = h * mask1 if mask1 is not None else h
    e0 = hm0 @ head.w2 + head.b2
    e1 = hm1 @ head.w2 + head.b2

    grads = {name: np.zeros_like(arr) for name, arr in state.parameters().items()}
    # gradient wrt each encoder output that was actually used, with its mask
    e_contribs: list[tuple[np.ndarray, np.ndarray, np.ndarray | None]] = []

    aux: dict = {}
    total = 0.0

    if cfg.cluster_loss_on:
        if cfg.deterministic_q:
            eq = h @ head.w2 + head.b2
            mask_q = None
        else:
            eq, mask_q = e0, mask0
        diff = eq[:, None, :] - mu[None, :, :]
        d2 = (diff * diff).sum(axis=2)
        logw = -(cfg.alpha + 1.0) / 2.0 * np.log1p(d2 / cfg.alpha)
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        q = w / w.sum(axis=1, keepdims=True)
        p = target_distribution(q) if target_p is None else target_p
        lc = cluster_loss(p, q)
        total += lc
        aux["cluster_loss"] = lc
        aux["q"], aux["p"] = q, p

        g_q = np.where(p > 0, -p / np.maximum(q, _Q_CLAMP), 0.0) / m_batch
        dot = (g_q * q).sum(axis=1, keepdims=True)
        g_logw = q * (g_q - dot)
        g_d2 = g_logw * (-(cfg.alpha + 1.0) / (2.0 * (cfg.alpha + d2)))
        g_eq = 2.0 * (eq * g_d2.sum(axis=1, keepdims=True) - g_d2 @ mu)
        grads["mu"] += -2.0 * (g_d2.T @ eq - g_d2.sum(axis=0)[:, None] * mu)
        e_contribs.append((g_eq, eq, mask_q))

    if cfg.cl_loss_on and cfg.gamma != 0.0:
        ez = _interleave(e0, e1)
        a3 = ez @ proj.w3 + proj.b3
        g1 = gelu(a3)
        z = g1 @ proj.w4 + proj.b4
        lcl, g_z = _contrastive_loss_and_grad(z, cfg.tau)
        total += cfg.gamma * lcl
        aux["contrastive_loss"] = lcl
        aux["z"] = z
        g_z = cfg.gamma * g_z

        grads["w4"] += g1.T @ g_z
        grads["b4"] += g_z.sum(axis=0)
        g_g1 = g_z @ proj.w4.T
        g_a3 = g_g1 * gelu_deriv(a3)
        grads["w3"] += ez.T @ g_a3
        grads["b3"] += g_a3.sum(axis=0)
        g_ez = g_a3 @ proj.w3.T
        e_contribs.append((g_ez[0::2], e0, mask0))
        e_contribs.append((g_ez[1::2], e1, mask1))

    for g_e, _, mask in e_contribs:
        grads["b2"] += g_e.sum(axis=0)
        hm = h * mask if mask is not None else h
        grads["w2"] += hm.T @ g_e
        g_hm = g_e @ head.w2.T
        g_h = g_hm * mask if mask is not None else g_hm
        g_a1 = g_h * gelu_deriv(a1)
        grads["w1"] += x.T @ g_a1
        grads["b1"] += g_a1.sum(axis=0)

    aux["loss"] = total
    return total, grads, aux


# ---------------------------------------------------------------------------
# optimizer


class AdamOptimizer:
    """Adaptive-moment SGD with bias correction; updates arrays in place."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name in sorted(self.params):
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / (1 - self.beta1**self.t)
            vhat = self.v[name] / (1 - self.beta2**self.t)
            self.params[name] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SgdOptimizer:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3):
        self.params = params
        self.lr = lr

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name in sorted(self.params):
            self.params[name] -= self.lr * grads[name]


# ---------------------------------------------------------------------------
# training


def _uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    # Deliberately smaller than the classical 1/sqrt(fan_in) bound: the head
    # starts as a mild contraction so that optimization, not the random draw,
    # shapes the learned representation within the short training budget.
    bound = 0.3 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_state(base_dim: int, cfg: TrainConfig, rng: np.random.Generator) -> EncoderState:
    hidden = cfg.hidden_dim or base_dim
    out = cfg.out_dim or base_dim
    proj_hidden = cfg.proj_hidden_dim or out
    proj_dim = cfg.proj_dim or out
    if out < 2 or proj_dim < 2:
        raise DataError("out_dim and proj_dim must be >= 2")
    head = EncoderHead(
        w1=_uniform_init(rng, base_dim, (base_dim, hidden)),
        b1=_uniform_init(rng, base_dim, (hidden,)),
        w2=_uniform_init(rng, hidden, (hidden, out)),
        b2=_uniform_init(rng, hidden, (out,)),
        dropout=cfg.dropout,
    )
    projection = ProjectionHead(
        w3=_uniform_init(rng, out, (out, proj_hidden)),
        b3=_uniform_init(rng, out, (proj_hidden,)),
        w4=_uniform_init(rng, proj_hidden, (proj_hidden, proj_dim)),
        b4=_uniform_init(rng, proj_hidden, (proj_dim,)),
    )
    centroids = np.zeros((cfg.k, out))
    return EncoderState(head, projection, centroids, cfg)


def train(base_embeddings: EmbeddingSet | np.ndarray, cfg: TrainConfig) -> EncoderState:
    """Fit head, projection and centroids on ID training embeddings.

    Initialization: seeded uniform fan-in weights, then K-means on the
    deterministic forward of the train set seeds the centroids. Each batch
    runs two stochastic views; the soft assignment uses view 0.
    """
    x = (
        base_embeddings.vectors
        if isinstance(base_embeddings, EmbeddingSet)
        else np.asarray(base_embeddings, dtype=np.float64)
    )
    n = x.shape[0]
    if n < max(cfg.k, cfg.batch_size):
        raise DataError(
            f"need at least max(k, batch_size)={max(cfg.k, cfg.batch_size)} "
            f"training points, got {n}"
        )
    rng = np.random.default_rng(cfg.seed)
    state = init_state(x.shape[1], cfg, rng)
    e_det = state.embed(x)
    state.centroids[...] = kmeans(e_det, cfg.k, seed=rng)

    params = state.parameters()
    if cfg.optimizer == "adam":
        opt: AdamOptimizer | SgdOptimizer = AdamOptimizer(params, lr=cfg.learning_rate)
    else:
        opt = SgdOptimizer(params, lr=cfg.learning_rate)

    hidden_dim = state.head.hidden_dim
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch_idx = order[start : start + cfg.batch_size]
            if batch_idx.size < 2:
                continue
            xb = x[batch_idx]
            mask0 = sample_dropout_mask(rng, (batch_idx.size, hidden_dim), cfg.dropout)
            mask1 = sample_dropout_mask(rng, (batch_idx.size, hidden_dim), cfg.dropout)
            loss, grads, _ = joint_loss_and_grads(state, xb, mask0, mask1, cfg)
            if not np.isfinite(loss):
                raise NumericError(
                    f"training diverged to non-finite loss after "
                    f"{len(state.loss_trace)} batches; trace tail: "
                    f"{state.loss_trace[-5:]}"
                )
            state.loss_trace.append(loss)
            opt.step(grads)
    return state


def embed_corpus(state: EncoderState, base_embeddings: EmbeddingSet) -> EmbeddingSet:
    """Deterministic forward of every row; preserves ids."""
    return EmbeddingSet(base_embeddings.ids, state.embed(base_embeddings.vectors))
