"""Loss kernels for distillation plus calibration metrics.

Logits are numpy arrays with the vocabulary on the last axis. Losses are
averaged over all leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp
from scipy.special import softmax as _softmax


@dataclass(frozen=True)
class LossParams:
    tau: float = 1.0
    lam: float = 1.0
    lam_z: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("temperature must be positive")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")
        if not self.lam_z >= 0:
            raise ValueError("lam_z must be non-negative")


def _logits(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] < 2:
        raise ValueError("logits need a vocabulary axis of length >= 2")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    return z


def _pair(z_t, z_s):
    zt, zs = _logits(z_t), _logits(z_s)
    if zt.shape != zs.shape:
        raise ValueError("teacher and student logits must have the same shape")
    return zt, zs


def _temperature(tau: float) -> float:
    if not tau > 0:
        raise ValueError("temperature must be positive")
    return float(tau)


def softmax(z) -> np.ndarray:
    return _softmax(_logits(z), axis=-1)


def ntp_loss(x, z) -> float:
    """-log softmax(z)[x], averaged over leading axes."""
    z = _logits(z)
    t = np.asarray(x)
    if t.shape != z.shape[:-1]:
        raise ValueError("targets must match the leading logit axes")
    if np.any((t < 0) | (t >= z.shape[-1])):
        raise ValueError("target index out of range")
    logp = log_softmax(z, axis=-1)
    return float(-np.mean(np.take_along_axis(logp, t[..., None].astype(int), axis=-1)))


def kd_loss(z_t, z_s, tau: float = 1.0) -> float:
    """-tau^2 * sum softmax(z_T / tau) * log softmax(z_S / tau), averaged over positions."""
    tau = _temperature(tau)
    zt, zs = _pair(z_t, z_s)
    p = _softmax(zt / tau, axis=-1)
    return float(-tau**2 * np.mean(np.sum(p * log_softmax(zs / tau, axis=-1), axis=-1)))


def kd_loss_grad(z_t, z_s, tau: float = 1.0) -> np.ndarray:
    """Gradient of ``kd_loss`` with respect to the student logits."""
    tau = _temperature(tau)
    zt, zs = _pair(z_t, z_s)
    n = int(np.prod(zs.shape[:-1])) if zs.ndim > 1 else 1
    return tau * (_softmax(zs / tau, axis=-1) - _softmax(zt / tau, axis=-1)) / n


def z_loss(z) -> float:
    """Mean squared log-partition of the logits."""
    return float(np.mean(logsumexp(_logits(z), axis=-1) ** 2))


def student_loss(x, z_t, z_s, params: LossParams = LossParams()) -> float:
    """(1 - lam) * NTP + lam * KD + lam_z * Z-loss on the student logits."""
    _pair(z_t, z_s)
    out = params.lam_z * z_loss(z_s)
    if params.lam < 1:
        out += (1 - params.lam) * ntp_loss(x, z_s)
    if params.lam > 0:
        out += params.lam * kd_loss(z_t, z_s, params.tau)
    return float(out)


def truncate_top_k(p, k: int) -> np.ndarray:
    """Keep the k largest probabilities (lower index wins ties) and renormalize."""
    p = np.asarray(p, dtype=float)
    if not 1 <= k <= p.shape[-1]:
        raise ValueError("k must lie in [1, vocabulary size]")
    order = np.argsort(-p, axis=-1, kind="stable")
    mask = np.zeros(p.shape, dtype=bool)
    np.put_along_axis(mask, order[..., :k], True, axis=-1)
    q = np.where(mask, p, 0.0)
    return q / q.sum(axis=-1, keepdims=True)


def truncate_top_p(p, top_p: float) -> np.ndarray:
    """Keep the shortest descending prefix whose mass reaches ``top_p``, then renormalize.

    The element that crosses the threshold is kept. A tiny tolerance absorbs
    rounding in the cumulative sum.
    """
    p = np.asarray(p, dtype=float)
    if not 0 < top_p <= 1:
        raise ValueError("top_p must lie in (0, 1]")
    order = np.argsort(-p, axis=-1, kind="stable")
    sorted_p = np.take_along_axis(p, order, axis=-1)
    cum = np.cumsum(sorted_p, axis=-1)
    # number of kept entries: first index where cum >= top_p, plus one
    keep = np.sum(cum < top_p * cum[..., -1:] - 1e-12, axis=-1, keepdims=True) + 1
    ranks = np.arange(p.shape[-1])
    kept_sorted = ranks < keep
    mask = np.zeros(p.shape, dtype=bool)
    np.put_along_axis(mask, order, kept_sorted, axis=-1)
    q = np.where(mask, p, 0.0)
    return q / q.sum(axis=-1, keepdims=True)


def cross_entropy(q, p) -> float:
    """H(q, p) = -sum q log p, with 0 log 0 = 0."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(q > 0, q * np.log(p), 0.0)
    return float(-np.sum(terms, axis=-1).mean())


def reverse_kl(p_t, q_s) -> float:
    """KL(q_S || p_T) = H(q_S, p_T) - H(q_S) on probability vectors."""
    return cross_entropy(q_s, p_t) - cross_entropy(q_s, q_s)


def forward_kl(p_t, q_s) -> float:
    """KL(p_T || q_S) on probability vectors."""
    return cross_entropy(p_t, q_s) - cross_entropy(p_t, p_t)


def reverse_kl_loss(z_t, z_s, tau: float = 1.0) -> float:
    """Reverse KL between tempered student and teacher distributions, from logits."""
    tau = _temperature(tau)
    zt, zs = _pair(z_t, z_s)
    log_p = log_softmax(zt / tau, axis=-1)
    log_q = log_softmax(zs / tau, axis=-1)
    q = np.exp(log_q)
    return float(np.mean(np.sum(q * (log_q - log_p), axis=-1)))


def truncate(p, method: str, value) -> np.ndarray:
    """Dispatch to top-k (``value`` = k) or top-p (``value`` = p) truncation."""
    if method == "top-k":
        return truncate_top_k(p, int(value))
    if method == "top-p":
        return truncate_top_p(p, float(value))
    raise ValueError("method must be 'top-k' or 'top-p'")


# -- calibration ------------------------------------------------------------

def _bin_index(conf: np.ndarray, n_bins: int) -> np.ndarray:
    # right-closed bins ((m-1)/M, m/M]; zero confidence joins the first bin
    return np.clip(np.ceil(conf * n_bins).astype(int) - 1, 0, n_bins - 1)


def _check_conf(c, name):
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array")
    if np.any((c < 0) | (c > 1)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return c


def ece(confidences, correct, n_bins: int = 21) -> tuple[float, list[dict]]:
    """Expected calibration error and per-bin statistics."""
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    conf = _check_conf(confidences, "confidences")
    acc = np.asarray(correct, dtype=float)
    if acc.shape != conf.shape:
        raise ValueError("confidences and correctness must align")
    idx = _bin_index(conf, n_bins)
    total = 0.0
    rows = []
    for m in range(n_bins):
        sel = idx == m
        cnt = int(sel.sum())
        row = {"bin": m + 1, "lower": m / n_bins, "upper": (m + 1) / n_bins, "count": cnt,
               "accuracy": float(acc[sel].mean()) if cnt else float("nan"),
               "confidence": float(conf[sel].mean()) if cnt else float("nan")}
        if cnt:
            total += cnt / conf.size * abs(row["accuracy"] - row["confidence"])
        rows.append(row)
    return float(total), rows


def ece_dist(conf_a, conf_b, n_bins: int = 21) -> tuple[float, list[dict]]:
    """Calibration of model A's confidences against model B's, binned on B."""
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    a = _check_conf(conf_a, "conf_a")
    b = _check_conf(conf_b, "conf_b")
    if a.shape != b.shape:
        raise ValueError("confidence arrays must align")
    idx = _bin_index(b, n_bins)
    total = 0.0
    rows = []
    for m in range(n_bins):
        sel = idx == m
        cnt = int(sel.sum())
        row = {"bin": m + 1, "lower": m / n_bins, "upper": (m + 1) / n_bins, "count": cnt,
               "confidence_a": float(a[sel].mean()) if cnt else float("nan"),
               "confidence_b": float(b[sel].mean()) if cnt else float("nan")}
        if cnt:
            total += cnt / a.size * abs(row["confidence_a"] - row["confidence_b"])
        rows.append(row)
    return float(total), rows


def logit_storage_bytes(vocab: int = 32168, bytes_per_value: int = 4) -> int:
    """Bytes needed to store one position's full teacher logits."""
    return vocab * bytes_per_value
