"""Parameter and FLOP accounting for dense decoder-only transformers.

Counts follow a gated-FFN, RMSNorm, tied-embedding architecture with
grouped-query attention. Everything here is exact integer arithmetic except
the closed-form approximation ``flops_forward_from_N``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

DEFAULT_VOCAB = 32768
APPROX_VOCAB = 32168
DEFAULT_CTX = 4096
DEFAULT_D_HEAD = 128


@dataclass(frozen=True)
class Architecture:
    n_layers: int
    d_model: int
    d_head: int
    n_heads: int
    n_kv_heads: int
    d_ffn: int
    n_ffn: int = 3
    n_vocab: int = DEFAULT_VOCAB
    n_ctx: int = DEFAULT_CTX

    def __post_init__(self):
        for name in ("n_layers", "d_model", "d_head", "n_heads", "n_kv_heads",
                     "d_ffn", "n_ffn", "n_vocab", "n_ctx"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.n_heads % self.n_kv_heads:
            raise ValueError("n_heads must be divisible by n_kv_heads")
        if self.d_model != self.n_heads * self.d_head:
            raise ValueError("d_model must equal n_heads * d_head")

    @property
    def g_size(self) -> int:
        return self.n_heads // self.n_kv_heads


@dataclass(frozen=True)
class AspectProfile:
    """Fixed-aspect model family used to map a parameter count to a shape.

    ``n_ctx`` and ``n_vocab`` feed the closed-form FLOP approximation.
    """

    rho_model: float = 128.0
    rho_ffn: float = 8 / 3
    n_ffn: int = 3
    g_size: int = 1
    n_ctx: int = DEFAULT_CTX
    n_vocab: int = APPROX_VOCAB

    def __post_init__(self):
        if self.rho_model <= 0 or self.rho_ffn <= 0 or self.n_ffn <= 0 or self.g_size <= 0:
            raise ValueError("aspect profile entries must be positive")

    @property
    def omega(self) -> float:
        return 2 + 2 / self.g_size + self.n_ffn * self.rho_ffn

    @property
    def sigma1(self) -> float:
        return (self.rho_model * self.omega**2) ** (-1 / 3)

    @property
    def sigma2(self) -> float:
        return (self.rho_model / self.omega) ** (1 / 3)


DEFAULT_PROFILE = AspectProfile()


@dataclass(frozen=True)
class ParamBreakdown:
    embedding: int
    attention_per_layer: int
    ffn_per_layer: int
    output_norm: int
    n_layers: int

    @property
    def n_nonembedding(self) -> int:
        return self.n_layers * (self.attention_per_layer + self.ffn_per_layer) + self.output_norm

    @property
    def n_total(self) -> int:
        return self.n_nonembedding + self.embedding


def param_counts(arch: Architecture) -> ParamBreakdown:
    d, dh = arch.d_model, arch.d_head
    # q/o projections for all heads, k/v for kv heads, qk-norm scales, pre-attn norm
    attn = 2 * (arch.n_heads + arch.n_kv_heads) * dh * d + 2 * dh + d
    ffn = arch.n_ffn * d * arch.d_ffn + d
    return ParamBreakdown(
        embedding=arch.n_vocab * d,
        attention_per_layer=attn,
        ffn_per_layer=ffn,
        output_norm=d,
        n_layers=arch.n_layers,
    )


def flops_per_token_forward(arch: Architecture) -> float:
    """Forward FLOPs per token, attention at full context length."""
    d, dh, ctx = arch.d_model, arch.d_head, arch.n_ctx
    attn = (4 * arch.n_heads * dh * (d + ctx / 2)
            + 4 * arch.n_kv_heads * d * dh
            + 2.5 * arch.n_heads * ctx)
    ffn = 2 * arch.n_ffn * d * arch.d_ffn
    return 2 * d + arch.n_layers * (attn + ffn) + 2 * arch.n_vocab * d


def flops_backward(forward):
    """Backward pass FLOPs, taken as twice the forward pass."""
    return 2 * forward


def sigma_constants(profile: AspectProfile = DEFAULT_PROFILE) -> tuple[float, float]:
    return profile.sigma1, profile.sigma2


def flops_forward_from_N(N, profile: AspectProfile = DEFAULT_PROFILE,
                         n_ctx: int | None = None, n_vocab: int | None = None):
    """Closed-form forward FLOPs per token as a function of non-embedding params.

    Works elementwise on numpy arrays.
    """
    ctx = profile.n_ctx if n_ctx is None else n_ctx
    vocab = profile.n_vocab if n_vocab is None else n_vocab
    return 2 * N * (1 + profile.sigma1 * ctx / N ** (1 / 3)
                    + profile.sigma2 * vocab / N ** (2 / 3))


def round_ffn(d_model: int, rho_ffn: float, multiple: int = 128) -> int:
    return int(math.ceil(rho_ffn * d_model / multiple)) * multiple


def arch_from_N(N: float, profile: AspectProfile = DEFAULT_PROFILE,
                d_head: int = DEFAULT_D_HEAD) -> tuple[int, int]:
    """Return (n_layers, d_model) for the fixed-aspect family closest to N."""
    if not N > 0:
        raise ValueError("N must be positive")
    n_layers = max(1, round((N / (profile.rho_model**2 * profile.omega)) ** (1 / 3)))
    d_model = max(1, round(profile.rho_model * n_layers / d_head)) * d_head
    return n_layers, d_model


def fixed_aspect_arch(n_layers: int, profile: AspectProfile = DEFAULT_PROFILE,
                      d_head: int = DEFAULT_D_HEAD, n_vocab: int = DEFAULT_VOCAB,
                      n_ctx: int = DEFAULT_CTX) -> Architecture:
    d_model = max(1, round(profile.rho_model * n_layers / d_head)) * d_head
    n_heads = d_model // d_head
    if n_heads % profile.g_size:
        raise ValueError("head count not divisible by the group size")
    return Architecture(
        n_layers=n_layers, d_model=d_model, d_head=d_head, n_heads=n_heads,
        n_kv_heads=n_heads // profile.g_size,
        d_ffn=round_ffn(d_model, profile.rho_ffn), n_ffn=profile.n_ffn,
        n_vocab=n_vocab, n_ctx=n_ctx,
    )


def load_model_sizes() -> list[dict]:
    """Bundled reference grid of 33 fixed-aspect models (sizes in billions)."""
    text = resources.files("distill_scaling").joinpath("data/model_sizes.csv").read_text()
    rows = []
    for r in csv.DictReader(text.splitlines()):
        row = {"name": r["name"]}
        for k, v in r.items():
            if k == "name":
                continue
            row[k] = int(v) if k in ("n_layers", "d_model", "d_ffn") else float(v)
        rows.append(row)
    return rows


def accounting_row(arch: Architecture, profile: AspectProfile = DEFAULT_PROFILE,
                   name: str = "") -> dict:
    """One row of the accounting table for a concrete architecture."""
    pc = param_counts(arch)
    N = pc.n_nonembedding
    c = flops_per_token_forward(arch)
    c2 = 2.0 * N
    cs = float(flops_forward_from_N(N, profile))
    return {
        "name": name,
        "N": N,
        "N_total": pc.n_total,
        "n_layers": arch.n_layers,
        "d_model": arch.d_model,
        "d_ff": arch.d_ffn,
        "C_fwd": c,
        "C_fwd_approx_2N": c2,
        "rel_err_2N": c2 / c - 1,
        "C_fwd_approx_sigma": cs,
        "rel_err_sigma": cs / c - 1,
    }


def model_size_rows(profile: AspectProfile = DEFAULT_PROFILE) -> list[dict]:
    out = []
    for ref in load_model_sizes():
        arch = fixed_aspect_arch(ref["n_layers"], profile)
        out.append(accounting_row(arch, profile, ref["name"]))
    return out
