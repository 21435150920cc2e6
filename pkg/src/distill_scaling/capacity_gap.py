"""Capacity gap in a toy kernel-regression setting, plus the mapping-task label.

A target function has coefficients ``alpha`` in an orthonormal basis. A teacher
sees the first m basis functions under a norm budget T; a student sees the
first n under budget D and learns from the teacher. Both project onto the
ball, which gives closed forms for every error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


@dataclass(frozen=True)
class KernelSetup:
    alpha: np.ndarray
    T: float
    D: float

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 1 or a.size == 0 or not np.all(np.isfinite(a)):
            raise ValueError("alpha must be a non-empty finite vector")
        if not (self.T > 0 and self.D > 0):
            raise ValueError("budgets must be positive")
        object.__setattr__(self, "alpha", a)


def random_setup(size: int = 1000, T: float = 5.0, D: float = 4.5, seed: int = 0) -> KernelSetup:
    """Coefficients drawn uniformly from [-1, 1]."""
    rng = np.random.default_rng(seed)
    return KernelSetup(rng.uniform(-1.0, 1.0, size), T, D)


def _check(m, n, size):
    if not (isinstance(m, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise ValueError("m and n must be integers")
    if not (1 <= m <= size and 1 <= n <= size):
        raise ValueError("m and n must lie in [1, len(alpha)]")


def teacher_coefficient(setup: KernelSetup, m: int) -> float:
    """Shrinkage C applied to the first m coefficients."""
    _check(m, 1, setup.alpha.size)
    norm = float(np.linalg.norm(setup.alpha[:m]))
    return 1.0 if norm <= setup.T else setup.T / norm


def student_coefficient(setup: KernelSetup, m: int, n: int) -> float:
    """Extra shrinkage Q the student applies on top of the teacher's C."""
    _check(m, n, setup.alpha.size)
    k = min(m, n)
    scaled = teacher_coefficient(setup, m) * float(np.linalg.norm(setup.alpha[:k]))
    return 1.0 if scaled <= setup.D else setup.D / scaled


def teacher_error(setup: KernelSetup, m: int) -> float:
    a = setup.alpha
    c = teacher_coefficient(setup, m)
    return math.sqrt((c - 1) ** 2 * float(a[:m] @ a[:m]) + float(a[m:] @ a[m:]))


def student_error(setup: KernelSetup, m: int, n: int) -> float:
    a = setup.alpha
    k = min(m, n)
    _check(m, n, a.size)
    norm_k = float(np.linalg.norm(a[:k]))
    c = teacher_coefficient(setup, m)
    # when the student budget binds, C * Q collapses to D / ||alpha_1:k||
    cq = setup.D / norm_k if c * norm_k > setup.D else c
    return math.sqrt((cq - 1) ** 2 * float(a[:k] @ a[:k]) + float(a[k:] @ a[k:]))


def teacher_solution(setup: KernelSetup, m: int) -> tuple[float, float]:
    """(C, teacher error) for a teacher of capacity m."""
    return teacher_coefficient(setup, m), teacher_error(setup, m)


def student_solution(setup: KernelSetup, m: int, n: int) -> tuple[float, float]:
    """(Q, student error) for a student of capacity n taught by a teacher of capacity m."""
    return student_coefficient(setup, m, n), student_error(setup, m, n)


def u_shape_scan(setup: KernelSetup, n: int, m_range) -> np.ndarray:
    """Student errors over increasing teacher capacities."""
    ms = [int(m) for m in m_range]
    if any(b <= a for a, b in zip(ms, ms[1:])):
        raise ValueError("m_range must be strictly increasing")
    return np.array([student_error(setup, m, n) for m in ms])


# -- independent numeric route ----------------------------------------------

def _project_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """argmin ||x - v|| s.t. ||x|| <= radius, found from the KKT multiplier."""
    norm = float(np.linalg.norm(v))
    if norm <= radius:
        return v.copy()
    # x = v / (1 + mu) with ||x|| = radius; solve for mu >= 0
    mu = brentq(lambda u: norm / (1 + u) - radius, 0.0, norm / radius, xtol=1e-15, rtol=1e-15)
    return v / (1 + mu)


def errors_by_projection(setup: KernelSetup, m: int, n: int) -> tuple[float, float]:
    """(teacher error, student error) from explicit coefficient vectors.

    The teacher fits alpha on its first m features under the norm budget; the
    student fits the teacher's function on its first n features under its own
    budget. Errors are norms of the full coefficient differences.
    """
    _check(m, n, setup.alpha.size)
    a = setup.alpha
    teacher = np.zeros_like(a)
    teacher[:m] = _project_ball(a[:m], setup.T)
    student = np.zeros_like(a)
    student[:n] = _project_ball(teacher[:n], setup.D)
    return float(np.linalg.norm(teacher - a)), float(np.linalg.norm(student - a))


def error_curve(setup: KernelSetup, n: int, ms) -> list[dict]:
    return [{"m": int(m), "n": int(n), "student_error": student_error(setup, int(m), n),
             "teacher_error": teacher_error(setup, int(m))} for m in ms]


# -- mapping task -----------------------------------------------------------

def mapping_label(vector, num_classes: int = 8) -> int:
    """Label for a concatenated (context, one-hot) vector.

    If the one-hot position holds a zero in the context, that position is the
    label. Otherwise the label is the other context position holding the
    same value.
    """
    if isinstance(vector, str):
        if not vector.isdigit():
            raise ValueError("string input must consist of digits")
        vector = [int(ch) for ch in vector]
    v = np.asarray(vector)
    if v.ndim != 1 or v.size != 2 * num_classes:
        raise ValueError(f"expected a vector of length {2 * num_classes}")
    context, one_hot = v[:num_classes], v[num_classes:]
    if not np.isin(one_hot, (0, 1)).all() or one_hot.sum() != 1:
        raise ValueError("second half must be one-hot")
    i = int(np.flatnonzero(one_hot == 1)[0])
    if context[i] == 0:
        return i
    matches = np.flatnonzero(context == context[i])
    rest = matches[matches != i]
    if rest.size != 1:
        raise ValueError("context value does not identify a unique partner position")
    return int(rest[0])
