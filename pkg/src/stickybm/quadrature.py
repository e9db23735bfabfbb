"""Log-domain adaptive quadrature for severely scaled positive integrands.

Everything here integrates ``exp(log_f)`` for a vectorized ``log_f`` and
returns the log of the integral.  Working in the log domain with running
max-exponent shifts keeps integrals of densities like ``exp(-c/eps)`` finite
down to ``eps ~ 1e-3``, where the raw formulas underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["QuadratureSpec", "QuadratureError", "log_integrate", "gauss_legendre"]

_NEG_INF = -math.inf


class QuadratureError(RuntimeError):
    """Tolerance not met within the subdivision budget; never silently inaccurate."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Adaptive panel control.

    ``endpoint_substitution`` enables the ``u = 1/(1-L)`` change of variables
    near the singular endpoint of local-time integrals (see kernel module).
    """

    relative_tolerance: float = 1e-10
    max_subdivisions: int = 20
    endpoint_substitution: bool = True

    def __post_init__(self):
        if not (0.0 < self.relative_tolerance <= 1e-2):
            raise ValueError("relative_tolerance must lie in (0, 1e-2]")
        if self.max_subdivisions < 8:
            raise ValueError("max_subdivisions must be at least 8")


@lru_cache(maxsize=16)
def gauss_legendre(n: int):
    """Cached Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _logsumexp(values) -> float:
    values = np.asarray(values, dtype=float)
    values = values[~np.isnan(values)]
    if values.size == 0:
        return _NEG_INF
    m = np.max(values)
    if m == _NEG_INF:
        return _NEG_INF
    return float(m + np.log(np.sum(np.exp(values - m))))


def _panel(log_f, a: float, b: float, nodes, log_w) -> float:
    """log of the fixed-order Gauss-Legendre estimate of int_a^b exp(log_f)."""
    width = b - a
    vals = np.asarray(log_f(a + width * nodes), dtype=float)
    return _logsumexp(vals + log_w + math.log(width))


def log_integrate(log_f, a: float, b: float, spec: QuadratureSpec,
                  order: int = 15, split_points=()) -> float:
    """log of ``int_a^b exp(log_f(t)) dt`` by adaptive bisection.

    ``log_f`` must accept a 1-D array of nodes.  ``split_points`` seeds panel
    boundaries (pass interior maxima so boundary layers sit at panel ends,
    where dyadic refinement resolves them).  Raises :class:`QuadratureError`
    when a relevant panel still disagrees at ``max_subdivisions`` levels.
    """
    if not b > a:
        raise ValueError("need b > a")
    nodes, w = gauss_legendre(order)
    log_w = np.log(w)

    edges = sorted({float(a), float(b), *(float(s) for s in split_points if a < s < b)})
    stack = []
    for lo, hi in zip(edges, edges[1:]):
        stack.append((lo, hi, _panel(log_f, lo, hi, nodes, log_w), 0))

    # Panels contributing less than rtol * total never need refining; use a
    # coarse first-pass total as the pruning scale.
    coarse_total = _logsumexp([p[2] for p in stack])
    rtol = spec.relative_tolerance
    prune = coarse_total + math.log(rtol) - math.log(64.0)

    accepted = []
    while stack:
        lo, hi, est, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left = _panel(log_f, lo, mid, nodes, log_w)
        right = _panel(log_f, mid, hi, nodes, log_w)
        fine = np.logaddexp(left, right)
        if fine == _NEG_INF and est == _NEG_INF:
            continue
        if fine <= prune and est <= prune:
            accepted.append(fine)
            continue
        err = abs(math.expm1(min(est - fine, 700.0))) if fine != _NEG_INF else math.inf
        if err <= 0.25 * rtol:
            accepted.append(fine)
            continue
        if depth >= spec.max_subdivisions:
            raise QuadratureError(
                f"panel [{lo:.6g}, {hi:.6g}] disagrees by {err:.3e} after "
                f"{depth} subdivisions (tolerance {rtol:.1e})")
        stack.append((lo, mid, left, depth + 1))
        stack.append((mid, hi, right, depth + 1))
    return _logsumexp(accepted)


def log_integrate_halfline(log_f, a: float, spec: QuadratureSpec,
                           scale: float, order: int = 15) -> float:
    """log of ``int_a^inf exp(log_f)`` for integrands decaying at rate ~1/scale.

    Doubles the truncation point until the last block is negligible relative
    to the running total.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    total = _NEG_INF
    lo = a
    hi = a + 8.0 * scale
    for _ in range(60):
        block = log_integrate(log_f, lo, hi, spec, order=order)
        total = np.logaddexp(total, block)
        if block < total + math.log(spec.relative_tolerance) - math.log(16.0):
            return float(total)
        lo, hi = hi, hi + 2.0 * (hi - a)
    raise QuadratureError("half-line integral did not converge while extending the domain")
