"""Chebyshev / density-of-states machinery behind the efficient EigenScore.

Spectra of the scaled Gram operator live in ``[0, 1]``. Chebyshev
polynomials live on ``[-1, 1]``, so everything here works with the shifted
variable ``x = 2*lam - 1``: the operator is ``C_s = 2*C - I`` and the
log integrand is ``log((1 + x) / 2)``.
"""

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_int
from .exceptions import DimensionError
from .linalg import gram_apply

#: grading exponent of the endpoint-clustered quadrature used for the log coefficients
GRADING_POWER = 3
#: intermediate Chebyshev vectors growing past this factor signal a bad scaling
EXPLOSION_FACTOR = 1e8


class SpectrumWarning(RuntimeWarning):
    """Operator spectrum appears to leave the Chebyshev interval."""


@dataclass(frozen=True)
class MomentSet:
    """Stochastic estimates ``d_0..d_M`` of the density-of-states moments."""

    moments: np.ndarray
    n_samples: int
    seed: int
    probe: str = "gaussian"

    @property
    def M(self):
        return len(self.moments) - 1


@dataclass(frozen=True)
class LogCoefficients:
    """Chebyshev coefficients ``c_0..c_M`` of ``log`` on the unit interval."""

    coeffs: np.ndarray
    quad_points: int
    lambda_floor: float

    @property
    def M(self):
        return len(self.coeffs) - 1


def cheb_eval(n, x):
    """Chebyshev polynomial of the first kind ``T_n(x)`` by three-term recurrence.

    ``x`` is clamped to ``[-1, 1]``; arrays are evaluated element-wise.
    """
    n = check_positive_int(n, "n", minimum=0)
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    t_prev = np.ones_like(x)
    if n == 0:
        return t_prev if t_prev.ndim else float(t_prev)
    t_cur = x.copy()
    for _ in range(n - 1):
        t_prev, t_cur = t_cur, 2.0 * x * t_cur - t_prev
    return t_cur if t_cur.ndim else float(t_cur)


def _shifted_apply(E, v):
    return 2.0 * gram_apply(E, v) - v


def cheb_apply_sequence(E_norm, z, M):
    """Quadratic forms ``q_m = z^T T_m(C_s) z`` for ``m = 0..M``.

    ``C_s = 2 E^T E - I`` is applied through :func:`gram_apply` exactly ``M``
    times; the Gram matrix is never formed. ``z`` may be a single probe of
    length ``K`` or a ``(K, p)`` block of probes, giving a result of shape
    ``(M + 1,)`` or ``(M + 1, p)``.
    """
    E_norm = np.asarray(E_norm, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    M = check_positive_int(M, "M", minimum=0)
    if E_norm.ndim != 2 or z.ndim not in (1, 2) or z.shape[0] != E_norm.shape[1]:
        raise DimensionError(
            f"probe of shape {z.shape} does not match operator with {E_norm.shape[-1]} columns"
        )

    out = np.empty((M + 1,) + z.shape[1:])
    out[0] = np.sum(z * z, axis=0)
    if M == 0:
        return out
    limit = EXPLOSION_FACTOR * max(float(np.linalg.norm(z)), np.finfo(float).tiny)
    t_prev = z
    t_cur = _shifted_apply(E_norm, z)
    out[1] = np.sum(z * t_cur, axis=0)
    warned = False
    for m in range(2, M + 1):
        t_prev, t_cur = t_cur, 2.0 * _shifted_apply(E_norm, t_cur) - t_prev
        out[m] = np.sum(z * t_cur, axis=0)
        if not warned and np.linalg.norm(t_cur) > limit:
            warnings.warn(
                f"Chebyshev vectors grew by more than {EXPLOSION_FACTOR:g}x at m={m}; "
                "the operator spectrum is probably outside [0, 1]",
                SpectrumWarning,
                stacklevel=2,
            )
            warned = True
    return out


def draw_probes(K, n_samples, seed, probe="gaussian"):
    """Probe block of shape ``(K, n_samples)``; column ``j`` is probe ``z_j``.

    Probes are drawn row-major from one seeded stream, so probe ``j`` does
    not depend on how many probes are requested in total.
    """
    rng = np.random.default_rng(seed)
    if probe == "gaussian":
        Z = rng.standard_normal((n_samples, K))
    elif probe == "rademacher":
        Z = rng.integers(0, 2, size=(n_samples, K)).astype(np.float64) * 2.0 - 1.0
    else:
        raise ValueError(f"unknown probe distribution {probe!r}")
    return np.ascontiguousarray(Z.T)


def dos_moments(E_norm, M, N_z, seed, probe="gaussian"):
    """Hutchinson estimate of the density-of-states moments of ``C_s``.

    ``d_m = (1/K) (1/N_z) sum_j z_j^T T_m(C_s) z_j`` with i.i.d. probes of
    length ``K = E_norm.shape[1]``. ``E_norm`` must already be standardized
    and scaled so that the spectrum of ``E_norm^T E_norm`` is inside
    ``[0, 1]``.
    """
    E_norm = np.asarray(E_norm, dtype=np.float64)
    M = check_positive_int(M, "M", minimum=0)
    N_z = check_positive_int(N_z, "N_z")
    K = E_norm.shape[1]
    Z = draw_probes(K, N_z, seed, probe)
    q = cheb_apply_sequence(E_norm, Z, M)
    d = q.sum(axis=1) / (K * N_z)
    return MomentSet(moments=d, n_samples=N_z, seed=seed, probe=probe)


def gauss_chebyshev_rule(N):
    """Nodes and weights of the ``N``-point Gauss-Chebyshev rule.

    ``sum(w * f(x))`` approximates ``int_{-1}^{1} f(x) / sqrt(1 - x^2) dx``
    and is exact for polynomials of degree below ``2N``.
    """
    N = check_positive_int(N, "N")
    theta = math.pi * (np.arange(N) + 0.5) / N
    return np.cos(theta), np.full(N, math.pi / N)


def _graded_angle_rule(N):
    """Quadrature for ``int_0^pi g(theta) d theta`` clustered at ``theta = pi``.

    The log integrand has an integrable singularity at ``lam = 0``
    (``theta = pi``) that a plain Gauss-Chebyshev rule only resolves to
    ``O(1/N)``. The substitution ``theta = pi (1 - (1 - t)^p)`` flattens it,
    and the resulting smooth integral over ``t`` is evaluated with the
    ``N``-point Gauss-Chebyshev rule (weight divided back out).
    """
    x, w = gauss_chebyshev_rule(N)
    t = 0.5 * (1.0 + x)
    p = GRADING_POWER
    theta = math.pi * (1.0 - (1.0 - t) ** p)
    jac = math.pi * p * (1.0 - t) ** (p - 1)
    weights = w * np.sqrt(1.0 - x * x) * 0.5 * jac
    return theta, weights


@functools.lru_cache(maxsize=64)
def _log_coefficients(M, N_q, lambda_floor):
    theta, weights = _graded_angle_rule(N_q)
    lam = 0.5 * (1.0 + np.cos(theta))
    f = np.log(np.maximum(lam, lambda_floor)) * weights
    m = np.arange(M + 1)
    c = np.cos(np.outer(m, theta)) @ f
    c[0] /= math.pi
    c[1:] *= 2.0 / math.pi
    c.setflags(write=False)
    return c


def log_cheb_coefficients(M, N_q, lambda_floor=1e-8):
    """Coefficients ``c_m = int_0^1 log(lam) T*_m(lam) d lam``.

    ``T*_m`` is the weighted shifted Chebyshev polynomial
    ``2 / ((1 + delta_0m) pi sqrt(1 - x^2)) T_m(x)`` with ``x = 2 lam - 1``,
    so that ``sum_m c_m T_m(2 lam - 1)`` is the Chebyshev series of
    ``log(lam)``. The logarithm's argument is floored at ``lambda_floor``.
    Results are cached per ``(M, N_q, lambda_floor)``.
    """
    M = check_positive_int(M, "M", minimum=0)
    N_q = check_positive_int(N_q, "N_q")
    if N_q < 4 * (M + 1):
        raise ValueError(f"N_q must be at least 4*(M+1) = {4 * (M + 1)}, got {N_q}")
    lambda_floor = float(lambda_floor)
    if not 0.0 < lambda_floor <= 1e-3:
        raise ValueError(f"lambda_floor must lie in (0, 1e-3], got {lambda_floor}")
    return LogCoefficients(
        coeffs=_log_coefficients(M, N_q, lambda_floor),
        quad_points=N_q,
        lambda_floor=lambda_floor,
    )


def combine_ees(d, c, K):
    """``(1/K) * sum_m d_m c_m``."""
    d = np.asarray(getattr(d, "moments", d), dtype=np.float64)
    c = np.asarray(getattr(c, "coeffs", c), dtype=np.float64)
    if d.shape != c.shape or d.ndim != 1:
        raise DimensionError(f"moment/coefficient length mismatch: {d.shape} vs {c.shape}")
    K = check_positive_int(K, "K")
    return float(d @ c) / K
