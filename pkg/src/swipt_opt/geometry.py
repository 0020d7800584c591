"""
Stochastic-geometry kernels.

The serving BS sits at the origin of a polar frame and the typical user at
``(0, -r)``. A point ``(x, theta)`` belongs to the same Voronoi cell as the
user's BS when no other BS falls in the part of the disc of radius ``x``
around it that the user's own empty disc does not already cover; that part has
area ``A(r, x, theta)``.

The cell-mass integral

    J(r; lam) = int_0^inf int_0^2pi exp(-lam * A(r, x, theta)) x dtheta dx

is scale invariant: substituting ``x -> x / sqrt(lam)`` gives
``J(r; lam) = Jt(r * sqrt(lam)) / lam`` where ``Jt`` is the kernel at unit
density. One dimensionless table of ``Jt`` therefore serves every density.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .core import NumericsConfig

__all__ = [
    "QuadratureError",
    "KernelTable",
    "overlap_area",
    "lens_area",
    "cell_mass",
    "unit_cell_mass",
    "build_kernel_table",
    "f_of_r",
    "cdf_r",
    "cdf_r_inv",
    "cdf_r_numeric",
]

# exp(-27.631) = 1e-12, used for the outer x truncation
_TAIL_LOG = -math.log(1e-12)


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def _t_minus_sin(t):
    """``t - sin(t)`` without cancellation for small ``t``."""
    t = np.asarray(t, dtype=float)
    t2 = t * t
    series = t * t2 / 6.0 * (1 - t2 / 20.0 * (1 - t2 / 42.0 * (1 - t2 / 72.0 * (1 - t2 / 110.0))))
    return np.where(t < 0.1, series, t - np.sin(t))


def lens_area(r, x, theta):
    """Area shared by the disc of radius ``x`` at ``(x, theta)`` and the disc
    of radius ``r`` centred at ``(0, -r)``."""
    r, x, theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r, x, theta)))
    s = np.sin(theta)
    d2 = x * x + r * r + 2.0 * x * r * s
    d = np.sqrt(np.maximum(d2, 0.0))
    tiny = d <= 1e-300 + 1e-14 * (r + x)
    # d - r and the cosine numerators in factored form: the naive ones cancel when x << r
    d_minus_r = x * (x + 2.0 * r * s) / (d + r)
    d_minus_x = r * (r + 2.0 * x * s) / (d + x)
    k = np.maximum((x - d_minus_r) * (d_minus_x + r) * (d_minus_r + x) * (d + r + x), 0.0)
    k = np.sqrt(k)
    # half-angles of the chord seen from each centre; disjoint and nested cases fall out as 0 or pi
    a1 = np.arctan2(k, 2.0 * r * (r + x * s))
    a2 = np.arctan2(k, 2.0 * x * (x + r * s))
    lens = 0.5 * r * r * _t_minus_sin(2.0 * a1) + 0.5 * x * x * _t_minus_sin(2.0 * a2)
    # coincident centres: the smaller disc lies inside the larger one
    lens = np.where(tiny, math.pi * np.minimum(r, x) ** 2, lens)
    lens = np.clip(lens, 0.0, math.pi * np.minimum(r, x) ** 2)
    return lens


def overlap_area(r, x, theta):
    """Area of the disc of radius ``x`` at polar ``(x, theta)`` not covered by
    the disc of radius ``r`` centred at ``(0, -r)`` [m^2].

    Scalars in, float out; arrays broadcast.
    """
    x_arr = np.asarray(x, dtype=float)
    out = math.pi * x_arr ** 2 - lens_area(r, x, theta)
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def _x_max(s):
    return math.sqrt(s * s + _TAIL_LOG / math.pi)


# Inner theta rule for the fast table build. The integrand is even about
# theta = pi/2 so the half range [-pi/2, pi/2] is integrated and doubled.
_GL_THETA = 96


@lru_cache(maxsize=None)
def _theta_nodes(n=_GL_THETA):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * math.pi * t, 0.5 * math.pi * w


def _theta_integral_fast(s, x):
    th, w = _theta_nodes()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a = overlap_area(s, x[:, None], th[None, :])
    return 2.0 * (np.exp(-a) @ w) * x


def _unit_cell_mass_fast(s):
    if s == 0.0:
        return 1.0
    xm = _x_max(s)
    pts = sorted({min(s, xm), min(2 * s, xm)})
    total = 0.0
    lo = 0.0
    for hi in pts + [xm]:
        if hi <= lo:
            continue
        val, _ = integrate.fixed_quad(lambda xx: _theta_integral_fast(s, xx), lo, hi, n=80)
        total += val
        lo = hi
    return total


def unit_cell_mass(s, rel_tol=1e-6, fast=False):
    """Dimensionless cell mass ``Jt(s)`` at unit BS density.

    ``fast`` uses fixed Gauss-Legendre rules; otherwise nested adaptive
    quadrature is used and ``QuadratureError`` raised on failure.
    """
    s = float(s)
    if s < 0:
        raise ValueError("s must be nonnegative")
    if fast:
        return _unit_cell_mass_fast(s)
    if s == 0.0:
        return 1.0

    def inner(x):
        val, err = integrate.quad(
            lambda t: math.exp(-overlap_area(s, x, t)), -0.5 * math.pi, 0.5 * math.pi,
            epsabs=0.0, epsrel=rel_tol * 0.1, limit=200)
        return 2.0 * val * x

    xm = _x_max(s)
    brk = [p for p in (s, 2 * s) if p < xm]
    with warnings.catch_warnings():
        # the error estimate is checked below instead
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(inner, 0.0, xm, epsabs=0.0, epsrel=rel_tol,
                                  points=brk or None, limit=200, full_output=1)[:2]
    if not np.isfinite(val) or err > max(10 * rel_tol * abs(val), 1e-14):
        raise QuadratureError(f"cell mass at s={s:g}: estimate {val:g} err {err:g}")
    return val


def cell_mass(lambda_b, r, numerics: NumericsConfig | None = None):
    """``J(r) = iint exp(-lambda_b A(r,x,theta)) x dtheta dx`` [m^2]."""
    if lambda_b <= 0 or r < 0:
        raise ValueError("need lambda_b > 0 and r >= 0")
    tol = (numerics or NumericsConfig()).quad_rel_tol
    return unit_cell_mass(r * math.sqrt(lambda_b), rel_tol=tol) / lambda_b


# universal table range in s = r*sqrt(lambda_b); pi*s_max^2 ~ 78 covers tail_mass 40
_S_MIN, _S_MAX, _N_TAB = 1e-4, 30.0, 320


@lru_cache(maxsize=1)
def _universal_table():
    s = np.geomspace(_S_MIN, _S_MAX, _N_TAB)
    j = np.array([_unit_cell_mass_fast(v) for v in s])
    s.flags.writeable = False
    j.flags.writeable = False
    return s, j


@dataclass(frozen=True)
class KernelTable:
    """Tabulated ``J(r)`` for one BS density, linear in ``log r``.

    Below the grid the value is held at its first entry (the kernel is flat
    there to within ``1e-8`` relative); above it, log-log extrapolation.
    """

    lambda_b: float
    r: np.ndarray
    j: np.ndarray

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        lr = np.log(np.maximum(r, self.r[0]))
        lg = np.log(self.r)
        out = np.interp(lr, lg, self.j)
        hi = r > self.r[-1]
        if np.any(hi):
            slope = (math.log(self.j[-1]) - math.log(self.j[-2])) / (lg[-1] - lg[-2])
            out = np.where(hi, self.j[-1] * np.exp(slope * (np.log(np.where(hi, r, 1.0)) - lg[-1])), out)
        return float(out) if out.ndim == 0 else out


def build_kernel_table(lambda_b: float) -> KernelTable:
    """Kernel table for ``lambda_b``, obtained by rescaling the unit table."""
    if lambda_b <= 0:
        raise ValueError("lambda_b must be positive")
    s, j = _universal_table()
    sq = math.sqrt(lambda_b)
    return KernelTable(float(lambda_b), s / sq, j / lambda_b)


def unit_kernel(s):
    """Interpolated ``Jt(s)`` from the universal table."""
    return build_kernel_table(1.0)(s)


def f_of_r(lambda_u, gamma, phi, y, J):
    """Mean weighted population of the serving cell, ``lambda_u (y + gamma (phi - y)) J``."""
    return lambda_u * (y + gamma * (phi - y)) * J


def cdf_r(lambda_b, r):
    """Serving-distance CDF ``1 - exp(-lambda_b pi r^2)``."""
    r = np.asarray(r, dtype=float)
    out = -np.expm1(-lambda_b * math.pi * r * r)
    return float(out) if out.ndim == 0 else out


def cdf_r_inv(lambda_b, p):
    """Inverse of :func:`cdf_r` for ``p`` in ``[0, 1)``."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p >= 1)):
        raise ValueError("p must lie in [0, 1)")
    out = np.sqrt(-np.log1p(-p) / (lambda_b * math.pi))
    return float(out) if out.ndim == 0 else out


def cdf_r_numeric(lambda_b, r):
    """Serving-distance CDF by direct quadrature of the Rayleigh density."""
    val, _ = integrate.quad(
        lambda y: math.exp(-lambda_b * math.pi * y * y) * lambda_b * 2 * math.pi * y,
        0.0, float(r), epsabs=1e-13, epsrel=1e-12, limit=200)
    return val
