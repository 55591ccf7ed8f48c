"""Linear dispersion analytics for arbitrary vertical exponent sets.

The linearized flat-bottom model has plane-wave phase speed

    c_model(mu)^2 = g h * (mu^-2 det A(mu)) / det Atilde(mu),
    A(mu) = mu^2 A0 + A1,   mu = h |xi|,

where A0[i,j] = 1/(p_i+p_j+1), A1[i,j] = p_i p_j/(p_i+p_j-1) under the
0/0 -> 0 convention, and Atilde borders A with a row/column of ones.
Both determinants are polynomials in mu^2 of degree N; they are
extracted here by interpolation so the mu -> 0 cancellation is exact.

For p_i = 2i the squared phase speed coincides with the [2N/2N]
rational (Pade-type) approximant of tanh(mu)/mu; ``pade_reference``
builds that approximant independently by Taylor matching.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import PadeDegenerate
from .model import validate_exponents


def frac(num: float, den: float) -> float:
    """Exponent-ratio coefficient under the 0/0 -> 0 convention."""
    if num == 0:
        return 0.0
    return num / den


@dataclass(frozen=True)
class DispersionMatrices:
    """The constant matrices of the linearized flat-bottom system."""

    p: tuple[int, ...]
    A0: np.ndarray
    A1: np.ndarray

    def A(self, mu: float) -> np.ndarray:
        return mu * mu * self.A0 + self.A1


def build_matrices(p) -> DispersionMatrices:
    """Assemble A0 and A1 for an exponent list (raises BadExponents)."""
    p = validate_exponents(p)
    n = len(p)
    A0 = np.empty((n, n))
    A1 = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            A0[i, j] = 1.0 / (p[i] + p[j] + 1)
            A1[i, j] = frac(p[i] * p[j], p[i] + p[j] - 1)
    return DispersionMatrices(p, A0, A1)


def bordered(A: np.ndarray) -> np.ndarray:
    """Border a square matrix with a 0 corner, +1 row and -1 column."""
    n = A.shape[0]
    out = np.zeros((n + 1, n + 1))
    out[0, 1:] = 1.0
    out[1:, 0] = -1.0
    out[1:, 1:] = A
    return out


def bordered_det(A: np.ndarray) -> float:
    """Determinant of the bordered matrix (LU with partial pivoting)."""
    return float(np.linalg.det(bordered(np.asarray(A, dtype=float))))


def _cheb_nodes(count: int, lo: float = 0.5, hi: float = 4.5) -> np.ndarray:
    theta = (2 * np.arange(count) + 1) * np.pi / (2 * count)
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(theta)


@lru_cache(maxsize=None)
def _det_polynomials(p: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (low to high, in x = mu^2) of mu^-2 det A and det Atilde.

    det A(mu) is a degree N+1 polynomial in x with zero constant term;
    it is sampled at N+2 nodes, interpolated, and the constant term is
    dropped after checking it vanishes to rounding.  det Atilde has
    degree N and is interpolated directly.
    """
    mats = build_matrices(p)
    n = len(p)  # N + 1

    nodes = _cheb_nodes(n + 1)
    vals = np.array([np.linalg.det(x * mats.A0 + mats.A1) for x in nodes])
    V = npoly.polyvander(nodes, n)
    coeffs = np.linalg.solve(V, vals)
    if abs(coeffs[0]) > 1e-9 * np.max(np.abs(coeffs)):
        raise ArithmeticError(
            "constant term of det A(mu) did not cancel; exponent list "
            f"{p} yields ill-conditioned interpolation")
    det_a_over_x = coeffs[1:].copy()

    nodes_t = _cheb_nodes(n)
    vals_t = np.array([bordered_det(x * mats.A0 + mats.A1) for x in nodes_t])
    Vt = npoly.polyvander(nodes_t, n - 1)
    det_at = np.linalg.solve(Vt, vals_t)
    return det_a_over_x, det_at


def phase_speed_ik(mu, p, g: float = 1.0, h: float = 1.0):
    """Squared model phase speed g h * (mu^-2 det A)/det Atilde at ``mu``.

    The mu^-2 factor is taken analytically, so mu = 0 returns the exact
    long-wave limit g h.
    """
    p = validate_exponents(p)
    num, den = _det_polynomials(p)
    x = np.square(np.asarray(mu, dtype=float))
    return g * h * npoly.polyval(x, num) / npoly.polyval(x, den)


def phase_speed_ww(mu, g: float = 1.0, h: float = 1.0):
    """Squared reference water-wave phase speed g h tanh(mu)/mu (limit g h at 0)."""
    mu = np.asarray(mu, dtype=float)
    out = np.ones_like(mu)
    nz = mu != 0
    out[nz] = np.tanh(mu[nz]) / mu[nz]
    if out.ndim == 0:
        return float(g * h * out)
    return g * h * out


@lru_cache(maxsize=None)
def tanh_over_mu_series(m_max: int) -> tuple[Fraction, ...]:
    """Exact Maclaurin coefficients t_m of tanh(mu)/mu = sum t_m mu^(2m).

    Derived from the recurrence tanh' = 1 - tanh^2 in exact rational
    arithmetic; returns t_0..t_{m_max}.
    """
    order = 2 * m_max + 1
    c = [Fraction(0)] * (order + 2)
    for n in range(0, order + 1):
        conv = sum(c[i] * c[n - i] for i in range(n + 1))
        c[n + 1] = (Fraction(1 if n == 0 else 0) - conv) / (n + 1)
    return tuple(c[2 * m + 1] for m in range(m_max + 1))


@dataclass(frozen=True)
class PadeApprox:
    """Rational function P(mu^2)/Q(mu^2) with Q(0) = 1, coefficients low to high."""

    num: np.ndarray
    den: np.ndarray

    def __call__(self, mu):
        x = np.square(np.asarray(mu, dtype=float))
        return npoly.polyval(x, self.num) / npoly.polyval(x, self.den)


def pade_reference(N: int) -> PadeApprox:
    """[2N/2N] approximant of tanh(mu)/mu by Taylor-coefficient matching.

    Solves the order-N matching system in double precision and verifies
    the solve residual; a singular or inaccurate system raises
    PadeDegenerate rather than guessing.
    """
    if N < 1:
        raise PadeDegenerate("approximant order must be at least 1")
    t = np.array([float(v) for v in tanh_over_mu_series(2 * N)])
    M = np.empty((N, N))
    rhs = np.empty(N)
    for r in range(N):
        m = N + 1 + r
        rhs[r] = -t[m]
        for j in range(1, N + 1):
            M[r, j - 1] = t[m - j]
    try:
        q = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise PadeDegenerate(f"matching system singular for N={N}") from exc
    resid = np.linalg.norm(M @ q - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if resid > 1e-10:
        raise PadeDegenerate(f"matching residual {resid:.3e} too large for N={N}")
    den = np.concatenate(([1.0], q))
    num = np.array([np.dot(den[: min(m, N) + 1], t[m::-1][: min(m, N) + 1])
                    for m in range(N + 1)])
    return PadeApprox(num, den)


def _fraction_det(rows) -> Fraction:
    """Exact determinant of a square matrix of Fractions (Gaussian elimination)."""
    M = [list(r) for r in rows]
    n = len(M)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            M[c], M[piv] = M[piv], M[c]
            det = -det
        det *= M[c][c]
        for r in range(c + 1, n):
            f = M[r][c] / M[c][c]
            if f:
                for cc in range(c, n):
                    M[r][cc] -= f * M[c][cc]
    return det


def _fraction_interpolate(nodes, vals) -> list[Fraction]:
    """Exact polynomial coefficients through (nodes, vals), low to high."""
    n = len(nodes)
    A = [[nodes[r] ** k for k in range(n)] + [vals[r]] for r in range(n)]
    for c in range(n):
        piv = next(r for r in range(c, n) if A[r][c] != 0)
        A[c], A[piv] = A[piv], A[c]
        for r in range(n):
            if r != c and A[r][c]:
                f = A[r][c] / A[c][c]
                for cc in range(c, n + 1):
                    A[r][cc] -= f * A[c][cc]
    return [A[r][n] / A[r][r] for r in range(n)]


@lru_cache(maxsize=None)
def exact_det_polynomials(p: tuple[int, ...]) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
    """Exact rational coefficients (in x = mu^2) of mu^-2 det A and det Atilde.

    Companion to ``_det_polynomials`` for work near the rounding floor:
    the matrix entries are exact rationals, so sampling the determinants
    at integer nodes and interpolating in Fraction arithmetic gives the
    polynomials with no rounding at all.
    """
    p = validate_exponents(p)
    n = len(p)
    A0 = [[Fraction(1, p[i] + p[j] + 1) for j in range(n)] for i in range(n)]
    A1 = [[Fraction(p[i] * p[j], p[i] + p[j] - 1) if p[i] * p[j] else Fraction(0)
           for j in range(n)] for i in range(n)]

    def det_a(x):
        return _fraction_det([[A0[i][j] * x + A1[i][j] for j in range(n)] for i in range(n)])

    def det_at(x):
        M = [[Fraction(0)] * (n + 1) for _ in range(n + 1)]
        for j in range(n):
            M[0][j + 1] = Fraction(1)
        for i in range(n):
            M[i + 1][0] = Fraction(-1)
            for j in range(n):
                M[i + 1][j + 1] = A0[i][j] * x + A1[i][j]
        return _fraction_det(M)

    nodes = [Fraction(k) for k in range(n + 1)]
    ca = _fraction_interpolate(nodes, [det_a(x) for x in nodes])
    if ca[0] != 0:
        raise ArithmeticError("constant term of det A(mu) is nonzero; invalid exponents?")
    nodes_t = [Fraction(k) for k in range(n)]
    ct = _fraction_interpolate(nodes_t, [det_at(x) for x in nodes_t])
    return tuple(ca[1:]), tuple(ct)


@lru_cache(maxsize=None)
def _error_series(p: tuple[int, ...], terms: int) -> tuple[int, tuple[Fraction, ...]]:
    """Exact Maclaurin coefficients of tanh(mu)/mu - c2_ik(mu)/(gh) in x = mu^2.

    Returns (first nonzero index, coefficients from that index on).
    """
    num, den = exact_det_polynomials(p)
    series = []
    for m in range(terms):
        acc = num[m] if m < len(num) else Fraction(0)
        for j in range(1, min(m, len(den) - 1) + 1):
            acc -= den[j] * series[m - j]
        series.append(acc / den[0])
    t = tanh_over_mu_series(terms - 1)
    diff = [t[m] - series[m] for m in range(terms)]
    lead = next((m for m, v in enumerate(diff) if v != 0), None)
    if lead is None:
        raise ArithmeticError(f"no error term found within {terms} series terms")
    return lead, tuple(diff[lead:])


def phase_speed_error(p, mu, terms: int = 28):
    """|tanh(mu)/mu - (c_model/sqrt(gh))^2| evaluated from its exact series.

    Direct subtraction of the two curves hits the double-precision floor
    once the error drops below ~1e-13 of the curve values; summing the
    exact difference series avoids the cancellation entirely.  Accurate
    for mu well inside the tanh convergence radius (mu <= 1 is ample).
    """
    p = validate_exponents(p)
    lead, coeffs = _error_series(p, terms)
    x = np.square(np.asarray(mu, dtype=float))
    acc = np.zeros_like(x)
    for c in reversed([float(v) for v in coeffs]):
        acc = acc * x + c
    return np.abs(acc * x ** lead)


class _ExactMatch:
    """Sentinel returned when two curves agree to rounding (slope undefined)."""

    def __repr__(self):
        return "EXACT_MATCH"


EXACT_MATCH = _ExactMatch()


def error_scaling_fit(mu, values_a, values_b, window: tuple[float, float] | None = None):
    """Least-squares slope of log|a - b| against log mu inside ``window``.

    Returns the EXACT_MATCH sentinel when the difference is zero to
    rounding over the window.
    """
    mu = np.asarray(mu, dtype=float)
    diff = np.abs(np.asarray(values_a, dtype=float) - np.asarray(values_b, dtype=float))
    mask = mu > 0
    if window is not None:
        mask &= (mu >= window[0]) & (mu <= window[1])
    if not np.any(mask):
        raise ValueError("no samples inside the fit window")
    scale = max(np.max(np.abs(values_a)), np.max(np.abs(values_b)), 1e-300)
    if np.max(diff[mask]) <= 1e-13 * scale:
        return EXACT_MATCH
    mask &= diff > 0
    slope = np.polyfit(np.log(mu[mask]), np.log(diff[mask]), 1)[0]
    return float(slope)


@dataclass(frozen=True)
class PhaseSpeedCurve:
    """Sampled normalized squared phase speeds (c / sqrt(gh))^2."""

    mu: np.ndarray
    c2_ik: np.ndarray
    c2_ww: np.ndarray
    c2_pade: np.ndarray


def sample_phase_speeds(p, mu_max: float = 2.0, samples: int = 401) -> PhaseSpeedCurve:
    """Evaluate model, reference, and approximant curves on a uniform mu grid."""
    p = validate_exponents(p)
    mu = np.linspace(0.0, float(mu_max), int(samples))
    approx = pade_reference(len(p) - 1)
    return PhaseSpeedCurve(mu, phase_speed_ik(mu, p), phase_speed_ww(mu), approx(mu))
