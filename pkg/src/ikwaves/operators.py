"""Variable-coefficient spatial operators and the elliptic constraint solver.

The building block is the depth-weighted second-order operator

    L[i,j] psi = -div( H^(pi+pj+1)/(pi+pj+1) grad psi
                       - pj/(pi+pj) H^(pi+pj) psi grad b )
                 - pi/(pi+pj) H^(pi+pj) grad b . grad psi
                 + pi pj/(pi+pj-1) H^(pi+pj-1) (1 + |grad b|^2) psi

with every exponent ratio under the 0/0 -> 0 convention.  On the grid
these blocks satisfy the exact adjoint pairing (L[i,j] f, g) =
(f, L[j,i] g); no dealiasing happens inside them (projection is applied
by the time stepper), which keeps the pairing and all reduction
identities exact to rounding.

On top of the blocks sit the constraint operators

    script_l[0] phi = sum_j H^(pj) phi_j,
    script_l[i] phi = sum_j (L[i,j] - H^(pi) L[0,j]) phi_j,   i >= 1,

their Schur-type reduction P acting on (phi_1..phi_N), and the solver
for script_l phi = F by preconditioned conjugate gradients on P.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dispersion import frac
from .errors import DepthCollapse, EllipticNoConverge, NonFiniteField
from .grid import PeriodicDomain
from .model import ModelConfig, State


class DepthField:
    """Water-column height H with a cache of its integer powers.

    Construction fails with DepthCollapse unless min H > 0.  The cache
    is filled lazily; entries are plain views for k in {0, 1}.
    """

    def __init__(self, H: np.ndarray, domain: PeriodicDomain):
        if not np.all(np.isfinite(H)):
            raise NonFiniteField("depth field contains NaN or Inf")
        self.min_H = float(np.min(H))
        if self.min_H <= 0.0:
            raise DepthCollapse(f"min depth {self.min_H:.6g} <= 0")
        self.H = H
        self._domain = domain
        self._pow = {0: np.ones_like(H), 1: H}
        self._grad = None

    @classmethod
    def from_state(cls, state: State, config: ModelConfig) -> "DepthField":
        return cls(state.depth(config), config.domain)

    @classmethod
    def from_eta(cls, eta: np.ndarray, config: ModelConfig) -> "DepthField":
        return cls(config.h + eta - config.bottom_fields.b, config.domain)

    def pow(self, k: int) -> np.ndarray:
        """H**k for integer k >= 0, cached."""
        if k < 0:
            raise ValueError("negative depth powers are never needed; guard the coefficient")
        got = self._pow.get(k)
        if got is None:
            got = self._pow[k - 1] * self.H if k - 1 in self._pow else self.H ** k
            self._pow[k] = got
        return got

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = self._domain.gradient(self.H)
        return self._grad


def apply_L(i: int, j: int, psi: np.ndarray, depth: DepthField, config: ModelConfig) -> np.ndarray:
    """Apply the operator block L[i,j] to a scalar field."""
    p = config.p
    dom = config.domain
    bf = config.bottom_fields
    pi, pj = p[i], p[j]

    grad_psi = dom.gradient(psi)
    flux = (depth.pow(pi + pj + 1) / (pi + pj + 1)) * grad_psi
    if pj and not bf.is_flat:
        flux = flux - frac(pj, pi + pj) * depth.pow(pi + pj) * psi * bf.grad_b
    out = -dom.divergence(flux)
    if pi and not bf.is_flat:
        advect = np.einsum("a...,a...->...", bf.grad_b, grad_psi)
        out -= frac(pi, pi + pj) * depth.pow(pi + pj) * advect
    if pi and pj:
        out += (frac(pi * pj, pi + pj - 1) * depth.pow(pi + pj - 1)
                * (1.0 + bf.grad_b_sq) * psi)
    return out


def apply_L_table(phi: np.ndarray, depth: DepthField, config: ModelConfig) -> np.ndarray:
    """All blocks applied columnwise: table[i, j] = L[i,j] phi_j."""
    n = config.n_levels + 1
    table = np.empty((n, n) + config.domain.shape)
    for j in range(n):
        for i in range(n):
            table[i, j] = apply_L(i, j, phi[j], depth, config)
    return table


def velocity_traces(state: State, config: ModelConfig,
                    depth: DepthField | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Surface velocity of the reconstructed potential.

    Returns the horizontal component u (leading axis = direction) and
    the vertical component w:

        u = sum_i (H^(pi) grad phi_i - pi H^(pi-1) phi_i grad b),
        w = sum_i pi H^(pi-1) phi_i.
    """
    if depth is None:
        depth = DepthField.from_state(state, config)
    dom = config.domain
    bf = config.bottom_fields
    u = np.zeros((dom.dim,) + dom.shape)
    w = np.zeros(dom.shape)
    for i, pi in enumerate(config.p):
        u += depth.pow(pi) * dom.gradient(state.phi[i])
        if pi:
            layer = pi * depth.pow(pi - 1) * state.phi[i]
            w += layer
            if not bf.is_flat:
                u -= layer * bf.grad_b
    return u, w


@dataclass(frozen=True)
class QWeights:
    """First row/column of the pointwise inverse of the bordered depth matrix.

    The bordered matrix couples l(H) = (H^(p0), ..., H^(pN)) with
    A(H)[i,j] = H^(pi+pj+1)/(pi+pj+1); its inverse carries the scalar
    q(H) and the weight vector q_vec used to extract the surface
    evolution equation.  They satisfy l . q_vec = -1 and
    A q_vec + q l = 0 pointwise.
    """

    q_scalar: np.ndarray
    q_vec: np.ndarray  # (N+1,) + grid shape
    Q_block: np.ndarray | None = None


def _bordered_depth_matrix(depth: DepthField, config: ModelConfig) -> np.ndarray:
    """Stacked bordered matrices, shape (npoints, N+2, N+2)."""
    p = config.p
    n = len(p)
    m = depth.H.size
    big = np.zeros((m, n + 1, n + 1))
    lvec = np.stack([depth.pow(pi).reshape(-1) for pi in p], axis=1)  # (m, n)
    big[:, 0, 1:] = lvec
    big[:, 1:, 0] = -lvec
    for i in range(n):
        for j in range(i, n):
            a = depth.pow(p[i] + p[j] + 1).reshape(-1) / (p[i] + p[j] + 1)
            big[:, 1 + i, 1 + j] = a
            big[:, 1 + j, 1 + i] = a
    return big


def q_weights(depth: DepthField, config: ModelConfig, with_Q: bool = False) -> QWeights:
    """Pointwise LU solve for the inverse-first-row weights q(H), q_vec(H)."""
    big = _bordered_depth_matrix(depth, config)
    shape = config.domain.shape
    n = config.n_levels + 1
    if with_Q:
        inv = np.linalg.inv(big)
        q_scalar = inv[:, 0, 0].reshape(shape)
        q_vec = np.moveaxis(inv[:, 0, 1:], -1, 0).reshape((n,) + shape)
        Q_block = np.moveaxis(inv[:, 1:, 1:], (-2, -1), (0, 1)).reshape((n, n) + shape)
        return QWeights(q_scalar, q_vec, Q_block)
    rhs = np.zeros((big.shape[0], n + 1, 1))
    rhs[:, 0, 0] = 1.0
    # first row of inv(B) solves B^T y = e0
    y = np.linalg.solve(np.swapaxes(big, 1, 2), rhs)[..., 0]
    q_scalar = y[:, 0].reshape(shape)
    q_vec = np.moveaxis(y[:, 1:], -1, 0).reshape((n,) + shape)
    return QWeights(q_scalar, q_vec)


def apply_scriptL(phi: np.ndarray, depth: DepthField, config: ModelConfig) -> np.ndarray:
    """Constraint operator stack: row 0 is the weighted trace, rows i >= 1
    the compatibility combinations."""
    p = config.p
    n = len(p)
    out = np.empty((n,) + config.domain.shape)
    out[0] = sum(depth.pow(pj) * phi[j] for j, pj in enumerate(p))
    rows = [sum(apply_L(i, j, phi[j], depth, config) for j in range(n))
            for i in range(n)]
    for i in range(1, n):
        out[i] = rows[i] - depth.pow(p[i]) * rows[0]
    return out


def apply_P(phi_prime: np.ndarray, depth: DepthField, config: ModelConfig) -> np.ndarray:
    """Reduced symmetric-positive operator on (phi_1, ..., phi_N).

    Realized by eliminating phi_0 = -sum_j H^(pj) phi_j and applying the
    constraint rows, which keeps the quadratic-form identity with the
    full block sum exact on the grid.
    """
    p = config.p
    n = len(p)
    full = np.empty((n,) + config.domain.shape)
    full[0] = -sum(depth.pow(p[j]) * phi_prime[j - 1] for j in range(1, n))
    full[1:] = phi_prime
    return apply_scriptL(full, depth, config)[1:]


class SpectralPreconditioner:
    """Exact per-mode inverse of the reduced operator frozen at H = h, b = 0.

    With constant coefficients every Fourier mode decouples into an
    N x N symmetric positive matrix, inverted once at construction.
    Spectrally equivalent to the variable-coefficient operator for mild
    topography and exact at the flat rest state.
    """

    def __init__(self, config: ModelConfig):
        p = config.p
        h = config.h
        n = len(p)
        A = np.empty((n, n))
        C = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                A[i, j] = h ** (p[i] + p[j] + 1) / (p[i] + p[j] + 1)
                C[i, j] = frac(p[i] * p[j], p[i] + p[j] - 1) * h ** max(p[i] + p[j] - 1, 0)
        hp = np.array([h ** pi for pi in p])
        S2 = A[1:] - hp[1:, None] * A[0]      # (N, n)
        S0 = C[1:] - hp[1:, None] * C[0]
        K2 = S2[:, 1:] - np.outer(S2[:, 0], hp[1:])
        K0 = S0[:, 1:] - np.outer(S0[:, 0], hp[1:])
        k2 = config.domain.k_squared.reshape(-1)
        mats = K2[None, :, :] * k2[:, None, None] + K0[None, :, :]
        self._inv = np.linalg.inv(mats)
        self._domain = config.domain
        self._n = n - 1

    def __call__(self, r: np.ndarray) -> np.ndarray:
        dom = self._domain
        spec = np.stack([np.fft.fftn(r[c]).reshape(-1) for c in range(self._n)])
        out = np.einsum("mij,jm->im", self._inv, spec)
        z = np.empty_like(r)
        for c in range(self._n):
            z[c] = np.fft.ifftn(out[c].reshape(dom.shape)).real
        return z


@dataclass
class SolveReport:
    """Statistics from one elliptic solve."""

    iterations: int
    converged: bool
    relative_residual: float
    residual_history: list[float] = field(default_factory=list)
    constraint_residuals: tuple[float, ...] | None = None


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.tensordot(a, b, axes=a.ndim))


def solve_scriptL(F: np.ndarray, depth: DepthField, config: ModelConfig,
                  tol: float = 1e-11, max_iter: int = 500,
                  precond: SpectralPreconditioner | None = None,
                  verify: bool = False) -> tuple[np.ndarray, SolveReport]:
    """Solve the constraint system script_l phi = F.

    Eliminates phi_0 through row 0, runs preconditioned CG on the
    reduced operator to relative residual <= tol, and back-substitutes.
    Because the reduction is applied with the same discrete blocks, the
    CG residual equals the constraint residual of rows 1..N exactly;
    row 0 holds to rounding by construction.  ``verify=True`` re-applies
    the constraint operator and stores per-row relative residuals.

    Raises EllipticNoConverge (with the residual history) past max_iter.
    """
    p = config.p
    n = len(p)
    N = n - 1
    F0 = F[0]
    L00_F0 = apply_L(0, 0, F0, depth, config)
    rhs = np.empty((N,) + config.domain.shape)
    for i in range(1, n):
        rhs[i - 1] = F[i] - (apply_L(i, 0, F0, depth, config) - depth.pow(p[i]) * L00_F0)

    bnorm = np.sqrt(_dot(rhs, rhs))
    phi_prime = np.zeros_like(rhs)
    history = []
    iterations = 0
    if bnorm > 0.0:
        if precond is None:
            precond = SpectralPreconditioner(config)
        r = rhs.copy()
        z = precond(r)
        d = z.copy()
        rz = _dot(r, z)
        rel = 1.0
        history.append(rel)
        for iterations in range(1, max_iter + 1):
            Ad = apply_P(d, depth, config)
            alpha = rz / _dot(d, Ad)
            phi_prime += alpha * d
            r -= alpha * Ad
            rel = np.sqrt(_dot(r, r)) / bnorm
            history.append(rel)
            if rel <= tol:
                break
            z = precond(r)
            rz_new = _dot(r, z)
            d = z + (rz_new / rz) * d
            rz = rz_new
        else:
            raise EllipticNoConverge(
                f"CG stalled at relative residual {rel:.3e} after {max_iter} iterations",
                residual_history=history)

    phi = np.empty((n,) + config.domain.shape)
    phi[1:] = phi_prime
    phi[0] = F0 - sum(depth.pow(p[j]) * phi_prime[j - 1] for j in range(1, n))

    report = SolveReport(iterations=iterations,
                         converged=True,
                         relative_residual=history[-1] if history else 0.0,
                         residual_history=history)
    if verify:
        applied = apply_scriptL(phi, depth, config)
        denom = max(np.sqrt(_dot(F, F)), 1e-300)
        report.constraint_residuals = tuple(
            float(np.sqrt(_dot(applied[i] - F[i], applied[i] - F[i])) / denom)
            for i in range(n))
    return phi, report
