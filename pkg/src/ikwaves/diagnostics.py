"""Conserved energy, model residuals, and sign-condition monitoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dispersion import frac
from .errors import IkwavesError
from .model import ModelConfig, State
from .operators import DepthField, apply_L_table, q_weights

ENERGY_FLOOR = 1e-30  # denominator floor for relative drift of the zero state


@dataclass
class DiagnosticsRecord:
    """One row of run diagnostics."""

    t: float
    energy: float
    energy_drift_rel: float
    min_H: float
    min_a: float
    r_norms: tuple[float, ...]   # rows 0..N
    rt_norms: tuple[float, ...]  # rows 1..N


@dataclass
class DiagnosticsSeries:
    """Record sequence for a run, plus the compatibility flag of its data."""

    records: list[DiagnosticsRecord] = field(default_factory=list)
    compatible: bool = True
    final_state: State | None = None

    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    def max_abs_drift(self) -> float:
        return max((abs(r.energy_drift_rel) for r in self.records), default=0.0)

    def max_rt_norm(self) -> float:
        return max((max(r.rt_norms, default=0.0) for r in self.records), default=0.0)


def energy(state: State, config: ModelConfig) -> float:
    """Total conserved energy of a state.

    Evaluates the explicit quadratic integrand in the potentials plus
    the g eta^2 gravity term, integrates with the trapezoid rule and
    scales by rho/2.
    """
    depth = DepthField.from_state(state, config)
    dom = config.domain
    bf = config.bottom_fields
    p = config.p
    n = len(p)
    grads = [dom.gradient(state.phi[i]) for i in range(n)]

    integrand = config.g * state.eta ** 2
    one_gb2 = None if bf.is_flat else 1.0 + bf.grad_b_sq
    for i in range(n):
        for j in range(n):
            integrand = integrand + (depth.pow(p[i] + p[j] + 1) / (p[i] + p[j] + 1)
                                     * np.einsum("a...,a...->...", grads[i], grads[j]))
            if p[i] and not bf.is_flat:
                cross = np.einsum("a...,a...->...", bf.grad_b, grads[j])
                integrand = integrand - (2.0 * frac(p[i], p[i] + p[j])
                                         * depth.pow(p[i] + p[j])
                                         * state.phi[i] * cross)
            if p[i] and p[j]:
                w2 = 1.0 if bf.is_flat else one_gb2
                integrand = integrand + (frac(p[i] * p[j], p[i] + p[j] - 1)
                                         * depth.pow(p[i] + p[j] - 1) * w2
                                         * state.phi[i] * state.phi[j])
    return 0.5 * config.rho * dom.integrate(integrand)


def residuals(state: State, config: ModelConfig,
              depth: DepthField | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Model residual fields of a state.

    R_i = H^(pi) * deta_dt - sum_j L[i,j] phi_j with deta_dt supplied by
    the reduced surface equation, and Rt_i the compatibility rows.  The
    two exact algebraic relations linking them (Rt_i = H^(pi) R_0 - R_i
    and sum_i q_i R_i = 0) are asserted internally.
    """
    if depth is None:
        depth = DepthField.from_state(state, config)
    p = config.p
    n = len(p)
    table = apply_L_table(state.phi, depth, config)
    row_sums = table.sum(axis=1)
    qw = q_weights(depth, config)
    deta_dt = -np.einsum("i...,i...->...", qw.q_vec, row_sums)

    R = np.empty((n,) + config.domain.shape)
    Rt = np.empty((n - 1,) + config.domain.shape)
    for i in range(n):
        R[i] = depth.pow(p[i]) * deta_dt - row_sums[i]
    for i in range(1, n):
        Rt[i - 1] = row_sums[i] - depth.pow(p[i]) * row_sums[0]

    scale = max(float(np.max(np.abs(row_sums))), 1e-300)
    for i in range(1, n):
        gap = np.max(np.abs(Rt[i - 1] - (depth.pow(p[i]) * R[0] - R[i])))
        assert gap <= 1e-9 * scale, f"residual relation broke: {gap:.3e}"
    combo = np.max(np.abs(np.einsum("i...,i...->...", qw.q_vec, R)))
    assert combo <= 1e-9 * scale, f"weighted residual sum nonzero: {combo:.3e}"
    return R, Rt


def sign_condition_a(state: State, config: ModelConfig,
                     dphi_dt: np.ndarray | None = None,
                     tol: float = 1e-11, max_iter: int = 500,
                     precond=None) -> np.ndarray:
    """Pointwise generalized stability function a(x).

    Uses d/dt phi reconstructed from the state (one elliptic solve)
    unless supplied; at the rest state a is identically g.
    """
    if dphi_dt is None:
        from .evolution import initial_time_derivatives
        dphi_dt = initial_time_derivatives(state, config, tol=tol,
                                           max_iter=max_iter, precond=precond)
    depth = DepthField.from_state(state, config)
    dom = config.domain
    bf = config.bottom_fields
    p = config.p
    n = len(p)
    grads = [dom.gradient(state.phi[i]) for i in range(n)]

    a = np.full(dom.shape, config.g)
    for i in range(n):
        if p[i]:
            a = a + p[i] * depth.pow(p[i] - 1) * dphi_dt[i]
    for i in range(n):
        for j in range(n):
            s = p[i] + p[j]
            if s:
                a = a + 0.5 * s * depth.pow(s - 1) * np.einsum(
                    "a...,a...->...", grads[i], grads[j])
            if p[i] and s != 1 and not bf.is_flat:
                cross = np.einsum("a...,a...->...", bf.grad_b, grads[j])
                a = a - p[i] * (s - 1) * depth.pow(s - 2) * state.phi[i] * cross
            if p[i] and p[j] and s != 2:
                w2 = 1.0 + (0.0 if bf.is_flat else bf.grad_b_sq)
                a = a + 0.5 * p[i] * p[j] * (s - 2) * depth.pow(s - 3) * w2 \
                    * state.phi[i] * state.phi[j]
    return a


def make_record(state: State, config: ModelConfig, e0: float | None = None,
                tol: float = 1e-11, max_iter: int = 500, precond=None,
                with_sign_a: bool = True) -> DiagnosticsRecord:
    """Evaluate every diagnostic of one state."""
    depth = DepthField.from_state(state, config)
    E = energy(state, config)
    drift = 0.0 if e0 is None else (E - e0) / max(abs(e0), ENERGY_FLOOR)
    R, Rt = residuals(state, config, depth)
    dom = config.domain
    if with_sign_a:
        a = sign_condition_a(state, config, tol=tol, max_iter=max_iter, precond=precond)
        min_a = float(np.min(a))
    else:
        min_a = float("nan")
    return DiagnosticsRecord(
        t=state.t,
        energy=E,
        energy_drift_rel=drift,
        min_H=depth.min_H,
        min_a=min_a,
        r_norms=tuple(dom.norm(R[i]) for i in range(R.shape[0])),
        rt_norms=tuple(dom.norm(Rt[i]) for i in range(Rt.shape[0])),
    )


def cross_correlation_speed(eta_start: np.ndarray, eta_end: np.ndarray,
                            domain, elapsed: float) -> float:
    """Propagation speed from the circular cross-correlation peak (1D).

    Locates the lag maximizing the correlation of the two snapshots and
    refines it by parabolic interpolation; the lag is reduced to the
    symmetric interval before dividing by the elapsed time.
    """
    if domain.dim != 1:
        raise IkwavesError("cross-correlation speed measurement is 1D only")
    if elapsed <= 0:
        raise ValueError("elapsed time must be positive")
    n = domain.resolution[0]
    corr = np.fft.ifft(np.fft.fft(eta_end) * np.conj(np.fft.fft(eta_start))).real
    m = int(np.argmax(corr))
    y0, y1, y2 = corr[(m - 1) % n], corr[m], corr[(m + 1) % n]
    denom = y0 - 2.0 * y1 + y2
    shift = m + (0.5 * (y0 - y2) / denom if denom != 0.0 else 0.0)
    lag = shift * domain.dx[0]
    L = domain.lengths[0]
    lag = (lag + 0.5 * L) % L - 0.5 * L
    return lag / elapsed
