"""Physical configuration and state containers.

The unknowns are the surface elevation ``eta`` and the stack of
potential coefficients ``phi[0..N]``; the still-water depth is ``h``,
the bottom sits at ``z = -h + b(x)`` and the water column height is
``H = h + eta - b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadExponents, DepthCollapse, NonFiniteField
from .grid import PeriodicDomain

MAX_LEVELS = 8  # largest supported N; the matching systems degrade beyond desk scale


@dataclass(frozen=True)
class BottomFields:
    """Bottom topography evaluated on a grid: b, its gradient and Laplacian."""

    b: np.ndarray
    grad_b: np.ndarray  # (dim,) + grid shape
    lap_b: np.ndarray
    is_flat: bool

    @property
    def grad_b_sq(self) -> np.ndarray:
        """|grad b|^2, cached after first use."""
        cached = getattr(self, "_gb2", None)
        if cached is None:
            cached = np.sum(np.square(self.grad_b), axis=0)
            object.__setattr__(self, "_gb2", cached)
        return cached

    def check_finite(self):
        for arr in (self.b, self.grad_b, self.lap_b):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteField("bottom profile evaluates to non-finite values")


@dataclass(frozen=True)
class BottomProfile:
    """Analytic or sampled bottom topography b(x).

    ``kind`` is one of ``flat``, ``sinusoidal``, ``gaussian_bump``,
    ``sampled``.  Use the classmethod constructors; ``render`` evaluates
    b and its first two derivatives on a grid (analytically for the
    analytic kinds, spectrally for ``sampled``).
    """

    kind: str = "flat"
    amplitude: float = 0.0
    modes: tuple[int, ...] = (1,)
    phase: float = 0.0
    center: tuple[float, ...] | None = None
    width: float = 1.0
    samples: np.ndarray | None = None

    @classmethod
    def flat(cls) -> "BottomProfile":
        return cls(kind="flat")

    @classmethod
    def sinusoidal(cls, amplitude, modes=(1,), phase=0.0) -> "BottomProfile":
        return cls(kind="sinusoidal", amplitude=float(amplitude),
                   modes=tuple(int(m) for m in np.atleast_1d(modes)), phase=float(phase))

    @classmethod
    def gaussian_bump(cls, amplitude, center, width) -> "BottomProfile":
        return cls(kind="gaussian_bump", amplitude=float(amplitude),
                   center=tuple(float(c) for c in np.atleast_1d(center)), width=float(width))

    @classmethod
    def sampled(cls, samples) -> "BottomProfile":
        return cls(kind="sampled", samples=np.asarray(samples, dtype=float))

    @classmethod
    def from_dict(cls, spec: dict) -> "BottomProfile":
        kind = spec.get("kind", "flat")
        if kind == "flat":
            return cls.flat()
        if kind == "sinusoidal":
            return cls.sinusoidal(spec.get("amplitude", 0.0), spec.get("modes", (1,)),
                                  spec.get("phase", 0.0))
        if kind == "gaussian_bump":
            return cls.gaussian_bump(spec.get("amplitude", 0.0), spec.get("center", (0.0,)),
                                     spec.get("width", 1.0))
        if kind == "sampled":
            return cls.sampled(spec["samples"])
        raise ValueError(f"unknown bottom kind {kind!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "sinusoidal":
            out.update(amplitude=self.amplitude, modes=list(self.modes), phase=self.phase)
        elif self.kind == "gaussian_bump":
            out.update(amplitude=self.amplitude, center=list(self.center), width=self.width)
        elif self.kind == "sampled":
            out.update(samples=np.asarray(self.samples).tolist())
        return out

    def render(self, domain: PeriodicDomain) -> BottomFields:
        zeros = np.zeros(domain.shape)
        if self.kind == "flat":
            return BottomFields(zeros, np.zeros((domain.dim,) + domain.shape), zeros.copy(), True)

        if self.kind == "sinusoidal":
            coords = domain.coords()
            modes = self.modes if len(self.modes) == domain.dim else self.modes * domain.dim
            arg = self.phase
            kvec = []
            for ax in range(domain.dim):
                k = 2.0 * np.pi * modes[ax] / domain.lengths[ax]
                kvec.append(k)
                arg = arg + k * coords[ax]
            b = self.amplitude * np.cos(arg)
            grad = np.empty((domain.dim,) + domain.shape)
            for ax in range(domain.dim):
                grad[ax] = -self.amplitude * kvec[ax] * np.sin(arg)
            lap = -self.amplitude * sum(k * k for k in kvec) * np.cos(arg)
            return BottomFields(b, grad, lap, self.amplitude == 0.0)

        if self.kind == "gaussian_bump":
            # Minimum-image displacement; the wrap discontinuity is below
            # roundoff provided width <~ lengths/10.
            coords = domain.coords()
            center = self.center if self.center is not None else tuple(
                L / 2 for L in domain.lengths)
            disp = []
            for ax in range(domain.dim):
                d = coords[ax] - center[ax]
                L = domain.lengths[ax]
                disp.append(d - L * np.round(d / L))
            r2 = sum(d * d for d in disp)
            s2 = self.width ** 2
            b = self.amplitude * np.exp(-0.5 * r2 / s2)
            grad = np.empty((domain.dim,) + domain.shape)
            for ax in range(domain.dim):
                grad[ax] = b * (-disp[ax] / s2)
            lap = b * (r2 / s2 - domain.dim) / s2
            return BottomFields(b, grad, lap, self.amplitude == 0.0)

        if self.kind == "sampled":
            b = np.asarray(self.samples, dtype=float).reshape(domain.shape)
            grad = domain.gradient(b)
            lap = domain.laplacian(b)
            return BottomFields(b, grad, lap, bool(np.all(b == 0.0)))

        raise ValueError(f"unknown bottom kind {self.kind!r}")


def validate_exponents(p) -> tuple[int, ...]:
    """Check the vertical exponent list: integers, p[0]=0, strictly increasing, N>=1."""
    try:
        p = tuple(int(v) for v in p)
    except (TypeError, ValueError) as exc:
        raise BadExponents(f"exponents must be integers, got {p!r}") from exc
    if len(p) < 2:
        raise BadExponents("need at least two exponents (N >= 1)")
    if len(p) > MAX_LEVELS + 1:
        raise BadExponents(f"at most N={MAX_LEVELS} levels supported, got N={len(p) - 1}")
    if p[0] != 0:
        raise BadExponents("first exponent must be 0")
    if any(a >= b for a, b in zip(p, p[1:])):
        raise BadExponents("exponents must be strictly increasing")
    if any(v < 0 for v in p):
        raise BadExponents("exponents must be nonnegative")
    return p


@dataclass(frozen=True)
class ModelConfig:
    """Immutable physical setup: constants, exponents, bottom and grid.

    The convention 0/0 = 0 applies to every exponent-ratio coefficient
    in the model; ``zero_over_zero`` records it and only the value
    ``"zero"`` is accepted.
    """

    domain: PeriodicDomain
    p: tuple[int, ...] = (0, 2)
    g: float = 9.81
    h: float = 1.0
    rho: float = 1000.0
    bottom: BottomProfile = field(default_factory=BottomProfile.flat)
    zero_over_zero: str = "zero"

    def __post_init__(self):
        object.__setattr__(self, "p", validate_exponents(self.p))
        if self.g <= 0 or self.h <= 0 or self.rho <= 0:
            raise ValueError("g, h, rho must be positive")
        if self.zero_over_zero != "zero":
            raise ValueError("only the 0/0 -> 0 convention is supported")
        rendered = self.bottom.render(self.domain)
        rendered.check_finite()
        if float(np.min(self.h - rendered.b)) <= 0.0:
            raise DepthCollapse("still water depth h - b(x) is not positive everywhere")
        object.__setattr__(self, "_bottom_fields", rendered)

    @property
    def n_levels(self) -> int:
        """N, the index of the highest potential coefficient."""
        return len(self.p) - 1

    @property
    def bottom_fields(self) -> BottomFields:
        return self._bottom_fields


@dataclass
class State:
    """Surface elevation and potential coefficients at one instant."""

    eta: np.ndarray
    phi: np.ndarray  # shape (N+1,) + grid shape
    t: float = 0.0

    @classmethod
    def zeros(cls, config: ModelConfig, t: float = 0.0) -> "State":
        shape = config.domain.shape
        return cls(np.zeros(shape), np.zeros((config.n_levels + 1,) + shape), t)

    def copy(self) -> "State":
        return State(self.eta.copy(), self.phi.copy(), self.t)

    def depth(self, config: ModelConfig) -> np.ndarray:
        """Water column height H = h + eta - b (not sign-checked here)."""
        return config.h + self.eta - config.bottom_fields.b

    def check(self, config: ModelConfig):
        """Validate shapes, finiteness, and strict positivity of the depth."""
        shape = config.domain.shape
        if self.eta.shape != shape or self.phi.shape != (config.n_levels + 1,) + shape:
            raise ValueError("state arrays do not match the configured grid")
        if not (np.all(np.isfinite(self.eta)) and np.all(np.isfinite(self.phi))):
            raise NonFiniteField("state contains NaN or Inf")
        m = float(np.min(self.depth(config)))
        if m <= 0.0:
            raise DepthCollapse(f"min depth {m:.6g} <= 0 at t={self.t:.6g}")
