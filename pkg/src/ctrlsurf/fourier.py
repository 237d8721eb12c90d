"""Truncated 2-D cosine series for a control surface u(t, x0).

The surface is parameterized by an (M+1) x (N+1) coefficient matrix ``a``:

    u(t, x0) = sum_{m=0..M} sum_{n=0..N} a[m,n] cos(m*pi*t/T) cos(n*pi*x0/L)

Everything downstream (flows, objectives, gradients) is built from this
series, its running time-integral U(t, x0) = int_0^t u(tau, x0) dtau, and
the per-coefficient basis derivatives, all of which are available in closed
form.  Time arguments are restricted to [0, T]; the series has no meaning
outside the horizon and out-of-range queries raise instead of extrapolating.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class CoefficientGrid:
    """Immutable Fourier coefficient matrix plus the (T, L) domain geometry.

    ``coeffs[m, n]`` multiplies cos(m*pi*t/T) * cos(n*pi*x0/L).  Updates
    produce a new grid via :meth:`with_coeffs`; the stored array is
    read-only so a grid can be shared freely across threads.
    """

    coeffs: np.ndarray
    horizon_T: float
    domain_L: float

    def __post_init__(self):
        a = np.array(self.coeffs, dtype=float)  # defensive copy
        if a.ndim != 2:
            raise ValueError(f"coeffs must be a 2-D matrix, got ndim={a.ndim}")
        if not np.all(np.isfinite(a)):
            raise ValueError("coefficients must all be finite")
        if not (self.horizon_T > 0.0):
            raise ValueError(f"horizon_T must be positive, got {self.horizon_T}")
        if not (self.domain_L > 0.0):
            raise ValueError(f"domain_L must be positive, got {self.domain_L}")
        a.flags.writeable = False
        object.__setattr__(self, "coeffs", a)

    @property
    def M(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def N(self) -> int:
        return self.coeffs.shape[1] - 1

    @classmethod
    def zeros(cls, M: int, N: int, horizon_T: float, domain_L: float) -> "CoefficientGrid":
        """Grid of the given order with all coefficients zero (u == 0)."""
        if M < 0 or N < 0:
            raise ValueError("orders M, N must be non-negative")
        return cls(np.zeros((M + 1, N + 1)), horizon_T, domain_L)

    def with_coeffs(self, coeffs: np.ndarray) -> "CoefficientGrid":
        """New grid with the same (T, L) and a replaced coefficient matrix."""
        a = np.asarray(coeffs, dtype=float)
        if a.shape != self.coeffs.shape:
            raise ValueError(f"shape mismatch: {a.shape} vs {self.coeffs.shape}")
        return CoefficientGrid(a, self.horizon_T, self.domain_L)

    # -- checkpoint format shared by the optimizer and the CLI --------------

    def to_json_dict(self) -> dict:
        return {
            "M": self.M,
            "N": self.N,
            "T": self.horizon_T,
            "L": self.domain_L,
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CoefficientGrid":
        grid = cls(np.asarray(d["coeffs"], dtype=float), float(d["T"]), float(d["L"]))
        if grid.M != int(d["M"]) or grid.N != int(d["N"]):
            raise ValueError("declared (M, N) disagree with the coefficient matrix shape")
        return grid

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CoefficientGrid":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# basis tables
#
# Evaluation on a lattice factorizes: a time table (depends on m and t only)
# and a state profile (depends on n and x0 only).  The cost/gradient loop
# builds these once per fit and never calls a transcendental afterwards.
# ---------------------------------------------------------------------------

def time_cos_table(M: int, horizon_T: float, t) -> np.ndarray:
    """cos(m*pi*t/T) for m = 0..M, shape (M+1,) + shape(t)."""
    t = np.asarray(t, dtype=float)
    m = np.arange(M + 1).reshape((M + 1,) + (1,) * t.ndim)
    return np.cos(m * np.pi * t / horizon_T)


def time_sin_integral_table(M: int, horizon_T: float, t) -> np.ndarray:
    """Row m of the time-integral basis: int_0^t cos(m*pi*tau/T) dtau.

    Equals sin(m*pi*t/T) * T/(m*pi) for m >= 1 and t for m = 0.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty((M + 1,) + t.shape, dtype=float)
    out[0] = t
    if M >= 1:
        m = np.arange(1, M + 1).reshape((M,) + (1,) * t.ndim)
        out[1:] = np.sin(m * np.pi * t / horizon_T) * (horizon_T / (m * np.pi))
    return out


def state_cos_profile(N: int, domain_L: float, x0) -> np.ndarray:
    """cos(n*pi*x0/L) for n = 0..N."""
    x0 = np.asarray(x0, dtype=float)
    n = np.arange(N + 1).reshape((N + 1,) + (1,) * x0.ndim)
    return np.cos(n * np.pi * x0 / domain_L)


def _check_horizon(t, horizon_T: float):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > horizon_T):
        raise ValueError(f"t outside control horizon [0, {horizon_T}]")
    return t


def _check_indices(grid: CoefficientGrid, m: int, n: int):
    if not (0 <= m <= grid.M):
        raise IndexError(f"m={m} outside 0..{grid.M}")
    if not (0 <= n <= grid.N):
        raise IndexError(f"n={n} outside 0..{grid.N}")


def _scalar_or_array(values: np.ndarray, t):
    return float(values) if np.isscalar(t) or np.ndim(t) == 0 else values


# ---------------------------------------------------------------------------
# series evaluation
# ---------------------------------------------------------------------------

def eval_u(grid: CoefficientGrid, t, x0: float):
    """Control surface value u(t, x0).  ``t`` may be a scalar or 1-D array."""
    tt = _check_horizon(t, grid.horizon_T)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    am = grid.coeffs @ state_cos_profile(grid.N, grid.domain_L, x0)
    values = am @ time_cos_table(grid.M, grid.horizon_T, tt)
    return _scalar_or_array(values, t)


def eval_U(grid: CoefficientGrid, t, x0: float):
    """Running integral U(t, x0) = int_0^t u(tau, x0) dtau; U(0, x0) = 0."""
    tt = _check_horizon(t, grid.horizon_T)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    am = grid.coeffs @ state_cos_profile(grid.N, grid.domain_L, x0)
    values = am @ time_sin_integral_table(grid.M, grid.horizon_T, tt)
    return _scalar_or_array(values, t)


def du_da(grid: CoefficientGrid, m: int, n: int, t, x0: float):
    """Basis derivative du/da[m,n] = cos(m*pi*t/T) cos(n*pi*x0/L).

    A pure basis value: independent of the stored coefficients.
    """
    _check_indices(grid, m, n)
    tt = _check_horizon(t, grid.horizon_T)
    values = np.cos(m * np.pi * tt / grid.horizon_T) * np.cos(
        n * np.pi * x0 / grid.domain_L
    )
    return _scalar_or_array(values, t)


def dU_da(grid: CoefficientGrid, m: int, n: int, t, x0: float):
    """Basis derivative dU/da[m,n].

    sin(m*pi*t/T) cos(n*pi*x0/L) T/(m*pi) for m >= 1; cos(n*pi*x0/L) * t for
    m = 0 (the constant-in-time basis integrates to t).
    """
    _check_indices(grid, m, n)
    tt = _check_horizon(t, grid.horizon_T)
    cn = np.cos(n * np.pi * x0 / grid.domain_L)
    if m == 0:
        values = cn * tt
    else:
        values = np.sin(m * np.pi * tt / grid.horizon_T) * cn * (
            grid.horizon_T / (m * np.pi)
        )
    return _scalar_or_array(values, t)


def sample_surface(grid: CoefficientGrid, t_values, x0_values) -> np.ndarray:
    """Evaluate u on the full (t, x0) lattice; returns shape (len(t), len(x0))."""
    tt = _check_horizon(np.asarray(t_values, dtype=float), grid.horizon_T)
    xx = np.asarray(x0_values, dtype=float)
    C = time_cos_table(grid.M, grid.horizon_T, tt)        # (M+1, nt)
    CX = state_cos_profile(grid.N, grid.domain_L, xx)     # (N+1, nx)
    return C.T @ grid.coeffs @ CX
