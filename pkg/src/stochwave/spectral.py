"""Dirichlet-Laplacian eigenbasis arithmetic on the unit interval.

Everything lives on O = (0, 1) with homogeneous Dirichlet boundary
conditions, where the eigenpairs are closed-form:

    lambda_k = (k pi)^2,   e_k(x) = sqrt(2) sin(k pi x),   k = 1, 2, ...

A field is stored as its first N expansion coefficients; Sobolev norms
across the whole scale are weighted l2 norms of the coefficients, and
pointwise (Nemytskii) evaluation goes through a uniform interior grid via
sine synthesis/analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import AliasingError, ShapeError

__all__ = [
    "SpectralField",
    "PhaseState",
    "GridField",
    "eigenvalue",
    "eigenvalues",
    "sobolev_norm",
    "sobolev_inner",
    "phase_norm",
    "phase_inner",
    "project",
    "to_grid",
    "from_grid",
    "smooth_field",
]

# Above this grid size the DST path beats the cached-matrix path.
_FAST_TRANSFORM_CUTOFF = 512


def eigenvalue(k: int) -> float:
    """Return lambda_k = (k pi)^2 for the Dirichlet Laplacian on (0, 1)."""
    if k < 1:
        raise ValueError(f"mode index must be >= 1, got {k}")
    return (k * np.pi) ** 2


def eigenvalues(n_modes: int) -> np.ndarray:
    """Return the array (lambda_1, ..., lambda_N)."""
    if n_modes < 1:
        raise ValueError(f"n_modes must be >= 1, got {n_modes}")
    k = np.arange(1, n_modes + 1, dtype=float)
    return (k * np.pi) ** 2


def _as_coeffs(values) -> np.ndarray:
    c = np.asarray(values, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ShapeError("coefficients must form a non-empty 1-d sequence")
    if not np.all(np.isfinite(c)):
        raise ValueError("coefficients must be finite (no NaN/Inf)")
    return c


@dataclass(frozen=True)
class SpectralField:
    """Coefficients of a field in the sine eigenbasis, modes 1..N.

    ``coeffs[k-1]`` is the coefficient of e_k.  Arithmetic between fields
    with different mode counts zero-pads to the larger one, so projections
    of a common field can be subtracted directly.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs))

    @property
    def n_modes(self) -> int:
        return len(self.coeffs)

    @classmethod
    def zero(cls, n_modes: int) -> "SpectralField":
        return cls(np.zeros(n_modes))

    @classmethod
    def basis(cls, k: int, n_modes: int) -> "SpectralField":
        """The eigenfunction e_k represented in an N-mode field."""
        if not 1 <= k <= n_modes:
            raise ValueError(f"basis index {k} outside 1..{n_modes}")
        c = np.zeros(n_modes)
        c[k - 1] = 1.0
        return cls(c)

    def padded(self, n_modes: int) -> np.ndarray:
        """Coefficient array zero-padded (never truncated) to ``n_modes``."""
        if n_modes < self.n_modes:
            raise ShapeError(
                f"cannot pad {self.n_modes} modes down to {n_modes}"
            )
        if n_modes == self.n_modes:
            return self.coeffs
        out = np.zeros(n_modes)
        out[: self.n_modes] = self.coeffs
        return out

    def __add__(self, other: "SpectralField") -> "SpectralField":
        n = max(self.n_modes, other.n_modes)
        return SpectralField(self.padded(n) + other.padded(n))

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        n = max(self.n_modes, other.n_modes)
        return SpectralField(self.padded(n) - other.padded(n))

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs)


@dataclass(frozen=True)
class PhaseState:
    """Position/velocity pair (u, v); an element of the product space H^1_N."""

    u: SpectralField
    v: SpectralField

    def __post_init__(self):
        if self.u.n_modes != self.v.n_modes:
            raise ShapeError(
                f"u has {self.u.n_modes} modes but v has {self.v.n_modes}"
            )

    @property
    def n_modes(self) -> int:
        return self.u.n_modes

    @classmethod
    def zero(cls, n_modes: int) -> "PhaseState":
        return cls(SpectralField.zero(n_modes), SpectralField.zero(n_modes))

    def __add__(self, other: "PhaseState") -> "PhaseState":
        return PhaseState(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "PhaseState") -> "PhaseState":
        return PhaseState(self.u - other.u, self.v - other.v)

    def __mul__(self, scalar: float) -> "PhaseState":
        return PhaseState(self.u * scalar, self.v * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class GridField:
    """Pointwise values at the interior grid x_j = j/(M+1), j = 1..M."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_coeffs(self.values))

    @property
    def m_points(self) -> int:
        return len(self.values)

    @property
    def x(self) -> np.ndarray:
        m = self.m_points
        return np.arange(1, m + 1) / (m + 1)


def sobolev_norm(field: SpectralField, r: float) -> float:
    """Homogeneous Sobolev norm of order r.

    ||psi||_{H^r} = (sum_k lambda_k^r c_k^2)^{1/2}.  r = 0 reduces to the
    plain l2 norm of the coefficients (Parseval).
    """
    lam = eigenvalues(field.n_modes)
    return float(np.sqrt(np.sum(lam**r * field.coeffs**2)))


def sobolev_inner(a: SpectralField, b: SpectralField, r: float = 0.0) -> float:
    """Inner product <a, b>_{H^r} = sum_k lambda_k^r a_k b_k."""
    n = max(a.n_modes, b.n_modes)
    lam = eigenvalues(n)
    return float(np.sum(lam**r * a.padded(n) * b.padded(n)))


def phase_norm(state: PhaseState, beta: float) -> float:
    """Product-space norm: (||u||_{H^beta}^2 + ||v||_{H^(beta-1)}^2)^{1/2}."""
    return float(
        np.hypot(sobolev_norm(state.u, beta), sobolev_norm(state.v, beta - 1.0))
    )


def phase_inner(a: PhaseState, b: PhaseState, beta: float) -> float:
    return sobolev_inner(a.u, b.u, beta) + sobolev_inner(a.v, b.v, beta - 1.0)


def project(field: SpectralField, n_modes: int) -> SpectralField:
    """Galerkin projection onto span{e_1, ..., e_N}.

    The result always carries exactly ``n_modes`` coefficients; modes beyond
    N are dropped and missing ones are zero.  Satisfies
    ||(P_N - I) psi|| <= lambda_N^(-gamma/2) ||psi||_{H^gamma} for gamma >= 0.
    """
    if n_modes < 1:
        raise ValueError(f"n_modes must be >= 1, got {n_modes}")
    if n_modes <= field.n_modes:
        return SpectralField(field.coeffs[:n_modes].copy())
    return SpectralField(field.padded(n_modes))


def project_state(state: PhaseState, n_modes: int) -> PhaseState:
    return PhaseState(project(state.u, n_modes), project(state.v, n_modes))


# Cached synthesis matrices S[j, k] = sqrt(2) sin((k+1) pi (j+1) / (M+1)),
# shape (M, N).  Analysis is S.T/(M+1): exact inverse on <= M modes thanks to
# the discrete orthogonality of sines on the uniform interior grid.
_sine_matrix_cache: dict[tuple[int, int], np.ndarray] = {}


def _sine_matrix(n_modes: int, m_points: int) -> np.ndarray:
    key = (n_modes, m_points)
    mat = _sine_matrix_cache.get(key)
    if mat is None:
        j = np.arange(1, m_points + 1)[:, None]
        k = np.arange(1, n_modes + 1)[None, :]
        mat = np.sqrt(2.0) * np.sin(np.pi * j * k / (m_points + 1))
        _sine_matrix_cache[key] = mat
    return mat


def synthesize(coeffs: np.ndarray, m_points: int, fast: bool | None = None) -> np.ndarray:
    """Raw array version of :func:`to_grid`: values at the interior grid."""
    n = len(coeffs)
    if m_points < n:
        raise AliasingError(
            f"synthesis grid too small: M = {m_points} < N = {n} modes"
        )
    if fast is None:
        fast = m_points >= _FAST_TRANSFORM_CUTOFF
    if fast:
        buf = np.zeros(m_points)
        buf[:n] = coeffs
        # DST-I: y_j = 2 sum_k x_k sin(pi (j+1)(k+1)/(M+1))
        return scipy.fft.dst(buf, type=1) / np.sqrt(2.0)
    return _sine_matrix(n, m_points) @ coeffs


def analyze(values: np.ndarray, n_modes: int, fast: bool | None = None) -> np.ndarray:
    """Raw array version of :func:`from_grid`: first N sine coefficients."""
    m = len(values)
    if m < n_modes:
        raise AliasingError(
            f"analysis grid too small: M = {m} < N = {n_modes} modes"
        )
    if fast is None:
        fast = m >= _FAST_TRANSFORM_CUTOFF
    if fast:
        return scipy.fft.dst(values, type=1)[:n_modes] / (np.sqrt(2.0) * (m + 1))
    return (_sine_matrix(n_modes, m).T @ values) / (m + 1)


def to_grid(field: SpectralField, m_points: int, fast: bool | None = None) -> GridField:
    """Evaluate sum_k c_k sqrt(2) sin(k pi x_j) at x_j = j/(M+1), j = 1..M."""
    return GridField(synthesize(field.coeffs, m_points, fast=fast))


def from_grid(grid: GridField, n_modes: int, fast: bool | None = None) -> SpectralField:
    """Recover coefficients from grid values by discrete sine orthogonality.

    Exact round-trip inverse of :func:`to_grid` whenever M >= N; raises
    :class:`AliasingError` otherwise.
    """
    return SpectralField(analyze(grid.values, n_modes, fast=fast))


def smooth_field(n_modes: int, amplitude: float = 1.0, decay: float = 3.0) -> SpectralField:
    """Deterministic smooth test field with coefficients amplitude * k^(-decay)."""
    k = np.arange(1, n_modes + 1, dtype=float)
    return SpectralField(amplitude * k**-decay)


def smooth_state(
    n_modes: int, u_amplitude: float = 1.0, v_amplitude: float = 1.0
) -> PhaseState:
    """Standard smooth initial state: u_k = a_u k^-3, v_k = a_v k^-2.

    Coefficient decay keeps the state in the H^2 product space uniformly in
    the mode count, which the moment and error bounds assume.
    """
    return PhaseState(
        smooth_field(n_modes, u_amplitude, decay=3.0),
        smooth_field(n_modes, v_amplitude, decay=2.0),
    )
