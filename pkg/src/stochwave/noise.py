"""Trace-class covariance operators and Q-Wiener increment sampling.

The covariance Q is diagonal in the sine eigenbasis: Q e_k = q_k e_k with
q_k > 0.  An increment of the driving Wiener process over a step of length
tau is then a vector of independent Gaussians, mode k having variance
q_k * tau.

Reproducibility contract
------------------------
Every experiment owns a single integer seed.  Trajectory (sample) r draws
from ``numpy.random.default_rng(SeedSequence(seed).spawn(...)[r])`` and an
increment path is one ``standard_normal((n_steps, n_modes))`` call: row n is
step n, column k is mode k, scaled by sqrt(q_k * tau).  Two trajectories
that must share their driving noise (synchronous coupling, step-refinement
ladders) therefore share one pre-sampled :class:`IncrementPath` instead of
an RNG.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeError
from .spectral import SpectralField, eigenvalues

__all__ = [
    "NoiseSpec",
    "IncrementPath",
    "build_power_law_q",
    "sample_increment",
    "sample_increment_path",
    "coarsen_path",
    "project_path",
    "experiment_rng",
    "trajectory_rngs",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Eigen-variances of Q plus the derived truncated traces.

    ``valid`` records whether the declared family satisfies the trace
    conditions sum q_k ||e_k||_inf^2 < inf and Tr(Lambda Q) < inf in the
    infinite-mode limit; an invalid spec can still be inspected but refuses
    to sample.
    """

    q: np.ndarray
    kind: str = "custom"
    c: float = float("nan")
    s: float = float("nan")
    valid: bool = True
    invalid_reason: str = ""

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1 or q.size == 0:
            raise ShapeError("q must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(q)) or np.any(q <= 0):
            raise ConfigurationError("variance weights q_k must be finite and > 0")
        object.__setattr__(self, "q", q)

    @property
    def n_modes(self) -> int:
        return len(self.q)

    @property
    def trace_q(self) -> float:
        return float(np.sum(self.q))

    @property
    def trace_lambda_q(self) -> float:
        return float(np.sum(eigenvalues(self.n_modes) * self.q))


def build_power_law_q(c: float, s: float, n_modes: int) -> NoiseSpec:
    """Power-law covariance q_k = c * k^(-s), truncated to N modes.

    The family is trace-class with Tr(Lambda Q) < inf in d = 1 iff s > 3
    (lambda_k q_k ~ k^(2-s)); smaller s yields a spec flagged invalid.
    """
    if c <= 0:
        raise ConfigurationError(f"power-law amplitude c must be > 0, got {c}")
    k = np.arange(1, n_modes + 1, dtype=float)
    valid = s > 3.0
    reason = "" if valid else (
        f"s = {s} <= 3: Tr(Lambda Q) ~ sum k^(2-s) diverges as N -> inf"
    )
    return NoiseSpec(q=c * k**-s, kind="power_law", c=c, s=s,
                     valid=valid, invalid_reason=reason)


def _require_valid(spec: NoiseSpec):
    if not spec.valid:
        raise ConfigurationError(
            f"noise spec violates the trace-class assumption: {spec.invalid_reason}"
        )


def sample_increment(spec: NoiseSpec, tau: float, rng: np.random.Generator) -> SpectralField:
    """One Wiener increment: independent N(0, q_k * tau) per mode."""
    if tau <= 0:
        raise ConfigurationError(f"step size tau must be > 0, got {tau}")
    _require_valid(spec)
    return SpectralField(np.sqrt(spec.q * tau) * rng.standard_normal(spec.n_modes))


@dataclass(frozen=True)
class IncrementPath:
    """Pre-sampled Wiener increments, one row per step.

    Sharing one path between consumers realises synchronous coupling; see
    :func:`coarsen_path` for exact aggregation onto a coarser step grid.
    """

    increments: np.ndarray  # shape (n_steps, n_modes)
    tau: float
    seed_info: str = field(default="", compare=False)

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 2:
            raise ShapeError("increments must have shape (n_steps, n_modes)")
        object.__setattr__(self, "increments", inc)
        if self.tau <= 0:
            raise ConfigurationError(f"step size tau must be > 0, got {self.tau}")

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def n_modes(self) -> int:
        return self.increments.shape[1]

    def step_field(self, n: int) -> SpectralField:
        return SpectralField(self.increments[n])

    def total_increment(self) -> np.ndarray:
        """Sum of all increments, reduced by pairwise folding.

        The folding order matches :func:`coarsen_path`, so the total is
        bitwise identical across dyadic coarsening levels of the same path.
        """
        acc = self.increments
        while acc.shape[0] > 1:
            if acc.shape[0] % 2:
                head, acc = acc[:1], acc[1:]
                acc = np.concatenate([head + acc[:1], acc[1:]])
            else:
                acc = acc[0::2] + acc[1::2]
        return acc[0]


def sample_increment_path(
    spec: NoiseSpec,
    tau: float,
    n_steps: int,
    rng: np.random.Generator,
    seed_info: str = "",
) -> IncrementPath:
    """Draw a full increment path in one vectorized call (see module docs)."""
    if tau <= 0:
        raise ConfigurationError(f"step size tau must be > 0, got {tau}")
    if n_steps < 0:
        raise ConfigurationError(f"n_steps must be >= 0, got {n_steps}")
    _require_valid(spec)
    scale = np.sqrt(spec.q * tau)
    draws = rng.standard_normal((n_steps, spec.n_modes))
    return IncrementPath(draws * scale, tau, seed_info=seed_info)


def coarsen_path(fine: IncrementPath, ratio: int) -> IncrementPath:
    """Aggregate a fine path onto a step grid coarser by ``ratio``.

    Coarse increment n is exactly the sum of fine increments
    r*n .. r*(n+1)-1, so the underlying Brownian path is preserved (no
    re-sampling).  Power-of-two ratios are folded pairwise, which makes
    ``coarsen(coarsen(p, 2), 2)`` bitwise identical to ``coarsen(p, 4)``.
    """
    if ratio < 1:
        raise ConfigurationError(f"coarsening ratio must be >= 1, got {ratio}")
    if ratio == 1:
        return fine
    if fine.n_steps % ratio:
        raise ShapeError(
            f"ratio {ratio} does not divide the {fine.n_steps} fine steps"
        )
    inc = fine.increments
    r = ratio
    while r % 2 == 0:
        inc = inc[0::2] + inc[1::2]
        r //= 2
    if r > 1:
        inc = inc.reshape(-1, r, inc.shape[1]).sum(axis=1)
    return IncrementPath(inc, fine.tau * ratio, seed_info=fine.seed_info)


def project_path(path: IncrementPath, n_modes: int) -> IncrementPath:
    """Restrict each increment to its first N modes (Galerkin projection)."""
    if n_modes > path.n_modes:
        raise ShapeError(
            f"cannot project a {path.n_modes}-mode path onto {n_modes} modes"
        )
    return IncrementPath(
        path.increments[:, :n_modes].copy(), path.tau, seed_info=path.seed_info
    )


def experiment_rng(seed: int) -> np.random.Generator:
    """Root generator for a single-stream experiment."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def trajectory_rngs(seed: int, n_trajectories: int) -> list[np.random.Generator]:
    """Independent per-trajectory generators spawned from one experiment seed."""
    children = np.random.SeedSequence(seed).spawn(n_trajectories)
    return [np.random.default_rng(c) for c in children]
