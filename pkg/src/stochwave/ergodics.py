"""Long-time statistics: Lyapunov functionals, time averages, coupling.

The two Lyapunov functionals add a small cross term to the squared Sobolev
energies,

    H2_eps(u, v) = |u|_{H^2}^2 + |v|_{H^1}^2
                   + eps (<u, v>_{H^1} + eta/2 |u|_{H^1}^2)
    H1_eps(u, v) = |u|_{H^1}^2 + |v|^2 + eps (<u, v> + eta/2 |u|^2)

and are equivalent to the plain energies through the sandwich

    (2 - eps)/2 * E  <=  H_eps  <=  (2 + eps + eps eta)/2 * E.

Test functionals are weighed with the weighted Hoelder distance

    d_{p,gamma}(x1, x2) = |x1 - x2|^gamma (1 + |x1|^p + |x2|^p)^(1/2)

(not a metric; only symmetry and identity of indiscernibles hold), under
which contraction of the dynamics transfers to observables of polynomial
growth.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .integrator import SchemeConfig, _step_arrays
from .noise import NoiseSpec, experiment_rng, sample_increment_path
from .nonlinearity import NonlinearityModel
from .spectral import PhaseState, eigenvalue, eigenvalues, phase_norm, sobolev_inner

__all__ = [
    "LyapunovParams",
    "CpGammaFunctional",
    "TimeAverageAccumulator",
    "ContractionResult",
    "admissible_epsilon_h2",
    "default_epsilon",
    "lyapunov_h1",
    "lyapunov_h2",
    "d_p_gamma",
    "make_observable",
    "observable_names",
    "coupled_contraction",
    "fit_decay_rate",
    "fit_loglog_slope",
    "wasserstein1_1d",
]

LAMBDA_1 = float(np.pi**2)


def admissible_epsilon_h2(eta: float, a1: float, a2: float) -> float:
    """Upper limit of the eps range the H2 moment-bound proof admits."""
    if eta + a2 <= 0:
        raise ConfigurationError(
            f"need eta + a2 > 0 for dissipativity, got {eta + a2}"
        )
    return min((eta + a2) * LAMBDA_1**2 / (1.0 + 2.0 * a1**2), 2.0)


def default_epsilon(eta: float, model: NonlinearityModel, lip_l: float | None = None) -> float:
    """Half the smallest eps constraint appearing in the proofs.

    Uses the contraction-lemma constraint (eta + a2)/(4 (L^2 + eta^2 + 1))
    with the empirical H^-1 Lipschitz surrogate when no L is supplied, and
    the H2 moment-bound constraint.
    """
    if lip_l is None:
        lip_l = model.lip_l
    if lip_l is None:
        from .nonlinearity import empirical_h_minus1_lipschitz

        lip_l = empirical_h_minus1_lipschitz(model, np.random.default_rng(0))
    contraction_limit = (eta + model.a2) / (4.0 * (lip_l**2 + eta**2 + 1.0))
    return 0.5 * min(contraction_limit, admissible_epsilon_h2(eta, model.a1, model.a2))


@dataclass(frozen=True)
class LyapunovParams:
    """Cross-term weight eps and the damping it was tuned for.

    The constructor enforces only the universal constraint 0 < eps < 2;
    :meth:`for_model` additionally respects the model-dependent admissible
    range.
    """

    epsilon: float
    eta: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 2.0:
            raise ConfigurationError(
                f"epsilon must lie in (0, 2), got {self.epsilon}"
            )
        if self.eta < 0:
            raise ConfigurationError(f"eta must be >= 0, got {self.eta}")

    @classmethod
    def for_model(cls, eta: float, model: NonlinearityModel,
                  lip_l: float | None = None) -> "LyapunovParams":
        return cls(default_epsilon(eta, model, lip_l), eta)

    def check_admissible(self, a1: float, a2: float):
        limit = admissible_epsilon_h2(self.eta, a1, a2)
        if not self.epsilon < limit:
            raise ConfigurationError(
                f"epsilon = {self.epsilon:g} outside the admissible range "
                f"(0, {limit:g}) for a1 = {a1:g}, a2 = {a2:g}"
            )


def lyapunov_h2(x: PhaseState, params: LyapunovParams) -> float:
    lam = eigenvalues(x.n_modes)
    u, v = x.u.coeffs, x.v.coeffs
    uu2 = float(np.sum(lam**2 * u * u))
    vv1 = float(np.sum(lam * v * v))
    uv1 = float(np.sum(lam * u * v))
    uu1 = float(np.sum(lam * u * u))
    return uu2 + vv1 + params.epsilon * (uv1 + 0.5 * params.eta * uu1)


def lyapunov_h1(x: PhaseState, params: LyapunovParams) -> float:
    lam = eigenvalues(x.n_modes)
    u, v = x.u.coeffs, x.v.coeffs
    uu1 = float(np.sum(lam * u * u))
    vv0 = float(np.sum(v * v))
    uv0 = float(np.sum(u * v))
    uu0 = float(np.sum(u * u))
    return uu1 + vv0 + params.epsilon * (uv0 + 0.5 * params.eta * uu0)


def d_p_gamma(x1: PhaseState, x2: PhaseState, p: float, gamma: float) -> float:
    """Weighted Hoelder distance on the H^1 product space."""
    if not 0.0 < gamma <= 1.0:
        raise ConfigurationError(f"gamma must lie in (0, 1], got {gamma}")
    if p < 0:
        raise ConfigurationError(f"p must be >= 0, got {p}")
    diff = phase_norm(x1 - x2, 1.0)
    weight = np.sqrt(1.0 + phase_norm(x1, 1.0) ** p + phase_norm(x2, 1.0) ** p)
    return float(diff**gamma * weight)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CpGammaFunctional:
    """Named observable with (p, gamma) class data.

    ``norm_bound`` is a certified upper bound for the d_{p,gamma} seminorm
    of the observable on the H^1 product space, or None for quantities that
    are monitored but not in any C_{p,gamma}(H^1) class (the H^2-level
    functionals).
    """

    name: str
    fn: Callable[[PhaseState], float]
    p: float
    gamma: float
    norm_bound: float | None

    def __call__(self, state: PhaseState) -> float:
        return self.fn(state)


_MODE_PATTERN = re.compile(r"^(mode_[uv])\((\d+)\)$")

_SIMPLE_OBSERVABLES = ("h1_norm_sq", "h2_norm_sq", "v_norm_sq")


def observable_names() -> list[str]:
    return list(_SIMPLE_OBSERVABLES) + [
        "mode_u(k)", "mode_v(k)", "lyapunov_h1", "lyapunov_h2",
    ]


def make_observable(name: str, lyapunov: LyapunovParams | None = None) -> CpGammaFunctional:
    """Resolve an observable by its config-file name.

    ``mode_u(k)``/``mode_v(k)`` read a single coefficient; the Lyapunov
    observables require ``lyapunov`` parameters.
    """
    if name == "v_norm_sq":
        return CpGammaFunctional(
            name, lambda x: float(np.sum(x.v.coeffs**2)),
            p=2.0, gamma=1.0, norm_bound=np.sqrt(2.0),
        )
    if name == "h1_norm_sq":
        return CpGammaFunctional(
            name, lambda x: phase_norm(x, 1.0) ** 2,
            p=2.0, gamma=1.0, norm_bound=np.sqrt(2.0),
        )
    if name == "h2_norm_sq":
        return CpGammaFunctional(
            name, lambda x: phase_norm(x, 2.0) ** 2,
            p=2.0, gamma=1.0, norm_bound=None,
        )
    match = _MODE_PATTERN.match(name)
    if match:
        kind, k_str = match.groups()
        k = int(k_str)
        if k < 1:
            raise ConfigurationError(f"mode index must be >= 1 in '{name}'")
        idx = k - 1
        if kind == "mode_u":
            lam_k = eigenvalue(k)
            return CpGammaFunctional(
                name,
                lambda x: float(x.u.coeffs[idx]) if idx < x.n_modes else 0.0,
                p=0.0, gamma=1.0, norm_bound=lam_k**-0.5 / np.sqrt(3.0),
            )
        return CpGammaFunctional(
            name,
            lambda x: float(x.v.coeffs[idx]) if idx < x.n_modes else 0.0,
            p=0.0, gamma=1.0, norm_bound=1.0 / np.sqrt(3.0),
        )
    if name in ("lyapunov_h1", "lyapunov_h2"):
        if lyapunov is None:
            raise ConfigurationError(
                f"observable '{name}' needs Lyapunov parameters (epsilon, eta)"
            )
        if name == "lyapunov_h1":
            bound = np.sqrt(2.0) * (2.0 + lyapunov.epsilon * (1.0 + lyapunov.eta)) / 2.0
            return CpGammaFunctional(
                name, lambda x: lyapunov_h1(x, lyapunov),
                p=2.0, gamma=1.0, norm_bound=bound,
            )
        return CpGammaFunctional(
            name, lambda x: lyapunov_h2(x, lyapunov),
            p=2.0, gamma=1.0, norm_bound=None,
        )
    raise ConfigurationError(
        f"unknown observable '{name}'; known: {', '.join(observable_names())}"
    )


# ---------------------------------------------------------------------------
# time averaging
# ---------------------------------------------------------------------------

class TimeAverageAccumulator:
    """Streaming Birkhoff average with exact (Kahan) summation.

    Keeps dyadic-count checkpoints of the partial averages and per-chunk
    sums from which a batch-means standard error is formed; memory stays
    O(count / chunk_size).
    """

    def __init__(self, chunk_size: int = 1000):
        if chunk_size < 1:
            raise ConfigurationError("chunk_size must be >= 1")
        self.chunk_size = chunk_size
        self.count = 0
        self._sum = 0.0
        self._compensation = 0.0
        self.checkpoints: list[tuple[int, float]] = []
        self._next_checkpoint = 1
        self._chunk_sums: list[float] = []
        self._chunk_acc = 0.0
        self._chunk_count = 0

    def add(self, value: float):
        y = value - self._compensation
        t = self._sum + y
        self._compensation = (t - self._sum) - y
        self._sum = t
        self.count += 1
        self._chunk_acc += value
        self._chunk_count += 1
        if self._chunk_count == self.chunk_size:
            self._chunk_sums.append(self._chunk_acc)
            self._chunk_acc = 0.0
            self._chunk_count = 0
        if self.count == self._next_checkpoint:
            self.checkpoints.append((self.count, self.average))
            self._next_checkpoint *= 2

    def extend(self, values):
        for value in np.asarray(values, dtype=float):
            self.add(float(value))

    @property
    def average(self) -> float:
        if self.count == 0:
            raise ConfigurationError("no samples accumulated yet")
        return self._sum / self.count

    def batch_means_standard_error(self, n_batches: int = 32) -> float:
        """Standard error of the average; accounts for serial correlation
        as long as a batch spans several mixing times.  NaN when fewer than
        four complete chunks exist."""
        chunks = self._chunk_sums
        if len(chunks) < 4:
            return float("nan")
        b = min(n_batches, len(chunks) // 2)
        per = len(chunks) // b
        used = np.array(chunks[: b * per]).reshape(b, per)
        batch_means = used.sum(axis=1) / (per * self.chunk_size)
        return float(np.std(batch_means, ddof=1) / np.sqrt(b))

    def merge(self, other: "TimeAverageAccumulator"):
        """Order-insensitive sum/count merge for cross-trajectory pooling."""
        if other.chunk_size != self.chunk_size:
            raise ConfigurationError("cannot merge accumulators with different chunking")
        self._sum += other._sum
        self._compensation += other._compensation
        self.count += other.count
        self._chunk_sums.extend(other._chunk_sums)
        self._chunk_acc += other._chunk_acc
        self._chunk_count += other._chunk_count
        while self._chunk_count >= self.chunk_size:
            # merged partial chunks may overflow; split them off
            self._chunk_sums.append(self._chunk_acc)
            self._chunk_acc = 0.0
            self._chunk_count -= self.chunk_size


# ---------------------------------------------------------------------------
# coupling diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionResult:
    times: np.ndarray
    distances: np.ndarray
    rate: float          # positive = exponential decay of the H^1 distance
    rate_stderr: float
    n_fit_points: int
    identical: bool      # initial states coincided; nothing to fit

    @property
    def initial_distance(self) -> float:
        return float(self.distances[0])


def fit_decay_rate(times, values, floor: float = 0.0) -> tuple[float, float, int]:
    """Least-squares decay rate of log(values) over the usable window.

    Points at or below ``floor`` (or non-positive) are excluded so the fit
    never chases floating-point noise.  Returns (rate, stderr, n_used) with
    rate > 0 meaning decay; (nan, nan, n) when fewer than three points
    remain.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    mask = y > max(floor, 0.0)
    n_used = int(mask.sum())
    if n_used < 3:
        return float("nan"), float("nan"), n_used
    slope, stderr = _ols_slope(t[mask], np.log(y[mask]))
    return -slope, stderr, n_used


def fit_loglog_slope(levels, errors) -> tuple[float, float]:
    """Slope of log(error) against log(level), with its standard error."""
    x = np.log(np.asarray(levels, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return _ols_slope(x, y)


def _ols_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    if len(x) < 2:
        return float("nan"), float("nan")
    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(np.sum(xm * xm))
    if sxx == 0.0:
        return float("nan"), float("nan")
    slope = float(np.sum(xm * ym) / sxx)
    if len(x) == 2:
        return slope, float("nan")
    resid = ym - slope * xm
    var = float(np.sum(resid**2) / (len(x) - 2))
    return slope, float(np.sqrt(var / sxx))


def coupled_contraction(
    x0: PhaseState,
    x0_tilde: PhaseState,
    cfg: SchemeConfig,
    model: NonlinearityModel,
    spec: NoiseSpec,
    n_steps: int,
    seed: int,
) -> ContractionResult:
    """Distance series of two trajectories driven by the same noise.

    Both trajectories consume one increment path sampled from ``seed``
    (synchronous coupling), so the H^1 distance is non-increasing step by
    step whenever eta + a2 > 0; the fitted rate estimates the exponential
    contraction exponent.
    """
    if x0.n_modes != cfg.n_modes or x0_tilde.n_modes != cfg.n_modes:
        raise ConfigurationError("initial states must match the configured mode count")
    path = sample_increment_path(spec, cfg.tau, n_steps, experiment_rng(seed),
                                 seed_info=f"seed={seed}")
    lam = cfg.lambdas
    u_a, v_a = x0.u.coeffs.copy(), x0.v.coeffs.copy()
    u_b, v_b = x0_tilde.u.coeffs.copy(), x0_tilde.v.coeffs.copy()
    n_modes = cfg.n_modes

    distances = np.empty(n_steps + 1)

    def h1_dist():
        du = u_a - u_b
        dv = v_a - v_b
        return np.sqrt(np.sum(lam * du * du) + np.sum(dv * dv))

    distances[0] = h1_dist()
    identical = distances[0] == 0.0
    for n in range(n_steps):
        dw = path.increments[n][:n_modes]
        u_a, v_a, _, _ = _step_arrays(u_a, v_a, cfg, model, dw)
        u_b, v_b, _, _ = _step_arrays(u_b, v_b, cfg, model, dw)
        distances[n + 1] = h1_dist()

    times = cfg.tau * np.arange(n_steps + 1)
    if identical:
        rate, stderr, n_used = float("nan"), float("nan"), 0
    else:
        floor = 1e3 * np.finfo(float).eps * distances[0]
        rate, stderr, n_used = fit_decay_rate(times, distances, floor=floor)
    return ContractionResult(times, distances, rate, stderr, n_used, identical)


# ---------------------------------------------------------------------------
# one-dimensional Wasserstein distance
# ---------------------------------------------------------------------------

def wasserstein1_1d(a, b) -> float:
    """W_1 between empirical measures of two scalar sample sets.

    In one dimension the order-statistics (quantile) coupling is optimal:
    with equal counts this is the mean absolute difference of the sorted
    samples; for unequal counts the integral of |F_a - F_b| over the merged
    support evaluates the same coupling exactly.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ConfigurationError("wasserstein1_1d needs non-empty sample sets")
    if a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    merged = np.sort(np.concatenate([a, b]))
    gaps = np.diff(merged)
    cdf_a = np.searchsorted(np.sort(a), merged[:-1], side="right") / a.size
    cdf_b = np.searchsorted(np.sort(b), merged[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * gaps))
