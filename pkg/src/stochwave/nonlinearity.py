"""Dissipative velocity-damping models and their pointwise (Nemytskii) action.

A model is a scalar map f applied pointwise to the velocity field, together
with the constants that the well-posedness and long-time theory need:

* a1     -- linear growth: |f(xi)| <= a1 (1 + |xi|), with a1 < (sqrt(2)/2) eta;
* a2     -- derivative infimum: inf f' = a2 > -eta (one-sided monotonicity);
* growth_c -- derivative growth: |f'(xi)| <= growth_c (1 + |xi|);
* lip_l  -- optional H^-1 Lipschitz surrogate, estimated empirically.

The catalogue spans the easy cases (zero, linear, bounded sine, arctan) and
a genuinely non-globally-Lipschitz sawtooth whose up-slopes grow without
bound while the down-slope stays at -1/2, smoothed at the corners by C^1
quadratic blends so that f' exists everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .spectral import SpectralField, analyze, sobolev_norm, synthesize

__all__ = [
    "NonlinearityModel",
    "AssumptionAudit",
    "apply_F",
    "apply_f_coeffs",
    "audit_assumptions",
    "builtin_models",
    "empirical_h_minus1_lipschitz",
    "make_model",
    "MODEL_NAMES",
]

SQRT2_OVER_2 = np.sqrt(2.0) / 2.0


@dataclass(frozen=True)
class NonlinearityModel:
    """Pointwise damping map with certified assumption constants.

    ``linear_slope`` is set for models whose Nemytskii action is exactly
    diagonal (zero and linear); integrators use it to skip grid transforms.
    ``certified`` is False for models kept only to exercise the audit.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    a1: float
    a2: float
    growth_c: float
    lip_l: float | None = None
    linear_slope: float | None = None
    certified: bool = True
    params: dict = field(default_factory=dict)

    def check_against_damping(self, eta: float):
        """Raise unless the certified constants are admissible for this eta."""
        if eta <= 0:
            raise ConfigurationError(f"damping eta must be > 0, got {eta}")
        if not self.certified:
            raise ConfigurationError(
                f"model '{self.name}' carries no certified constants; "
                "it can be audited but not simulated"
            )
        limit = SQRT2_OVER_2 * eta
        if not self.a1 < limit:
            raise ConfigurationError(
                f"model '{self.name}': linear-growth constant a1 = {self.a1:g} "
                f"must satisfy a1 < (sqrt(2)/2) eta = {limit:g}"
            )
        if not self.a2 > -eta:
            raise ConfigurationError(
                f"model '{self.name}': derivative infimum a2 = {self.a2:g} "
                f"must satisfy a2 > -eta = {-eta:g}"
            )


def apply_f_coeffs(model: NonlinearityModel, coeffs: np.ndarray, m_points: int) -> np.ndarray:
    """Nemytskii action on raw coefficients: analyze(f(synthesize(c)))."""
    if model.linear_slope is not None:
        return model.linear_slope * coeffs
    values = synthesize(coeffs, m_points)
    return analyze(model.f(values), len(coeffs))


def apply_F(model: NonlinearityModel, v: SpectralField, m_points: int | None = None) -> SpectralField:
    """Projected Nemytskii operator P_N F on a spectral field.

    The field is synthesized on an oversampled interior grid (default
    M = 2N + 1), f is applied pointwise, and the result is analyzed back
    onto the first N modes.  Exact dealiasing is impossible for
    non-polynomial f; oversampling plus projection is the standard
    compromise.
    """
    if m_points is None:
        m_points = 2 * v.n_modes + 1
    if m_points < v.n_modes:
        # analyze() would also catch this, but fail before synthesizing
        from .errors import AliasingError

        raise AliasingError(
            f"Nemytskii grid too small: M = {m_points} < N = {v.n_modes}"
        )
    return SpectralField(apply_f_coeffs(model, v.coeffs, m_points))


# ---------------------------------------------------------------------------
# sawtooth with unbounded up-slopes (non-globally-Lipschitz damping)
# ---------------------------------------------------------------------------

def _sawtooth_core(x, eps: float):
    """Value and slope of the corner-smoothed sawtooth h_m.

    For x >= 0 the unsmoothed profile is, with alpha_n = n(n+1)/2 - 1,

        h(x) = (alpha_n - x)/2          on [alpha_n, alpha_n + n)
        h(x) = n (x - alpha_{n+1})/2    on [alpha_n + n, alpha_{n+1})

    extended oddly to x < 0.  It obeys |h| <= |x| and slope >= -1/2, but its
    up-slopes n/2 grow without bound.  Each corner y is replaced on
    [y - eps, y + eps] by the quadratic whose derivative interpolates the
    one-sided slopes linearly; that keeps the function C^1, keeps every
    slope inside the two one-sided slopes, and preserves |h| <= |x|.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    sg = np.sign(x)

    # block index: largest n >= 1 with alpha_n <= |x|
    n = np.floor((np.sqrt(8.0 * ax + 9.0) - 1.0) / 2.0)
    n = np.maximum(n, 1.0)
    alpha = n * (n + 1.0) / 2.0 - 1.0
    # one-step fixup for floating-point boundary cases
    over = alpha > ax
    n = np.where(over, n - 1.0, n)
    alpha = n * (n + 1.0) / 2.0 - 1.0
    alpha_next = alpha + n + 1.0
    under = alpha_next <= ax
    n = np.where(under, n + 1.0, n)
    alpha = n * (n + 1.0) / 2.0 - 1.0
    alpha_next = alpha + n + 1.0

    on_down = ax - alpha < n
    value = np.where(on_down, (alpha - ax) / 2.0, n * (ax - alpha_next) / 2.0)
    slope = np.where(on_down, -0.5, n / 2.0)

    def blend(mask, d, hy, s1, s2):
        nonlocal value, slope
        vb = hy + s1 * d + (s2 - s1) * (d + eps) ** 2 / (4.0 * eps)
        sb = s1 + (s2 - s1) * (d + eps) / (2.0 * eps)
        value = np.where(mask, vb, value)
        slope = np.where(mask, sb, slope)

    # valley at alpha_n + n: slopes -1/2 -> n/2, value -n/2
    d = ax - (alpha + n)
    blend(np.abs(d) <= eps, d, -n / 2.0, -0.5, n / 2.0)
    # peak at alpha_n (a corner only for n >= 2): slopes (n-1)/2 -> -1/2
    d = ax - alpha
    blend((n >= 2) & (d <= eps), d, 0.0, (n - 1.0) / 2.0, -0.5)
    # peak of the next block, approached from the left
    d = ax - alpha_next
    blend(d >= -eps, d, 0.0, n / 2.0, -0.5)

    return sg * value, slope


# ---------------------------------------------------------------------------
# catalogue
# ---------------------------------------------------------------------------

MODEL_NAMES = ("zero", "linear", "sine", "arctan", "sawtooth", "quadratic")


def make_model(name: str, eta: float, params: dict | None = None) -> NonlinearityModel:
    """Build a model by name.

    Recognised parameters: ``alpha`` (linear), ``amplitude`` (sine/arctan),
    ``smoothing_eps`` (sawtooth).  The certified constants scale with eta so
    every certified entry is admissible for the eta it was built with.
    """
    if eta <= 0:
        raise ConfigurationError(f"damping eta must be > 0, got {eta}")
    p = dict(params or {})

    def reject_unknown(allowed):
        unknown = set(p) - set(allowed)
        if unknown:
            raise ConfigurationError(
                f"model '{name}' does not accept parameter(s) {sorted(unknown)}"
            )

    if name == "zero":
        reject_unknown(())
        zero = lambda xi: np.zeros_like(np.asarray(xi, dtype=float))
        return NonlinearityModel("zero", zero, zero, a1=0.0, a2=0.0,
                                 growth_c=0.0, linear_slope=0.0)

    if name == "linear":
        reject_unknown(("alpha",))
        alpha = float(p.get("alpha", eta / 4.0))
        if not alpha > -eta:
            raise ConfigurationError(
                f"linear model needs alpha > -eta, got alpha = {alpha}"
            )
        return NonlinearityModel(
            "linear",
            lambda xi: alpha * np.asarray(xi, dtype=float),
            lambda xi: np.full_like(np.asarray(xi, dtype=float), alpha),
            a1=abs(alpha), a2=alpha, growth_c=abs(alpha),
            linear_slope=alpha, params={"alpha": alpha},
        )

    if name == "sine":
        reject_unknown(("amplitude",))
        amp = float(p.get("amplitude", eta / 4.0))
        if amp <= 0:
            raise ConfigurationError("sine amplitude must be > 0")
        return NonlinearityModel(
            "sine",
            lambda xi: amp * np.sin(xi),
            lambda xi: amp * np.cos(xi),
            a1=amp, a2=-amp, growth_c=amp, params={"amplitude": amp},
        )

    if name == "arctan":
        reject_unknown(("amplitude",))
        amp = float(p.get("amplitude", eta / 4.0))
        if amp <= 0:
            raise ConfigurationError("arctan amplitude must be > 0")
        return NonlinearityModel(
            "arctan",
            lambda xi: amp * np.arctan(xi),
            lambda xi: amp / (1.0 + np.asarray(xi, dtype=float) ** 2),
            a1=amp * np.pi / 2.0, a2=0.0, growth_c=amp,
            params={"amplitude": amp},
        )

    if name == "sawtooth":
        reject_unknown(("smoothing_eps",))
        eps = float(p.get("smoothing_eps", 0.1))
        if not 0.0 < eps < 0.5:
            # corners are >= 1 apart; blends must not touch
            raise ConfigurationError(
                f"sawtooth smoothing_eps must lie in (0, 0.5), got {eps}"
            )
        scale = eta / 2.0
        return NonlinearityModel(
            "sawtooth",
            lambda xi: scale * _sawtooth_core(xi, eps)[0],
            lambda xi: scale * _sawtooth_core(xi, eps)[1],
            # |h_m| <= |x| and slope in [-1/2, n/2]; n/2 <= 3/4 (1 + |x|)
            a1=scale, a2=-scale / 2.0, growth_c=0.75 * scale,
            params={"smoothing_eps": eps},
        )

    if name == "quadratic":
        # deliberately violates linear growth; usable for audits only
        reject_unknown(())
        return NonlinearityModel(
            "quadratic",
            lambda xi: np.asarray(xi, dtype=float) ** 2,
            lambda xi: 2.0 * np.asarray(xi, dtype=float),
            a1=np.nan, a2=np.nan, growth_c=np.nan, certified=False,
        )

    raise ConfigurationError(
        f"unknown model '{name}'; choose from {', '.join(MODEL_NAMES)}"
    )


def builtin_models(eta: float) -> dict[str, NonlinearityModel]:
    """Catalogue of certified models, keyed by name, built for this eta."""
    return {
        name: make_model(name, eta)
        for name in MODEL_NAMES
        if name != "quadratic"
    }


# ---------------------------------------------------------------------------
# assumption auditing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionAudit:
    """Measured worst-case constants over a dense sample grid, plus verdicts."""

    model_name: str
    eta: float
    r_max: float
    n_samples: int
    measured_a1: float          # max |f| / (1 + |xi|)
    measured_min_fprime: float  # min f'
    measured_growth: float      # max |f'| / (1 + |xi|)
    fd_max_error: float         # |fprime - central difference|, worst case
    empirical_lip_l: float      # max ||F(v1)-F(v2)||_{H^-1} / ||v1-v2||
    pass_linear_growth: bool
    pass_derivative_bound: bool
    pass_derivative_growth: bool
    pass_fd_consistency: bool

    @property
    def passed(self) -> bool:
        return (self.pass_linear_growth and self.pass_derivative_bound
                and self.pass_derivative_growth and self.pass_fd_consistency)

    def failures(self) -> list[str]:
        out = []
        if not self.pass_linear_growth:
            out.append(
                f"linear growth violated: max |f|/(1+|xi|) = {self.measured_a1:.6g} "
                f"exceeds the admissible bound (sqrt(2)/2) eta = {SQRT2_OVER_2 * self.eta:.6g}"
            )
        if not self.pass_derivative_bound:
            out.append(
                f"derivative lower bound violated: min f' = {self.measured_min_fprime:.6g} "
                f"<= -eta = {-self.eta:.6g}"
            )
        if not self.pass_derivative_growth:
            out.append(
                f"derivative growth violated: max |f'|/(1+|xi|) = {self.measured_growth:.6g}"
            )
        if not self.pass_fd_consistency:
            out.append(
                f"fprime inconsistent with finite differences "
                f"(max error {self.fd_max_error:.3g} > 1e-6)"
            )
        return out

    def as_rows(self) -> list[dict]:
        rows = [
            {"quantity": "measured_a1", "value": self.measured_a1,
             "declared": np.nan, "passed": self.pass_linear_growth},
            {"quantity": "measured_min_fprime", "value": self.measured_min_fprime,
             "declared": np.nan, "passed": self.pass_derivative_bound},
            {"quantity": "measured_growth", "value": self.measured_growth,
             "declared": np.nan, "passed": self.pass_derivative_growth},
            {"quantity": "fd_max_error", "value": self.fd_max_error,
             "declared": 1e-6, "passed": self.pass_fd_consistency},
            {"quantity": "empirical_lip_l", "value": self.empirical_lip_l,
             "declared": np.nan, "passed": True},
        ]
        return rows


def empirical_h_minus1_lipschitz(model, rng, n_pairs=64, n_modes=16) -> float:
    """Surrogate for the H^-1 Lipschitz constant, maximised over random pairs."""
    if model.linear_slope is not None:
        # exact: sup lambda_k^{-1/2} |slope| at k = 1
        return abs(model.linear_slope) / np.pi
    m_points = 2 * n_modes + 1
    worst = 0.0
    for _ in range(n_pairs):
        c1 = rng.standard_normal(n_modes) * np.arange(1, n_modes + 1) ** -1.5
        c2 = c1 + rng.standard_normal(n_modes) * rng.uniform(0.01, 2.0)
        f1 = SpectralField(apply_f_coeffs(model, c1, m_points))
        f2 = SpectralField(apply_f_coeffs(model, c2, m_points))
        dist = np.linalg.norm(c1 - c2)
        if dist > 0:
            worst = max(worst, sobolev_norm(f1 - f2, -1.0) / dist)
    return worst


def audit_assumptions(
    model: NonlinearityModel,
    eta: float,
    r_max: float = 10.0,
    n_samples: int = 20001,
    rng: np.random.Generator | None = None,
) -> AssumptionAudit:
    """Scan [-R, R] and report worst-case ratios against the assumptions.

    Report-only: never raises on a violating model.  The declared constants
    (when certified) are also cross-checked against the measurements, so a
    miscertified catalogue entry fails its audit.
    """
    if r_max <= 0:
        raise ConfigurationError(f"audit range r_max must be > 0, got {r_max}")
    if rng is None:
        rng = np.random.default_rng(0)
    xi = np.linspace(-r_max, r_max, n_samples)
    fx = np.asarray(model.f(xi), dtype=float)
    fpx = np.asarray(model.fprime(xi), dtype=float)

    measured_a1 = float(np.max(np.abs(fx) / (1.0 + np.abs(xi))))
    measured_min_fprime = float(np.min(fpx))
    measured_growth = float(np.max(np.abs(fpx) / (1.0 + np.abs(xi))))

    # central differences; h small enough that the C^1-only models (blended
    # corners, |f''| jumps) still match to well under 1e-6
    h = 1e-8 * max(1.0, r_max / 10.0)
    fd = (np.asarray(model.f(xi + h)) - np.asarray(model.f(xi - h))) / (2.0 * h)
    fd_max_error = float(np.max(np.abs(fd - fpx)))

    tol = 1e-9
    limit_a1 = SQRT2_OVER_2 * eta
    if model.certified:
        pass_lin = (measured_a1 <= model.a1 * (1.0 + tol) + tol
                    and model.a1 < limit_a1)
        pass_der = (measured_min_fprime >= model.a2 - tol
                    and model.a2 > -eta)
        pass_gro = measured_growth <= model.growth_c * (1.0 + tol) + tol
    else:
        pass_lin = measured_a1 < limit_a1
        pass_der = measured_min_fprime > -eta
        pass_gro = np.isfinite(measured_growth)

    return AssumptionAudit(
        model_name=model.name,
        eta=eta,
        r_max=r_max,
        n_samples=n_samples,
        measured_a1=measured_a1,
        measured_min_fprime=measured_min_fprime,
        measured_growth=measured_growth,
        fd_max_error=fd_max_error,
        empirical_lip_l=empirical_h_minus1_lipschitz(model, rng),
        pass_linear_growth=bool(pass_lin),
        pass_derivative_bound=bool(pass_der),
        pass_derivative_growth=bool(pass_gro),
        pass_fd_consistency=bool(fd_max_error <= 1e-6),
    )
