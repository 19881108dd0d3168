"""Experiment configuration: a sectioned TOML file with a strict schema.

Every physical parameter (n_modes, tau, eta, the model and its constants)
must be explicit, the seed is mandatory, and unknown keys anywhere in the
file are rejected with their dotted path.  A validated config can build
the scheme, noise spec, nonlinearity model, and initial state it names.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .integrator import SchemeConfig, SolverOptions
from .noise import NoiseSpec, build_power_law_q
from .nonlinearity import NonlinearityModel, make_model
from .spectral import PhaseState, smooth_state

__all__ = ["ExperimentConfig", "load_config", "parse_config", "EXPERIMENT_KINDS"]

EXPERIMENT_KINDS = (
    "simulate",
    "converge-time",
    "converge-space",
    "invariant-check",
    "contraction",
    "slln",
    "audit-model",
)

_MODEL_PARAM_KEYS = ("alpha", "amplitude", "smoothing_eps")

# kind -> {key: (required, checker)}
_EXPERIMENT_KEYS: dict[str, dict] = {
    "simulate": {
        "observables": (False, "str_list"),
        "record_every": (False, "pos_int"),
    },
    "converge-time": {
        "tau_ladder": (True, "float_list"),
        "tau_ref": (True, "pos_float"),
        "n_samples": (True, "pos_int"),
    },
    "converge-space": {
        "n_ladder": (True, "int_list"),
        "n_ref": (True, "pos_int"),
        "n_samples": (True, "pos_int"),
    },
    "invariant-check": {
        "burn_in": (True, "nonneg_float"),
        "include_bias_probe": (False, "bool"),
        "rel_tolerance": (False, "pos_float"),
    },
    "contraction": {
        "n_pairs": (True, "pos_int"),
        "min_rate": (False, "pos_float"),
        "pair_scale": (False, "pos_float"),
    },
    "slln": {
        "observable": (True, "str"),
        "horizons": (True, "float_list"),
        "replicas": (True, "pos_int"),
    },
    "audit-model": {
        "r_max": (False, "pos_float"),
        "n_points": (False, "pos_int"),
    },
}

_HORIZON_FREE_KINDS = ("audit-model",)


def _fail(path: str, message: str):
    raise ConfigurationError(message, key_path=path)


def _check_value(path: str, value, checker: str):
    def is_num(x):
        return isinstance(x, (int, float)) and not isinstance(x, bool)

    if checker == "pos_int":
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            _fail(path, f"expected a positive integer, got {value!r}")
    elif checker == "nonneg_float":
        if not is_num(value) or value < 0:
            _fail(path, f"expected a number >= 0, got {value!r}")
    elif checker == "pos_float":
        if not is_num(value) or value <= 0:
            _fail(path, f"expected a number > 0, got {value!r}")
    elif checker == "float":
        if not is_num(value):
            _fail(path, f"expected a number, got {value!r}")
    elif checker == "bool":
        if not isinstance(value, bool):
            _fail(path, f"expected true/false, got {value!r}")
    elif checker == "str":
        if not isinstance(value, str):
            _fail(path, f"expected a string, got {value!r}")
    elif checker == "str_list":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            _fail(path, f"expected a list of strings, got {value!r}")
    elif checker == "float_list":
        if (not isinstance(value, list) or not value
                or not all(is_num(v) for v in value)):
            _fail(path, f"expected a non-empty list of numbers, got {value!r}")
    elif checker == "int_list":
        if (not isinstance(value, list) or not value
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
            _fail(path, f"expected a non-empty list of integers, got {value!r}")
    else:  # pragma: no cover - schema bug
        raise AssertionError(f"unknown checker {checker}")
    return value


def _take_section(raw: dict, name: str, required: bool) -> dict:
    section = raw.get(name)
    if section is None:
        if required:
            _fail(name, "required section missing")
        return {}
    if not isinstance(section, dict):
        _fail(name, "expected a table (TOML section)")
    return dict(section)


def _reject_unknown(path: str, given: dict, allowed):
    unknown = set(given) - set(allowed)
    if unknown:
        key = sorted(unknown)[0]
        _fail(f"{path}.{key}" if path else key, "unknown key")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see the README for the schema."""

    seed: int
    n_modes: int
    tau: float
    eta: float
    horizon: float | None
    solver: SolverOptions
    m_points: int | None
    noise_kind: str
    noise_c: float
    noise_s: float
    model_name: str
    model_params: dict
    initial_u_amplitude: float
    initial_v_amplitude: float
    kind: str
    experiment: dict
    echo: dict = field(repr=False)

    def scheme(self, n_modes: int | None = None, tau: float | None = None) -> SchemeConfig:
        return SchemeConfig(
            n_modes=self.n_modes if n_modes is None else n_modes,
            tau=self.tau if tau is None else tau,
            eta=self.eta,
            solver=self.solver,
            m_points=self.m_points if n_modes is None else None,
        )

    def model(self) -> NonlinearityModel:
        return make_model(self.model_name, self.eta, self.model_params)

    def noise(self, n_modes: int | None = None) -> NoiseSpec:
        n = self.n_modes if n_modes is None else n_modes
        if self.noise_kind != "power_law":
            raise ConfigurationError(
                f"unsupported noise kind '{self.noise_kind}'", key_path="noise.kind"
            )
        return build_power_law_q(self.noise_c, self.noise_s, n)

    def initial_state(self, n_modes: int | None = None) -> PhaseState:
        n = self.n_modes if n_modes is None else n_modes
        return smooth_state(n, self.initial_u_amplitude, self.initial_v_amplitude)

    @property
    def n_steps(self) -> int:
        if self.horizon is None:
            raise ConfigurationError("scheme.horizon missing", key_path="scheme.horizon")
        steps = self.horizon / self.tau
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigurationError(
                f"tau = {self.tau} does not divide horizon = {self.horizon}",
                key_path="scheme.tau",
            )
        return int(round(steps))


def parse_config(raw: dict, expected_kind: str | None = None) -> ExperimentConfig:
    """Validate a parsed TOML document; raises with the failing key path."""
    if not isinstance(raw, dict):
        raise ConfigurationError("top level must be a table")
    _reject_unknown("", raw, ("seed", "scheme", "noise", "nonlinearity",
                              "initial", "experiment"))

    if "seed" not in raw:
        _fail("seed", "required (seeds are mandatory; no entropy defaults)")
    seed = raw["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        _fail("seed", f"expected a non-negative integer, got {seed!r}")

    scheme = _take_section(raw, "scheme", required=True)
    _reject_unknown("scheme", scheme,
                    ("n_modes", "tau", "eta", "horizon", "m_points", "solver"))
    for key in ("n_modes", "tau", "eta"):
        if key not in scheme:
            _fail(f"scheme.{key}", "required (physical parameters must be explicit)")
    n_modes = _check_value("scheme.n_modes", scheme["n_modes"], "pos_int")
    tau = float(_check_value("scheme.tau", scheme["tau"], "pos_float"))
    if not tau < 1.0:
        _fail("scheme.tau", f"time step must lie in (0, 1), got {tau}")
    eta = float(_check_value("scheme.eta", scheme["eta"], "pos_float"))
    horizon = None
    if "horizon" in scheme:
        horizon = float(_check_value("scheme.horizon", scheme["horizon"], "pos_float"))
    m_points = None
    if "m_points" in scheme:
        m_points = _check_value("scheme.m_points", scheme["m_points"], "pos_int")
        if m_points < n_modes:
            _fail("scheme.m_points", f"must be >= n_modes = {n_modes}")

    solver_tbl = scheme.get("solver", {})
    if not isinstance(solver_tbl, dict):
        _fail("scheme.solver", "expected a table")
    _reject_unknown("scheme.solver", solver_tbl, ("tolerance", "max_iters", "method"))
    solver_kwargs = {}
    if "tolerance" in solver_tbl:
        solver_kwargs["tolerance"] = float(
            _check_value("scheme.solver.tolerance", solver_tbl["tolerance"], "pos_float"))
    if "max_iters" in solver_tbl:
        solver_kwargs["max_iters"] = _check_value(
            "scheme.solver.max_iters", solver_tbl["max_iters"], "pos_int")
    if "method" in solver_tbl:
        method = _check_value("scheme.solver.method", solver_tbl["method"], "str")
        if method not in ("fixed_point", "newton"):
            _fail("scheme.solver.method", f"must be fixed_point or newton, got {method!r}")
        solver_kwargs["method"] = method
    solver = SolverOptions(**solver_kwargs)

    noise = _take_section(raw, "noise", required=True)
    _reject_unknown("noise", noise, ("kind", "c", "s"))
    for key in ("kind", "c", "s"):
        if key not in noise:
            _fail(f"noise.{key}", "required")
    noise_kind = _check_value("noise.kind", noise["kind"], "str")
    if noise_kind != "power_law":
        _fail("noise.kind", f"unsupported noise kind {noise_kind!r}")
    noise_c = float(_check_value("noise.c", noise["c"], "pos_float"))
    noise_s = float(_check_value("noise.s", noise["s"], "float"))

    nl = _take_section(raw, "nonlinearity", required=True)
    _reject_unknown("nonlinearity", nl, ("name",) + _MODEL_PARAM_KEYS)
    if "name" not in nl:
        _fail("nonlinearity.name", "required")
    model_name = _check_value("nonlinearity.name", nl["name"], "str")
    model_params = {}
    for key in _MODEL_PARAM_KEYS:
        if key in nl:
            model_params[key] = float(_check_value(f"nonlinearity.{key}", nl[key], "float"))

    initial = _take_section(raw, "initial", required=False)
    _reject_unknown("initial", initial, ("u_amplitude", "v_amplitude"))
    u_amp = float(_check_value("initial.u_amplitude", initial["u_amplitude"], "float")) \
        if "u_amplitude" in initial else 1.0
    v_amp = float(_check_value("initial.v_amplitude", initial["v_amplitude"], "float")) \
        if "v_amplitude" in initial else 1.0

    experiment = _take_section(raw, "experiment", required=True)
    if "kind" not in experiment:
        _fail("experiment.kind", "required")
    kind = _check_value("experiment.kind", experiment["kind"], "str")
    if kind not in EXPERIMENT_KINDS:
        _fail("experiment.kind",
              f"unknown kind {kind!r}; choose from {', '.join(EXPERIMENT_KINDS)}")
    if expected_kind is not None and kind != expected_kind:
        _fail("experiment.kind",
              f"config declares {kind!r} but the {expected_kind!r} command was invoked")
    keyspec = _EXPERIMENT_KEYS[kind]
    _reject_unknown("experiment", experiment, ("kind",) + tuple(keyspec))
    params = {}
    for key, (required, checker) in keyspec.items():
        if key in experiment:
            params[key] = _check_value(f"experiment.{key}", experiment[key], checker)
        elif required:
            _fail(f"experiment.{key}", f"required for kind {kind!r}")

    if horizon is None and kind not in _HORIZON_FREE_KINDS:
        _fail("scheme.horizon", f"required for kind {kind!r}")

    cfg = ExperimentConfig(
        seed=seed, n_modes=n_modes, tau=tau, eta=eta, horizon=horizon,
        solver=solver, m_points=m_points,
        noise_kind=noise_kind, noise_c=noise_c, noise_s=noise_s,
        model_name=model_name, model_params=model_params,
        initial_u_amplitude=u_amp, initial_v_amplitude=v_amp,
        kind=kind, experiment=params, echo=raw,
    )
    _validate_cross_constraints(cfg)
    return cfg


def _validate_cross_constraints(cfg: ExperimentConfig):
    """Model-vs-damping and noise trace checks that need several sections."""
    try:
        model = cfg.model()
    except ConfigurationError as err:
        raise ConfigurationError(str(err), key_path="nonlinearity") from err

    if cfg.kind != "audit-model":
        # a1 < (sqrt 2 / 2) eta and a2 > -eta, before any run
        try:
            model.check_against_damping(cfg.eta)
        except ConfigurationError as err:
            raise ConfigurationError(str(err), key_path="nonlinearity.name") from err
        if not cfg.noise(4).valid:
            raise ConfigurationError(
                f"power law s = {cfg.noise_s} is not trace-class in the "
                f"Tr(Lambda Q) sense (needs s > 3)", key_path="noise.s")

    if cfg.kind == "invariant-check" and cfg.model_name != "zero":
        raise ConfigurationError(
            "invariant-check compares against the linear (f = 0) oracle; "
            "set nonlinearity.name = 'zero'", key_path="nonlinearity.name")
    if cfg.kind == "slln":
        from .ergodics import make_observable  # validates the name

        try:
            needs_lyapunov = cfg.experiment["observable"].startswith("lyapunov")
            if not needs_lyapunov:
                make_observable(cfg.experiment["observable"])
        except ConfigurationError as err:
            raise ConfigurationError(str(err), key_path="experiment.observable") from err
    if cfg.kind == "simulate":
        for name in cfg.experiment.get("observables", []):
            if name.startswith("lyapunov"):
                continue
            from .ergodics import make_observable

            try:
                make_observable(name)
            except ConfigurationError as err:
                raise ConfigurationError(
                    str(err), key_path="experiment.observables") from err
    if cfg.kind == "converge-time":
        tau_ref = cfg.experiment["tau_ref"]
        for t in cfg.experiment["tau_ladder"]:
            ratio = t / tau_ref
            if t <= tau_ref or abs(ratio - round(ratio)) > 1e-9:
                raise ConfigurationError(
                    f"tau_ref = {tau_ref} must exactly divide every ladder step "
                    f"(offending step {t})", key_path="experiment.tau_ref")
    if cfg.kind == "converge-space":
        if cfg.experiment["n_ref"] < 4 * max(cfg.experiment["n_ladder"]):
            raise ConfigurationError(
                "n_ref must be at least 4x the largest ladder level",
                key_path="experiment.n_ref")


def load_config(path: str, expected_kind: str | None = None) -> ExperimentConfig:
    """Read and validate a TOML config file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as err:
        raise ConfigurationError(f"config file is not valid TOML: {err}")
    return parse_config(raw, expected_kind)
