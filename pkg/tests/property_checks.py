"""Randomized invariant checks shared by the module tests and the
acceptance harness (which re-runs them at >= 1000 cases each).

Each checker draws its own cases from a seeded generator and returns the
number of violations, so callers control the case count and assert zero.
"""

import io

import numpy as np

from stochwave.ergodics import wasserstein1_1d
from stochwave.integrator import linear_propagator_apply
from stochwave.reporting import ResultRecord, _write_csv, _write_jsonl, parse_results
from stochwave.spectral import (
    PhaseState,
    SpectralField,
    eigenvalues,
    phase_norm,
    project,
    sobolev_norm,
)


def random_field(rng, n_modes, decay=1.5, scale=1.0) -> SpectralField:
    k = np.arange(1, n_modes + 1, dtype=float)
    return SpectralField(scale * rng.standard_normal(n_modes) * k**-decay)


def random_state(rng, n_modes, scale=1.0) -> PhaseState:
    return PhaseState(random_field(rng, n_modes, 2.0, scale),
                      random_field(rng, n_modes, 1.5, scale))


def check_parseval(n_cases, seed=0) -> int:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        f = random_field(rng, rng.integers(1, 48))
        direct = np.sqrt(np.sum(f.coeffs**2))
        if abs(sobolev_norm(f, 0.0) - direct) > 1e-12 * max(1.0, direct):
            bad += 1
    return bad


def check_norm_scaling(n_cases, seed=1) -> int:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        f = random_field(rng, rng.integers(1, 48))
        alpha = rng.uniform(-5.0, 5.0)
        r = rng.uniform(-2.0, 3.0)
        lhs = sobolev_norm(alpha * f, r)
        rhs = abs(alpha) * sobolev_norm(f, r)
        if abs(lhs - rhs) > 1e-11 * max(1.0, rhs):
            bad += 1
    return bad


def check_projection_idempotent(n_cases, seed=2) -> int:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        f = random_field(rng, rng.integers(2, 64))
        n = int(rng.integers(1, f.n_modes + 4))
        once = project(f, n)
        twice = project(once, n)
        if not np.array_equal(once.coeffs, twice.coeffs):
            bad += 1
    return bad


def check_projection_error_bound(n_cases, seed=3) -> int:
    """|(P_N - I) psi| <= lambda_N^(-gamma/2) |psi|_{H^gamma}, gamma in {0,1,2}."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        n = int(rng.integers(2, 24))
        f = random_field(rng, 2 * n, decay=rng.uniform(0.5, 2.5))
        tail = f - project(f, n)
        lam_n = eigenvalues(n)[-1]
        for gamma in (0.0, 1.0, 2.0):
            lhs = sobolev_norm(tail, 0.0)
            rhs = lam_n ** (-gamma / 2.0) * sobolev_norm(f, gamma)
            if lhs > rhs * (1.0 + 1e-12):
                bad += 1
    return bad


def check_grid_roundtrip(n_cases, seed=4) -> int:
    from stochwave.spectral import from_grid, to_grid

    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        n = int(rng.integers(1, 40))
        m = int(rng.integers(n, 2 * n + 16))
        f = random_field(rng, n, decay=0.5)
        back = from_grid(to_grid(f, m), n)
        scale = max(1.0, float(np.max(np.abs(f.coeffs))))
        if np.max(np.abs(back.coeffs - f.coeffs)) > 1e-12 * scale:
            bad += 1
    return bad


def check_h2_sandwich(n_cases, seed=5) -> int:
    """(2-eps)/2 E <= H2_eps <= (2+eps+eps*eta)/2 E on random states."""
    from stochwave.ergodics import LyapunovParams, lyapunov_h2

    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        eta = rng.uniform(0.05, 4.0)
        eps = rng.uniform(1e-3, 1.999)
        params = LyapunovParams(eps, eta)
        x = random_state(rng, int(rng.integers(1, 32)), scale=rng.uniform(0.1, 10))
        energy = sobolev_norm(x.u, 2.0) ** 2 + sobolev_norm(x.v, 1.0) ** 2
        h = lyapunov_h2(x, params)
        lo = 0.5 * (2.0 - eps) * energy
        hi = 0.5 * (2.0 + eps + eps * eta) * energy
        if h < lo * (1.0 - 1e-12) or h > hi * (1.0 + 1e-12):
            bad += 1
    return bad


def check_h1_sandwich(n_cases, seed=6) -> int:
    from stochwave.ergodics import LyapunovParams, lyapunov_h1

    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        eta = rng.uniform(0.05, 4.0)
        eps = rng.uniform(1e-3, 1.999)
        params = LyapunovParams(eps, eta)
        x = random_state(rng, int(rng.integers(1, 32)), scale=rng.uniform(0.1, 10))
        energy = sobolev_norm(x.u, 1.0) ** 2 + sobolev_norm(x.v, 0.0) ** 2
        h = lyapunov_h1(x, params)
        lo = 0.5 * (2.0 - eps) * energy
        hi = 0.5 * (2.0 + eps + eps * eta) * energy
        if h < lo * (1.0 - 1e-12) or h > hi * (1.0 + 1e-12):
            bad += 1
    return bad


def check_unitary_group_energy(n_cases, seed=7) -> int:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        x = random_state(rng, int(rng.integers(1, 32)), scale=rng.uniform(0.1, 5))
        t = rng.uniform(-20.0, 20.0)
        before = phase_norm(x, 1.0)
        after = phase_norm(linear_propagator_apply(x, t), 1.0)
        if abs(after - before) > 1e-11 * max(1.0, before):
            bad += 1
    return bad


def check_wasserstein_axioms(n_cases, seed=8) -> int:
    """Non-negativity, symmetry, identity, triangle inequality."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        n = int(rng.integers(1, 40))
        a = rng.standard_normal(n) * rng.uniform(0.1, 3.0)
        b = rng.standard_normal(n) + rng.uniform(-2.0, 2.0)
        c = rng.standard_normal(n) * rng.uniform(0.5, 2.0)
        dab = wasserstein1_1d(a, b)
        dba = wasserstein1_1d(b, a)
        dac = wasserstein1_1d(a, c)
        dcb = wasserstein1_1d(c, b)
        ok = (
            dab >= 0.0
            and abs(dab - dba) <= 1e-12 * max(1.0, dab)
            and wasserstein1_1d(a, a) <= 1e-12
            and dab <= dac + dcb + 1e-10 * max(1.0, dab)
        )
        if not ok:
            bad += 1
    return bad


def _random_record(rng) -> ResultRecord:
    n_rows = int(rng.integers(0, 6))
    rows = []
    for i in range(n_rows):
        special = rng.random()
        value = (float("nan") if special < 0.1 else
                 float("inf") if special < 0.15 else
                 float(rng.standard_normal() * 10.0**rng.integers(-12, 12)))
        rows.append({
            "level": float(2.0 ** -rng.integers(0, 14)),
            "error": value,
            "n_samples": int(rng.integers(1, 1000)),
            "label": f"case-{i}",
            "flag": bool(rng.random() < 0.5),
        })
    return ResultRecord(
        kind="converge-time",
        config={"seed": int(rng.integers(0, 2**31)), "x": float(rng.standard_normal())},
        summary={"slope": float(rng.standard_normal()), "passed": bool(rng.random() < 0.5)},
        rows=rows,
        seed=int(rng.integers(0, 2**31)),
    )


def _records_equal(a: ResultRecord, b: ResultRecord) -> bool:
    def values_equal(x, y):
        if isinstance(x, float) and isinstance(y, float):
            return (np.isnan(x) and np.isnan(y)) or x == y
        return x == y and type(x) is type(y)

    if (a.kind, a.seed, a.version, a.columns, a.column_types, a.config_digest) != \
            (b.kind, b.seed, b.version, b.columns, b.column_types, b.config_digest):
        return False
    if a.config != b.config or len(a.rows) != len(b.rows):
        return False
    for key in set(a.summary) | set(b.summary):
        if key not in a.summary or key not in b.summary:
            return False
        if not values_equal(a.summary[key], b.summary[key]):
            return False
    for ra, rb in zip(a.rows, b.rows):
        if set(ra) != set(rb):
            return False
        for key in ra:
            if not values_equal(ra[key], rb[key]):
                return False
    return True


def check_serialization_roundtrip(n_cases, seed=9, tmp_dir=None) -> int:
    """parse(write(record)) == record field-for-field, both formats."""
    import os
    import tempfile

    rng = np.random.default_rng(seed)
    bad = 0
    own_dir = tmp_dir is None
    tmp_dir = tempfile.mkdtemp() if own_dir else str(tmp_dir)
    path = os.path.join(tmp_dir, "roundtrip.tmp")
    try:
        for i in range(n_cases):
            record = _random_record(rng)
            for writer in (_write_csv, _write_jsonl):
                buf = io.StringIO()
                writer(record, buf)
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(buf.getvalue())
                if not _records_equal(record, parse_results(path)):
                    bad += 1
    finally:
        if own_dir:
            import shutil

            shutil.rmtree(tmp_dir, ignore_errors=True)
    return bad
