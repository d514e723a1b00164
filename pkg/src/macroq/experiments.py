"""Batch experiment drivers: each driver resolves a parameter dictionary
against declared defaults, runs one named study, and returns a rectangular
result table plus a scalar summary row (the unit a sweep collects).

Tables serialize to CSV with a '#'-prefixed metadata header carrying the
fully resolved configuration; floats use 17 significant digits so a rerun
with the same config and seed is byte-identical.  Wall time lives only in
the JSON sidecar, never in the table.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import __version__
from .ensembles import (
    GibbsSpec,
    aep_check,
    equipartition_projection,
    fit_decay_rate,
    generating_function,
    gibbs_state,
    pressure,
    psi_prime_zero,
    solve_lambda,
    von_neumann_entropy,
    window_mass,
)
from .kac import (
    KacConfig,
    counterexample_run,
    macro_trajectory,
    micro_vs_macro_validation,
)
from .macrostates import (
    WindowSpec,
    delta_schedule,
    h_from_rank,
    magnetization_set,
    window_rank,
)
from .operators import PAULI, DensityMatrix, average_observable, eigh

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultTable",
    "EXPERIMENT_KINDS",
    "load_config",
    "run_experiment",
    "sweep_values",
    "write_result",
]


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ResultTable:
    columns: tuple
    rows: tuple
    metadata: dict

    def column(self, name):
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self.rows])

    def to_csv(self, path):
        lines = []
        for key in sorted(self.metadata):
            lines.append(f"# {key} = {self.metadata[key]}")
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(_format_number(v) for v in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _format_number(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict
    seed: int = 0
    output: str | None = None
    workers: int = 1

    def with_param(self, name, value):
        params = dict(self.params)
        params[name] = value
        return ExperimentConfig(self.kind, params, self.seed, self.output, self.workers)


def _require(condition, field_name, message):
    if not condition:
        raise ConfigError(f"{field_name}: {message}")


def _as_float_list(value, field_name, length=None):
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{field_name}: expected a list of numbers, got {value!r}") from None
    if length is not None and len(out) != length:
        raise ConfigError(f"{field_name}: expected {length} entries, got {len(out)}")
    return out


def _as_int_list(value, field_name):
    out = _as_float_list(value, field_name)
    ints = [int(round(v)) for v in out]
    if any(abs(i - v) > 1e-9 for i, v in zip(ints, out)):
        raise ConfigError(f"{field_name}: expected integers, got {value!r}")
    return ints


# --- individual drivers ----------------------------------------------------


def _resolve(params, defaults, kind):
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError(
            f"params: unknown key(s) {sorted(unknown)} for experiment {kind!r}; "
            f"known keys: {sorted(defaults)}"
        )
    merged = dict(defaults)
    merged.update(params)
    return merged


_HFUNCTION_DEFAULTS = {
    "m_vec": [0.0, 0.0, 0.5],
    "n_values": [6, 8, 10, 12],
    "delta_c": 1.0,
    "delta_gamma": 0.4,
}


def experiment_hfunction(params, seed):
    """Window-projection entropy of a magnetization macrostate across sizes.

    For each size the spectral window of the unit-direction magnetization,
    centered at |m| with half-width delta_n, is counted and (1/n) log rank
    reported.
    """
    p = _resolve(params, _HFUNCTION_DEFAULTS, "hfunction")
    m_vec = np.array(_as_float_list(p["m_vec"], "params.m_vec", 3))
    m = float(np.linalg.norm(m_vec))
    _require(0.0 < m <= 1.0, "params.m_vec", f"need 0 < |m| <= 1, got |m| = {m:.6g}")
    ns = _as_int_list(p["n_values"], "params.n_values")
    _require(all(n >= 1 for n in ns), "params.n_values", "sizes must be positive")
    direction = m_vec / m
    rows = []
    for n in ns:
        total = None
        for alpha in range(3):
            if direction[alpha] == 0.0:
                continue
            term = direction[alpha] * average_observable(PAULI[alpha + 1], n)
            total = term if total is None else total + term
        delta = delta_schedule(n, c=float(p["delta_c"]), gamma=float(p["delta_gamma"]))
        rank = window_rank(total, WindowSpec(center=m, half_width=delta))
        rows.append([n, delta, rank, h_from_rank(rank, n)])
    table = ResultTable(("n", "delta", "rank", "h"), tuple(map(tuple, rows)), {})
    last = rows[-1]
    summary = {"n": last[0], "delta": last[1], "rank": last[2], "h": last[3]}
    return table, summary, {}


_GIBBS_DEFAULTS = {
    "n": 8,
    "lambda": None,
    "target": None,
}


def experiment_gibbs(params, seed):
    """One Gibbs state over the three magnetization averages: either from a
    given lambda vector or by solving lambda(x) for a target mean vector."""
    p = _resolve(params, _GIBBS_DEFAULTS, "gibbs")
    n = int(p["n"])
    _require(n >= 1, "params.n", "size must be positive")
    xs = magnetization_set(n)
    if p["target"] is not None:
        target = np.array(_as_float_list(p["target"], "params.target", 3))
        _require(np.linalg.norm(target) < 1.0, "params.target", "|target| must be < 1")
        lam = solve_lambda(target, xs, n)
    elif p["lambda"] is not None:
        lam = np.array(_as_float_list(p["lambda"], "params.lambda", 3))
    else:
        raise ConfigError("params: gibbs needs either 'lambda' or 'target'")
    spec = GibbsSpec(tuple(lam), xs, n)
    dm = gibbs_state(spec)
    means = [float(dm.expectation(op).real) for op in xs.operators]
    press = pressure(spec)
    entropy_rate = von_neumann_entropy(dm) / n
    legendre = press - float(np.dot(lam, means))
    row = [n, *lam, *means, press, entropy_rate, legendre]
    columns = (
        "n",
        "lambda_1",
        "lambda_2",
        "lambda_3",
        "mean_1",
        "mean_2",
        "mean_3",
        "pressure",
        "entropy_per_site",
        "legendre",
    )
    summary = dict(zip(columns, row))
    return ResultTable(columns, (tuple(row),), {}), summary, {}


_EQUIVALENCE_DEFAULTS = {
    "lambda": [0.0, 0.0, 0.5493061443340549],
    "n_values": [6, 8, 10, 12],
    "tail_delta": 0.2,
    "tail_center": None,
    "aep_delta": 0.1,
    "equip_c": 0.6,
    "equip_gamma": 0.4,
}


def experiment_equivalence(params, seed):
    """Per-size equivalence diagnostics of a product-Gibbs family: spectral
    tail mass of the magnetization along lambda, equipartition window mass,
    and the typical-subspace entropy gap; the tail decay rate is fitted
    across sizes when three or more are given."""
    p = _resolve(params, _EQUIVALENCE_DEFAULTS, "equivalence")
    lam = np.array(_as_float_list(p["lambda"], "params.lambda", 3))
    ns = _as_int_list(p["n_values"], "params.n_values")
    _require(all(n >= 1 for n in ns), "params.n_values", "sizes must be positive")
    tail_delta = float(p["tail_delta"])
    aep_delta = float(p["aep_delta"])
    _require(tail_delta > 0, "params.tail_delta", "must be positive")
    _require(aep_delta > 0, "params.aep_delta", "must be positive")
    lam_norm = np.linalg.norm(lam)
    direction = lam / lam_norm if lam_norm > 0 else np.array([0.0, 0.0, 1.0])
    rows = []
    tails = []
    for n in ns:
        xs = magnetization_set(n)
        dm = gibbs_state(GibbsSpec(tuple(lam), xs, n))
        total = None
        for alpha in range(3):
            if direction[alpha] == 0.0:
                continue
            term = direction[alpha] * average_observable(PAULI[alpha + 1], n)
            total = term if total is None else total + term
        sd = eigh(total)
        center = p["tail_center"]
        if center is None:
            center = float(dm.expectation(total).real)
        tail = 1.0 - window_mass(dm, sd, WindowSpec(float(center), tail_delta))
        tails.append(max(tail, float(np.finfo(float).tiny)))
        aep = aep_check(dm, n, aep_delta)
        equip = equipartition_projection(
            dm,
            n,
            delta_schedule(n, c=float(p["equip_c"]), gamma=float(p["equip_gamma"])),
            return_projection=False,
        )
        rows.append(
            [n, tails[-1], aep.mass, aep.log_mass_per_site, equip.trace, equip.gap]
        )
    meta = {}
    if len(ns) >= 3:
        rate, residual = fit_decay_rate(ns, tails)
        meta = {"fitted_rate": rate, "fit_residual": residual}
    columns = ("n", "tail_mass", "aep_mass", "aep_log_per_site", "equip_trace", "equip_gap")
    table = ResultTable(columns, tuple(map(tuple, rows)), {})
    last = rows[-1]
    summary = dict(zip(columns, last))
    summary["rate"] = meta.get("fitted_rate", float("nan"))
    return table, summary, meta


_GENFUNC_DEFAULTS = {
    "n_values": [4, 8, 12],
    "t_values": [0.1, 0.5, 1.0],
    "lambda": None,
    "axis": 3,
}


def experiment_genfunc(params, seed):
    """Finite-size generating function of one magnetization component under
    the trace state (default) or a Gibbs state, with its derivative at 0."""
    p = _resolve(params, _GENFUNC_DEFAULTS, "genfunc")
    ns = _as_int_list(p["n_values"], "params.n_values")
    ts = _as_float_list(p["t_values"], "params.t_values")
    axis = int(p["axis"])
    _require(axis in (1, 2, 3), "params.axis", "axis must be 1, 2 or 3")
    rows = []
    prime = float("nan")
    for n in ns:
        x_op = average_observable(PAULI[axis], n)
        sd = eigh(x_op)
        if p["lambda"] is None:
            state = DensityMatrix.maximally_mixed(2 ** n)
        else:
            lam = _as_float_list(p["lambda"], "params.lambda", 3)
            state = gibbs_state(GibbsSpec(tuple(lam), magnetization_set(n), n))
        prime = psi_prime_zero(state, sd, n)
        for t in ts:
            rows.append([n, t, generating_function(state, sd, t, n), prime])
    columns = ("n", "t", "psi", "psi_prime0")
    table = ResultTable(columns, tuple(map(tuple, rows)), {})
    summary = {"n": ns[-1], "psi_prime0": prime}
    return table, summary, {}


_KAC_RUN_DEFAULTS = {
    "mu": 0.0,
    "axis": [1.0, 0.0, 0.0],
    "theta": 0.3,
    "m0": [0.0, 0.0, 0.9],
    "horizon": 50,
}


def _kac_config(p, seed, n_sites=1, **overrides):
    try:
        return KacConfig(
            n_sites=n_sites,
            mu=float(p["mu"]),
            axis=tuple(_as_float_list(p["axis"], "params.axis", 3)),
            theta=float(p["theta"]),
            initial_bloch=tuple(_as_float_list(p["m0"], "params.m0", 3)),
            seed=seed,
            horizon=int(p["horizon"]),
            **overrides,
        )
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc


def experiment_kac_run(params, seed):
    """Macroscopic Kac trajectory with its entropy column; the semigroup
    structure makes the entropy nondecreasing."""
    p = _resolve(params, _KAC_RUN_DEFAULTS, "kac-run")
    config = _kac_config(p, seed)
    traj = macro_trajectory(config.initial_state, config.mu, config.unitary, config.horizon)
    rows = [
        [int(t), *traj.bloch[t], traj.h[t]] for t in range(config.horizon + 1)
    ]
    columns = ("t", "m1", "m2", "m3", "H")
    table = ResultTable(columns, tuple(map(tuple, rows)), {})
    increments = np.diff(traj.h)
    summary = {
        "h_final": float(traj.h[-1]),
        "monotone": float(bool(increments.size == 0 or increments.min() >= -1e-12)),
    }
    return table, summary, {}


_KAC_COUNTEREXAMPLE_DEFAULTS = {
    "mu": 0.0,
    "axis": [0.0, 0.0, 1.0],
    "theta": 1.0,
    "m0": [0.9, 0.0, 0.0],
    "horizon": 20,
}


def experiment_kac_counterexample(params, seed):
    """Reduced-observable Kac run keeping only (mu, m_1); reports whether
    the reduced entropy dips while the full entropy stays monotone."""
    p = _resolve(params, _KAC_COUNTEREXAMPLE_DEFAULTS, "kac-counterexample")
    config = _kac_config(p, seed)
    report = counterexample_run(config)
    rows = [
        [int(t), float(report.m1[t]), float(report.reduced_h[t]), float(report.full_h[t])]
        for t in range(config.horizon + 1)
    ]
    columns = ("t", "m1", "h_reduced", "h_full")
    table = ResultTable(columns, tuple(map(tuple, rows)), {})
    drops = np.diff(report.reduced_h)
    summary = {
        "violation_found": float(report.violation_found),
        # -1 is the explicit 'no violation' sentinel
        "first_violation_t": float(report.violation_times[0]) if report.violation_times else -1.0,
        "min_increment": float(drops.min()) if drops.size else 0.0,
    }
    return table, summary, {}


_KAC_VALIDATE_DEFAULTS = {
    "n_sites": 1000,
    "mu": 0.0,
    "axis": [1.0, 0.0, 0.0],
    "theta": 0.3,
    "m0": [0.0, 0.0, 1.0],
    "horizon": 50,
    "n_seeds": 32,
}


def experiment_kac_validate(params, seed):
    """Micro-versus-macro residual of the Kac ring over a seed ensemble."""
    p = _resolve(params, _KAC_VALIDATE_DEFAULTS, "kac-validate")
    n_sites = int(p["n_sites"])
    _require(n_sites >= 1, "params.n_sites", "must be positive")
    n_seeds = int(p["n_seeds"])
    _require(n_seeds >= 1, "params.n_seeds", "must be positive")
    config = _kac_config(
        {k: p[k] for k in ("mu", "axis", "theta", "m0", "horizon")}, seed, n_sites=n_sites
    )
    report = micro_vs_macro_validation(config, n_seeds=n_seeds)
    rows = [
        [
            int(t),
            float(report.deviations[t]),
            *report.micro_mean[t],
            *report.macro[t],
        ]
        for t in range(config.horizon + 1)
    ]
    columns = (
        "t",
        "deviation",
        "micro_m1",
        "micro_m2",
        "micro_m3",
        "macro_m1",
        "macro_m2",
        "macro_m3",
    )
    table = ResultTable(columns, tuple(map(tuple, rows)), {})
    summary = {"max_deviation": report.max_deviation, "c_fitted": report.c_fitted}
    return table, summary, {}


EXPERIMENT_KINDS = {
    "hfunction": experiment_hfunction,
    "gibbs": experiment_gibbs,
    "equivalence": experiment_equivalence,
    "genfunc": experiment_genfunc,
    "kac-run": experiment_kac_run,
    "kac-counterexample": experiment_kac_counterexample,
    "kac-validate": experiment_kac_validate,
}

# Parameters that hold a list of sizes sweep under the scalar alias "n".
_N_LIST_ALIAS = {"hfunction": "n_values", "equivalence": "n_values", "genfunc": "n_values"}


def load_config(path):
    """Parse and validate a JSON experiment configuration."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected an object")
    kind = raw.get("experiment")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"experiment: expected one of {sorted(EXPERIMENT_KINDS)}, got {kind!r}"
        )
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params: expected an object")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed: expected an integer, got {seed!r}")
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError(f"workers: expected a positive integer, got {workers!r}")
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError(f"output: expected a path string, got {output!r}")
    known = {"experiment", "params", "seed", "workers", "output"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"top level: unknown key(s) {sorted(unknown)}")
    return ExperimentConfig(kind=kind, params=params, seed=seed, output=output, workers=workers)


def _resolved_params(config):
    defaults = {
        "hfunction": _HFUNCTION_DEFAULTS,
        "gibbs": _GIBBS_DEFAULTS,
        "equivalence": _EQUIVALENCE_DEFAULTS,
        "genfunc": _GENFUNC_DEFAULTS,
        "kac-run": _KAC_RUN_DEFAULTS,
        "kac-counterexample": _KAC_COUNTEREXAMPLE_DEFAULTS,
        "kac-validate": _KAC_VALIDATE_DEFAULTS,
    }[config.kind]
    return _resolve(config.params, defaults, config.kind)


def _metadata(config, extra=None):
    meta = {
        "experiment": config.kind,
        "seed": config.seed,
        "toolkit_version": __version__,
    }
    resolved = _resolved_params(config)
    for key in sorted(resolved):
        meta[f"params.{key}"] = json.dumps(resolved[key])
    if extra:
        meta.update(extra)
    return meta


def run_experiment(config):
    """Execute one experiment; returns (ResultTable, summary dict)."""
    driver = EXPERIMENT_KINDS[config.kind]
    table, summary, extra = driver(config.params, config.seed)
    return (
        ResultTable(table.columns, table.rows, _metadata(config, extra)),
        summary,
    )


def set_sweep_value(config, param, value):
    """A copy of the config with one numeric parameter replaced.

    The alias 'n' sweeps the size list of size-sweep experiments one size
    at a time; 'seed' is also sweepable.
    """
    if param == "seed":
        return ExperimentConfig(config.kind, config.params, int(value), config.output, config.workers)
    alias = _N_LIST_ALIAS.get(config.kind)
    if param == "n" and alias is not None:
        return config.with_param(alias, [int(value)])
    resolved = _resolved_params(config)
    if param not in resolved:
        raise ConfigError(
            f"sweep parameter {param!r} is not a parameter of {config.kind!r}; "
            f"known: {sorted(resolved)}"
        )
    current = resolved[param]
    if isinstance(current, (list, tuple)):
        raise ConfigError(f"sweep parameter {param!r} is a list; sweep a scalar field")
    if isinstance(current, int) and not isinstance(current, bool):
        value = int(value)
    return config.with_param(param, value)


def _sweep_point(args):
    config, param, value = args
    point = set_sweep_value(config, param, value)
    _, summary = run_experiment(point)
    return value, summary


def sweep_values(config, param, values, workers=None):
    """Run the experiment once per parameter value; one summary row each.

    Rows are ordered by the given values regardless of execution order, and
    every point derives its randomness from the config seed alone, so the
    result is reproducible under any worker count.
    """
    values = list(values)
    if not values:
        return ResultTable((param,), (), _metadata(config, {"sweep_param": param}))
    workers = config.workers if workers is None else workers
    jobs = [(config, param, v) for v in values]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(job) for job in jobs]
    summary_keys = list(results[0][1].keys())
    columns = (param, *summary_keys)
    rows = tuple(
        (value, *[summary[k] for k in summary_keys]) for value, summary in results
    )
    meta = _metadata(config, {"sweep_param": param, "sweep_values": json.dumps(values)})
    return ResultTable(columns, rows, meta)


def write_result(table, output_path, config, wall_time_s):
    """CSV table plus a JSON sidecar with the config echo and timing."""
    table.to_csv(output_path)
    sidecar = {
        "experiment": config.kind,
        "seed": config.seed,
        "workers": config.workers,
        "params": _resolved_params(config),
        "toolkit_version": __version__,
        "wall_time_s": wall_time_s,
    }
    with open(str(output_path) + ".meta.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
