"""Named Monte-Carlo experiments over seeded trajectories.

Every experiment maps an :class:`ExperimentConfig` to an
:class:`ExperimentResult` holding one record per (grid point, trial), a
per-metric summary, theoretical overlays ("bands") and experiment-level
metrics. Trial ``i`` always draws its noise from
``derive_trial_seed(master_seed, i)``, so paired arms share noise.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BandUndefinedError, ConfigError, DomainError, EmptySummaryError, LabError
from .linalg_core import row_hyperplane_distances, singular_values, spectral_radius
from .ols import diag_error_band, estimate_ols
from .system_builder import (
    BlockSpec,
    SystemSpec,
    build_system,
    check_seed,
    jordan_block_power,
    numeric_bound_peak,
    predicted_peak_iteration,
    stable_diagonal,
    stated_peak_scale,
)
from .trajectory import assemble, derive_trial_seed, simulate, talagrand_variance_class

QUANTILES = (("q05", 0.05), ("q25", 0.25), ("q50", 0.50), ("q75", 0.75), ("q95", 0.95))

# Per kind: system family, sweep axis, and defaults for every field.
_DEFAULTS = {
    "distance_concentration": dict(
        system={"family": "stable_diagonal", "lambda": 0.9}, n=30, trajectory_length=300,
        trials=100, sweep=None, params={"widths": [1, 2, 3]}),
    "sigma_extremes": dict(
        system={"family": "stable_diagonal", "lambda": 0.9}, n=30, trajectory_length=300,
        trials=100, sweep=None, params={}),
    "error_rate": dict(
        system={"family": "stable_diagonal", "lambda": 0.9}, n=10, trajectory_length=None,
        trials=50, sweep={"axis": "N", "values": [100, 200, 400, 800, 1600]},
        params={"zero_noise": False}),
    "explosive_mode": dict(
        system={"family": "explosive_swap", "lambda": 0.9, "explosive_lambda": 1.9}, n=30,
        trajectory_length=90, trials=100, sweep={"axis": "explosive_modes", "values": [0, 1]},
        params={}),
    "block_split": dict(
        system={"family": "jordan_partition", "lambda": 0.9}, n=50, trajectory_length=150,
        trials=50, sweep={"axis": "blocks", "values": [1, 2, 3]}, params={"diagonal_arm": True}),
    "dimension_sweep": dict(
        system={"family": "jordan_pair", "lambda": 0.9, "lambda2": -0.75, "size2": 3}, n=None,
        trajectory_length={"ratio_of_n": 3}, trials=25,
        sweep={"axis": "n", "values": [5, 10, 20, 35, 50, 70]}, params={"compare": [35, 70]}),
    "covariance_blowup": dict(
        system={"family": "jordan_block", "lambda": 0.9}, n=20, trajectory_length=None,
        trials=1, sweep=None, params={"kmax": 600}),
    "gaussian_projection": dict(
        system=None, n=400, trajectory_length=None, trials=10_000, sweep=None,
        params={"k": 100, "delta": 0.3}),
}
KINDS = tuple(_DEFAULTS)

_FAMILY_KEYS = {
    "stable_diagonal": {"lambda"},
    "explosive_swap": {"lambda", "explosive_lambda"},
    "jordan_partition": {"lambda"},
    "jordan_pair": {"lambda", "lambda2", "size2"},
    "jordan_block": {"lambda"},
}
_CONFIG_KEYS = ("kind", "system", "n", "trajectory_length", "trials", "master_seed", "sweep", "params")


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) and math.isfinite(v)


def _positive_int(v, name):
    if not _is_int(v) or v < 1:
        raise ConfigError(name, f"expected a positive integer, got {v!r}")
    return int(v)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    system: dict | None
    n: int | None
    trajectory_length: object
    trials: int
    master_seed: int
    sweep: dict | None
    params: dict

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        """Validate ``data`` strictly and fill every missing field with the kind's default."""
        if not isinstance(data, dict):
            raise ConfigError("config", "expected a JSON object")
        unknown = set(data) - set(_CONFIG_KEYS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config key")
        kind = data.get("kind")
        if kind not in _DEFAULTS:
            raise ConfigError("kind", f"expected one of {', '.join(KINDS)}, got {kind!r}")
        d = copy.deepcopy(_DEFAULTS[kind])
        for key in ("system", "n", "trajectory_length", "trials", "sweep"):
            if key in data:
                d[key] = copy.deepcopy(data[key])
        params = dict(d["params"])
        given = data.get("params", {})
        if not isinstance(given, dict):
            raise ConfigError("params", "expected an object")
        for key, value in given.items():
            if key not in params:
                raise ConfigError(f"params.{key}", f"not a parameter of {kind}")
            params[key] = value
        seed = check_seed(data.get("master_seed", 0), "master_seed")
        system = _check_system(kind, d["system"])
        n = d["n"]
        if isinstance(system, dict) and "blocks" in system:
            spec_n = SystemSpec.from_dict(system).n
            if "n" in data and data["n"] is not None and data["n"] != spec_n:
                raise ConfigError("n", f"{data['n']} disagrees with the system dimension {spec_n}")
            n = spec_n
        sweep = _check_sweep(kind, d["sweep"])
        if kind == "dimension_sweep":
            if n is not None:
                raise ConfigError("n", "n is swept in dimension_sweep; set sweep.values instead")
        else:
            n = _positive_int(n, "n")
        trials = _positive_int(d["trials"], "trials")
        if kind == "covariance_blowup" and trials != 1:
            raise ConfigError("trials", "covariance_blowup is deterministic; trials must be 1")
        length = _check_length(kind, d["trajectory_length"], n)
        cfg = cls(kind, system, n, length, trials, seed, sweep, params)
        _check_params(cfg)
        _check_dimensions(cfg)
        return cfg

    @classmethod
    def from_json(cls, text) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"malformed JSON: {exc.msg}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "system": copy.deepcopy(self.system),
            "n": self.n,
            "trajectory_length": copy.deepcopy(self.trajectory_length),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "sweep": copy.deepcopy(self.sweep),
            "params": copy.deepcopy(self.params),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def axis_name(self) -> str | None:
        if self.kind == "covariance_blowup":
            return "k"
        return self.sweep["axis"] if self.sweep else None

    def grid(self) -> list:
        """Axis values in canonical order (``[None]`` for single-point experiments)."""
        if self.kind == "covariance_blowup":
            return list(range(1, self.params["kmax"] + 1))
        if self.sweep is None:
            return [None]
        values = list(self.sweep["values"])
        if self.kind == "block_split" and self.params["diagonal_arm"] and self.n > values[-1]:
            values.append(self.n)
        return values

    def length_for(self, n) -> int:
        if isinstance(self.trajectory_length, dict):
            return int(round(self.trajectory_length["ratio_of_n"] * n))
        return self.trajectory_length


def _check_system(kind, system):
    if kind == "gaussian_projection":
        if system is not None:
            raise ConfigError("system", "gaussian_projection takes no system")
        return None
    if not isinstance(system, dict):
        raise ConfigError("system", "expected a system spec or a family descriptor object")
    if "family" not in system:
        if kind not in ("distance_concentration", "sigma_extremes", "error_rate"):
            raise ConfigError("system", f"{kind} needs a family descriptor, not a fixed spec")
        spec = SystemSpec.from_dict(system)
        if not spec.diagonalizable:
            raise ConfigError("system.blocks", f"{kind} requires every block to have size 1")
        if max(abs(b.eigenvalue) for b in spec.blocks) >= 1:
            raise ConfigError("lambda", "spectral radius must be below 1")
        return spec.to_dict()
    family = system["family"]
    expected = _DEFAULTS[kind]["system"]["family"]
    if family != expected:
        raise ConfigError("system.family", f"{kind} uses family {expected!r}, got {family!r}")
    keys = set(system) - {"family"}
    extra = keys - _FAMILY_KEYS[family]
    if extra:
        raise ConfigError(f"system.{sorted(extra)[0]}", f"unknown key for family {family}")
    out = dict(_DEFAULTS[kind]["system"])
    out.update(system)
    for key in _FAMILY_KEYS[family]:
        if key == "size2":
            _positive_int(out[key], "system.size2")
        elif not _is_real(out[key]):
            raise ConfigError(key if key == "lambda" else f"system.{key}", f"expected a finite real, got {out[key]!r}")
    lam = out["lambda"]
    if family in ("stable_diagonal", "explosive_swap") and not abs(lam) < 1:
        raise ConfigError("lambda", f"stable eigenvalue must satisfy |lambda| < 1, got {lam}")
    if family == "jordan_block" and not 0 < lam < 1:
        raise ConfigError("lambda", f"covariance_blowup needs 0 < lambda < 1, got {lam}")
    if family == "jordan_partition" and lam == 0:
        raise ConfigError("lambda", "must be non-zero")
    return out


def _check_sweep(kind, sweep):
    default = _DEFAULTS[kind]["sweep"]
    if default is None:
        if sweep is not None:
            raise ConfigError("sweep", f"{kind} has no sweep axis")
        return None
    if not isinstance(sweep, dict) or set(sweep) != {"axis", "values"}:
        raise ConfigError("sweep", "expected {\"axis\": ..., \"values\": [...]}")
    if sweep["axis"] != default["axis"]:
        raise ConfigError("sweep.axis", f"{kind} sweeps {default['axis']!r}, got {sweep['axis']!r}")
    values = sweep["values"]
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values", "expected a non-empty list")
    lowest = 0 if kind == "explosive_mode" else 1
    for v in values:
        if not _is_int(v) or v < lowest:
            raise ConfigError("sweep.values", f"expected integers >= {lowest}, got {v!r}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep.values", "grid values must be strictly increasing")
    return {"axis": sweep["axis"], "values": [int(v) for v in values]}


def _check_length(kind, length, n):
    if kind in ("error_rate", "covariance_blowup", "gaussian_projection"):
        if length is not None:
            raise ConfigError("trajectory_length", f"not used by {kind}")
        return None
    if isinstance(length, dict):
        if set(length) != {"ratio_of_n"} or not _is_real(length["ratio_of_n"]) or length["ratio_of_n"] <= 0:
            raise ConfigError("trajectory_length", "expected a positive integer or {\"ratio_of_n\": r > 0}")
        if n is None:
            return {"ratio_of_n": length["ratio_of_n"]}
        length = int(round(length["ratio_of_n"] * n))
    return _positive_int(length, "trajectory_length")


def _check_params(cfg):
    p = cfg.params
    if cfg.kind == "distance_concentration":
        w = p["widths"]
        if not isinstance(w, list) or not w or not all(_is_real(c) and c > 0 for c in w):
            raise ConfigError("params.widths", "expected a non-empty list of positive numbers")
    elif cfg.kind == "error_rate":
        if not isinstance(p["zero_noise"], bool):
            raise ConfigError("params.zero_noise", "expected true or false")
    elif cfg.kind == "block_split":
        if not isinstance(p["diagonal_arm"], bool):
            raise ConfigError("params.diagonal_arm", "expected true or false")
    elif cfg.kind == "dimension_sweep":
        c = p["compare"]
        if not isinstance(c, list) or len(c) != 2 or any(v not in cfg.sweep["values"] for v in c) or c[0] >= c[1]:
            raise ConfigError("params.compare", "expected two increasing n values taken from the sweep")
    elif cfg.kind == "covariance_blowup":
        _positive_int(p["kmax"], "params.kmax")
    elif cfg.kind == "gaussian_projection":
        k = _positive_int(p["k"], "params.k")
        if k > cfg.n:
            raise ConfigError("params.k", f"subspace dimension {k} exceeds n = {cfg.n}")
        if not _is_real(p["delta"]) or not 0 < p["delta"] < 1:
            raise ConfigError("params.delta", "expected 0 < delta < 1")


def _check_dimensions(cfg):
    # Every kind that forms X- needs at least n columns for distances, sigma_n, or OLS.
    if cfg.kind in ("covariance_blowup", "gaussian_projection"):
        return
    if cfg.kind == "error_rate":
        if cfg.sweep["values"][0] < cfg.n:
            raise ConfigError("sweep.values", f"trajectory length must be >= n = {cfg.n}")
        return
    if cfg.kind == "dimension_sweep":
        if cfg.sweep["values"][0] <= cfg.system["size2"]:
            raise ConfigError("sweep.values", f"n must exceed size2 = {cfg.system['size2']}")
        ns = cfg.sweep["values"]
    else:
        ns = [cfg.n]
    for n in ns:
        if cfg.length_for(n) < n:
            raise ConfigError("trajectory_length", f"must be >= n = {n}")
    if cfg.kind == "block_split" and cfg.sweep["values"][-1] > cfg.n:
        raise ConfigError("sweep.values", f"cannot split n = {cfg.n} into more than n blocks")
    if cfg.kind == "explosive_mode" and cfg.sweep["values"][-1] > cfg.n:
        raise ConfigError("sweep.values", f"at most n = {cfg.n} explosive modes")


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class TrialRecord:
    axis_value: object
    trial: int
    seed: int | None
    metrics: dict
    error: str | None = None

    def to_dict(self) -> dict:
        return {"axis_value": self.axis_value, "trial": self.trial, "seed": self.seed,
                "metrics": dict(self.metrics), "error": self.error}


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    per_trial: list
    summary: list
    bands: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.per_trial if r.error is not None)

    @property
    def status(self) -> str:
        return "ok" if self.failures == 0 else "partial"

    def values(self, metric, axis_value=None) -> np.ndarray:
        """All recorded values of ``metric`` at one grid point, in trial order."""
        return np.array([r.metrics[metric] for r in self.per_trial
                         if r.axis_value == axis_value and metric in r.metrics], dtype=float)

    def median(self, metric, axis_value=None) -> float:
        for row in self.summary:
            if row["axis_value"] == axis_value and row["metric"] == metric:
                return row["q50"]
        raise KeyError((metric, axis_value))

    def to_dict(self) -> dict:
        return _jsonable({
            "experiment": self.config.kind,
            "config": self.config.to_dict(),
            "axis_name": self.config.axis_name,
            "status": self.status,
            "failures": self.failures,
            "per_trial": [r.to_dict() for r in self.per_trial],
            "summary": self.summary,
            "bands": self.bands,
            "metrics": self.metrics,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self, metrics=None) -> str:
        """Long format ``experiment,axis_name,axis_value,trial,metric,value``; floats round-trip exactly."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "axis_name", "axis_value", "trial", "metric", "value"])
        axis = self.config.axis_name or ""
        for r in self.per_trial:
            for name, value in r.metrics.items():
                if metrics is not None and name not in metrics:
                    continue
                w.writerow([self.config.kind, axis, _cell(r.axis_value), r.trial, name, _cell(value)])
        return buf.getvalue()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if _is_int(v):
        return str(int(v))
    return repr(float(v))


def _jsonable(obj):
    # JSON has no inf/nan; those become null.
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if _is_int(obj):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def summarize(values) -> dict:
    """Count, mean, population standard deviation and linear-interpolation quantiles."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise EmptySummaryError("cannot summarize an empty metric")
    v = np.sort(v)
    out = {"count": int(v.size), "mean": float(np.mean(v)), "std": float(np.std(v))}
    for name, q in QUANTILES:
        out[name] = float(np.quantile(v, q, method="linear"))
    return out


def summary_table(cfg: ExperimentConfig, records) -> list:
    """One summary row per (grid point, metric) with at least one value, in canonical order."""
    rows = []
    for axis_value in cfg.grid():
        names = []
        for r in records:
            if r.axis_value == axis_value:
                names.extend(m for m in r.metrics if m not in names)
        for name in names:
            vals = [r.metrics[name] for r in records if r.axis_value == axis_value and name in r.metrics]
            rows.append({"axis_value": axis_value, "metric": name, **summarize(vals)})
    return rows


def check_summary(result: ExperimentResult) -> bool:
    """True when the stored summary equals one recomputed from ``per_trial``."""
    return summary_table(result.config, result.per_trial) == result.summary


# ---------------------------------------------------------------- trial driver


def resolve_threads(threads=None) -> int:
    if threads is None:
        env = os.environ.get("LDS_LAB_THREADS")
        if env is not None:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigError("LDS_LAB_THREADS", f"expected a positive integer, got {env!r}") from None
        else:
            threads = os.cpu_count() or 1
    if not _is_int(threads) or threads < 1:
        raise ConfigError("threads", f"expected a positive integer, got {threads!r}")
    return int(threads)


_TRIAL_ERRORS = (LabError, ArithmeticError, np.linalg.LinAlgError)


def run_trials(cfg: ExperimentConfig, trial_fn, threads=None) -> list:
    """Evaluate ``trial_fn(axis_value, seed)`` on every (grid point, trial) pair.

    Expected numerical failures become records carrying an ``error`` string.
    Records come back ordered by grid point then trial index, independent of
    scheduling.
    """
    tasks = [(a, i, derive_trial_seed(cfg.master_seed, i)) for a in cfg.grid() for i in range(cfg.trials)]

    def one(task):
        a, i, seed = task
        try:
            return TrialRecord(a, i, seed, trial_fn(a, seed))
        except _TRIAL_ERRORS as exc:
            return TrialRecord(a, i, seed, {}, f"{type(exc).__name__}: {exc}")

    workers = min(resolve_threads(threads), len(tasks))
    if workers == 1:
        return [one(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, tasks, chunksize=max(1, len(tasks) // (8 * workers))))


# ---------------------------------------------------------------- systems


def _near_even_partition(n, parts) -> list:
    q, r = divmod(n, parts)
    return [q + 1] * r + [q] * (parts - r)


def system_spec(cfg: ExperimentConfig, axis_value=None) -> SystemSpec:
    """The system of one arm / grid point."""
    s = cfg.system
    if "family" not in s:
        return SystemSpec.from_dict(s)
    lam, fam = s["lambda"], s["family"]
    if fam == "stable_diagonal":
        return stable_diagonal(cfg.n, lam)
    if fam == "explosive_swap":
        k = axis_value
        return SystemSpec(tuple(BlockSpec(s["explosive_lambda"] if i < k else lam, 1) for i in range(cfg.n)))
    if fam == "jordan_partition":
        return SystemSpec(tuple(BlockSpec(lam, m) for m in _near_even_partition(cfg.n, axis_value)))
    if fam == "jordan_pair":
        n = axis_value
        return SystemSpec((BlockSpec(lam, n - s["size2"]), BlockSpec(s["lambda2"], s["size2"])))
    if fam == "jordan_block":
        return SystemSpec((BlockSpec(lam, cfg.n),))
    raise ConfigError("system.family", f"unknown family {fam!r}")


def _ols_error(A, N, seed, **kw) -> float:
    data = assemble(simulate(A, N, seed=seed, **kw))
    return float(np.linalg.norm(A - estimate_ols(data), "fro"))


def _polyfit_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or not np.all(np.isfinite(y)):
        return None
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------- experiments


def exp_distance_concentration(cfg: ExperimentConfig, threads=None) -> ExperimentResult:
    """Squared row-to-hyperplane distances of ``X-`` against ``M +- c sqrt(M)/(1-rho)``, ``M = N-n+1``."""
    A = build_system(system_spec(cfg))
    rho = spectral_radius(A)
    n, N = cfg.n, cfg.trajectory_length
    M = N - n + 1
    widths = cfg.params["widths"]
    half = {c: c * math.sqrt(M) / (1 - rho) for c in widths}

    def trial(_, seed):
        d2 = row_hyperplane_distances(simulate(A, N, seed=seed).states[:, :-1]) ** 2
        out = {f"frac_c{c:g}": float(np.mean(np.abs(d2 - M) <= half[c])) for c in widths}
        out["mean_d2"] = float(np.mean(d2))
        return out

    records = run_trials(cfg, trial, threads)
    ok = [r for r in records if r.error is None]
    metrics = {f"pooled_frac_c{c:g}": float(np.mean([r.metrics[f"frac_c{c:g}"] for r in ok])) if ok else None
               for c in widths}
    metrics["median_mean_d2"] = float(np.median([r.metrics["mean_d2"] for r in ok])) if ok else None
    bands = {"center": float(M), "rho": rho}
    for c in widths:
        bands[f"c{c:g}"] = [M - half[c], M + half[c]]
    return ExperimentResult(cfg, records, summary_table(cfg, records), bands, metrics)


def exp_sigma_extremes(cfg: ExperimentConfig, threads=None) -> ExperimentResult:
    """Extreme singular values of ``X-`` normalised by their predicted scales."""
    A = build_system(system_spec(cfg))
    rho = spectral_radius(A)
    n, N = cfg.n, cfg.trajectory_length
    top_scale = (math.sqrt(N) + math.sqrt(n)) / math.sqrt(1 - rho * rho)
    bottom_scale = math.sqrt(N) - math.sqrt(n - 1)

    def trial(_, seed):
        sv = singular_values(simulate(A, N, seed=seed).states[:, :-1])
        return {"sigma_max": sv.sigma_max, "sigma_min": sv.sigma_min,
                "sigma_max_ratio": sv.sigma_max / top_scale, "sigma_min_ratio": sv.sigma_min / bottom_scale}

    records = run_trials(cfg, trial, threads)
    bands = {"sigma_max_scale": top_scale, "sigma_min_scale": bottom_scale, "rho": rho}
    return ExperimentResult(cfg, records, summary_table(cfg, records), bands, {})


def exp_error_rate(cfg: ExperimentConfig, threads=None) -> ExperimentResult:
    """OLS error against trajectory length, its log-log slope, and the stable-diagonal band."""
    A = build_system(system_spec(cfg))
    rho = spectral_radius(A)
    n = cfg.n
    zero = cfg.params["zero_noise"]

    def trial(N, seed):
        if zero:
            return {"error": _ols_error(A, N, seed, x0=np.ones(n), noises=np.zeros((n, N)))}
        return {"error": _ols_error(A, N, seed)}

    records = run_trials(cfg, trial, threads)
    summary = summary_table(cfg, records)
    result = ExperimentResult(cfg, records, summary)
    Ns = cfg.grid()
    medians = []
    for N in Ns:
        try:
            medians.append(result.median("error", N))
        except KeyError:
            medians.append(math.nan)
    positive = all(m > 0 for m in medians)
    slope = _polyfit_slope(np.log(Ns), np.log(medians)) if positive else None
    bands = []
    for N in Ns:
        try:
            lo, hi = diag_error_band(rho, n, N)
            bands.append({"N": N, "lower": lo, "upper": hi})
        except BandUndefinedError:
            bands.append({"N": N, "lower": None, "upper": None})
    metrics = {"slope": slope, "median_error": medians}
    return ExperimentResult(cfg, records, summary, {"theorem": bands, "rho": rho}, metrics)


def exp_explosive_mode(cfg: ExperimentConfig, threads=None) -> ExperimentResult:
    """Paired OLS errors with 0, 1, ... eigenvalues swapped for the explosive one."""
    N = cfg.trajectory_length
    systems = {k: build_system(system_spec(cfg, k)) for k in cfg.grid()}

    def trial(k, seed):
        return {"error": _ols_error(systems[k], N, seed)}

    records = run_trials(cfg, trial, threads)
    summary = summary_table(cfg, records)
    result = ExperimentResult(cfg, records, summary)
    grid = cfg.grid()
    medians = {}
    for k in grid:
        try:
            medians[k] = result.median("error", k)
        except KeyError:
            medians[k] = None
    base, top = medians[grid[0]], medians[grid[-1]]
    overflow = {str(k): sum(1 for r in records if r.axis_value == k and r.error and "Overflow" in r.error)
                for k in grid}
    metrics = {
        "median_error": {str(k): v for k, v in medians.items()},
        "median_ratio": top / base if base and top is not None else None,
        "overflow_count": overflow,
    }
    bands = {}
    for k in grid:
        op = singular_values(systems[k]).sigma_max
        cls, const = talagrand_variance_class(op, N)
        bands[str(k)] = {"operator_norm": op, "talagrand_class": cls, "talagrand_constant": const}
    return ExperimentResult(cfg, records, summary, bands, metrics)


def exp_block_split(cfg: ExperimentConfig, threads=None) -> ExperimentResult:
    """Paired OLS errors for one eigenvalue split into 1, 2, 3, ... near-even Jordan blocks."""
    N = cfg.trajectory_length
    grid = cfg.grid()
    systems = {b: build_system(system_spec(cfg, b)) for b in grid}

    def trial(b, seed):
        return {"error": _ols_error(systems[b], N, seed)}

    records = run_trials(cfg, trial, threads)
    summary = summary_table(cfg, records)
    result = ExperimentResult(cfg, records, summary)
    medians = []
    for b in grid:
        try:
            medians.append(result.median("error", b))
        except KeyError:
            medians.append(math.nan)
    swept = medians[:len(cfg.sweep["values"])]
    metrics = {
        "partitions": {str(b): _near_even_partition(cfg.n, b) for b in grid},
        "median_error": {str(b): m for b, m in zip(grid, medians)},
        "strictly_decreasing": bool(all(b < a for a, b in zip(swept, swept[1:]))),
    }
    if len(grid) > len(swept):
        metrics["diagonal_smallest"] = bool(medians[-1] < min(swept))
    return ExperimentResult(cfg, records, summary, {}, metrics)


def exp_dimension_sweep(cfg: ExperimentConfig, threads=None) -> ExperimentResult:
    """Extreme singular values of ``X-`` and of the driving noise ``E`` as the dimension grows."""
    systems = {n: build_system(system_spec(cfg, n)) for n in cfg.grid()}

    def trial(n, seed):
        traj = simulate(systems[n], cfg.length_for(n), seed=seed)
        sx = singular_values(traj.states[:, :-1])
        se = singular_values(traj.noises)
        return {
            "sigma_min": sx.sigma_min, "sigma_max": sx.sigma_max, "log_sigma_max": math.log(sx.sigma_max),
            "baseline_sigma_min": se.sigma_min, "baseline_sigma_max": se.sigma_max,
            "baseline_log_sigma_max": math.log(se.sigma_max),
        }

    records = run_trials(cfg, trial, threads)
    summary = summary_table(cfg, records)
    result = ExperimentResult(cfg, records, summary)
    ns = cfg.grid()

    def med(metric, n):
        try:
            return result.median(metric, n)
        except KeyError:
            return math.nan

    lo, hi = cfg.params["compare"]
    rise = med("log_sigma_max", hi) - med("log_sigma_max", lo)
    base_rise = med("baseline_log_sigma_max", hi) - med("baseline_log_sigma_max", lo)
    metrics = {
        "log_sigma_max_increase": rise,
        "baseline_log_sigma_max_increase": base_rise,
        "increase_factor": rise / base_rise if base_rise > 0 else None,
        "log_sigma_max_slope": _polyfit_slope(ns, [med("log_sigma_max", n) for n in ns]),
        "baseline_log_sigma_max_slope": _polyfit_slope(ns, [med("baseline_log_sigma_max", n) for n in ns]),
        "sigma_min_above_baseline": {str(n): bool(med("sigma_min", n) >= med("baseline_sigma_min", n))
                                     for n in ns},
        "completed_fraction": {str(n): sum(1 for r in records if r.axis_value == n and r.error is None)
                               / cfg.trials for n in ns},
    }
    return ExperimentResult(cfg, records, summary, {}, metrics)


def exp_covariance_blowup(cfg: ExperimentConfig, threads=None) -> ExperimentResult:
    """``g(k) = sigma_1(J^k)^2`` for one Jordan block; deterministic, the grid stops at overflow."""
    lam, m = cfg.system["lambda"], cfg.n
    records = []
    for k in cfg.grid():
        try:
            g = singular_values(jordan_block_power(lam, m, k)).sigma_max ** 2
        except _TRIAL_ERRORS as exc:
            records.append(TrialRecord(k, 0, None, {}, f"{type(exc).__name__}: {exc}"))
            break
        if not math.isfinite(g):
            records.append(TrialRecord(k, 0, None, {}, "OverflowError: g(k) is not finite"))
            break
        records.append(TrialRecord(k, 0, None, {"g": g}))
    ok = [r for r in records if r.error is None]
    gs = np.array([r.metrics["g"] for r in ok])
    i = int(np.argmax(gs))
    k_star = ok[i].axis_value
    metrics = {
        "argmax_k": k_star,
        "g_max": float(gs[i]),
        "g_first": float(gs[0]),
        "interior": bool(0 < i < len(gs) - 1),
        "truncated_at": records[-1].axis_value if records[-1].error else None,
    }
    bands = {}
    if m >= 2:
        try:
            numeric = numeric_bound_peak(lam, m, cfg.params["kmax"])
        except DomainError:
            numeric = None  # the bound's peak lies beyond the grid
        bands = {
            "predicted_peak_iteration": predicted_peak_iteration(lam, m),
            "numeric_bound_peak": numeric,
            "stated_peak_scale": stated_peak_scale(lam, m),
        }
    return ExperimentResult(cfg, records, summary_table(cfg, records), bands, metrics)


def exp_gaussian_projection(cfg: ExperimentConfig, threads=None) -> ExperimentResult:
    """``r = ||x_S|| / ||x||`` for Gaussian ``x`` and ``S`` the first ``k`` coordinates."""
    n, k, delta = cfg.n, cfg.params["k"], cfg.params["delta"]

    def trial(_, seed):
        x = np.random.default_rng(seed).standard_normal(n)
        return {"r": float(np.linalg.norm(x[:k]) / np.linalg.norm(x))}

    records = run_trials(cfg, trial, threads)
    r = np.array([rec.metrics["r"] for rec in records])
    centre = math.sqrt(k / n)
    metrics = {
        "upper_tail": float(np.mean(r >= centre / (1 - delta))),
        "lower_tail": float(np.mean(r <= (1 - delta) * centre)),
        "mean_r": float(np.mean(r)),
    }
    bands = {"tail_bound": math.exp(-delta ** 2 * k / 4) + math.exp(-delta ** 2 * n / 4),
             "sqrt_k_over_n": centre}
    return ExperimentResult(cfg, records, summary_table(cfg, records), bands, metrics)


EXPERIMENTS = {
    "distance_concentration": exp_distance_concentration,
    "sigma_extremes": exp_sigma_extremes,
    "error_rate": exp_error_rate,
    "explosive_mode": exp_explosive_mode,
    "block_split": exp_block_split,
    "dimension_sweep": exp_dimension_sweep,
    "covariance_blowup": exp_covariance_blowup,
    "gaussian_projection": exp_gaussian_projection,
}


def run_experiment(cfg: ExperimentConfig, threads=None) -> ExperimentResult:
    return EXPERIMENTS[cfg.kind](cfg, threads)
