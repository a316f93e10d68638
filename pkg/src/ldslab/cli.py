"""``ldslab`` command line: run experiments, the figure suite, and identity checks.

Exit status: 0 success, 1 assertion or containment failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContainmentError, LabError
from .lab import KINDS, ExperimentConfig, run_experiment
from .linalg_core import row_hyperplane_distances
from .ols import ols_error_identity
from .system_builder import SystemSpec, jordan_block_power, stable_diagonal, build_system
from .trajectory import assemble, derive_trial_seed, gaussian_matrix, simulate

# Figure outputs: file stem, experiment kind, metrics kept (None keeps all).
FIGURES = (
    ("fig1", "explosive_mode", None),
    ("fig2a", "block_split", None),
    ("fig2b", "dimension_sweep", ("sigma_min", "baseline_sigma_min")),
    ("fig2c", "dimension_sweep", ("sigma_max", "log_sigma_max", "baseline_sigma_max", "baseline_log_sigma_max")),
    ("fig2d", "covariance_blowup", None),
)
IDENTITY_TOL = 1e-8


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def _load_json(path, field="config"):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(field, f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(field, f"malformed JSON in {path}: {exc.msg}") from None


def parse_config(kind=None, path=None, seed=None, trials=None, n=None, N=None, lam=None, kmax=None) -> ExperimentConfig:
    """Merge a config file with flag overrides (flags win) into a validated config."""
    raw = _load_json(path) if path else {}
    if not isinstance(raw, dict):
        raise ConfigError("config", "expected a JSON object")
    raw = dict(raw)
    if kind is not None:
        if raw.get("kind", kind) != kind:
            raise ConfigError("kind", f"config file says {raw['kind']!r} but {kind!r} was requested")
        raw["kind"] = kind
    if raw.get("kind") not in KINDS:
        raise ConfigError("kind", f"expected one of {', '.join(KINDS)}, got {raw.get('kind')!r}")
    if seed is not None:
        raw["master_seed"] = seed
    if trials is not None:
        raw["trials"] = trials
    if n is not None:
        raw["n"] = n
    if N is not None:
        if raw["kind"] == "error_rate":
            raw["sweep"] = {"axis": "N", "values": [N]}
        else:
            raw["trajectory_length"] = N
    if lam is not None:
        system = dict(raw.get("system") or ExperimentConfig.from_dict({"kind": raw["kind"]}).system or {})
        if "family" not in system:
            raise ConfigError("lambda", "--lambda applies to family descriptors only")
        system["lambda"] = lam
        raw["system"] = system
    if kmax is not None:
        raw["params"] = dict(raw.get("params", {}), kmax=kmax)
    return ExperimentConfig.from_dict(raw)


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _kg_csv(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "g"])
    for r in result.per_trial:
        if r.error is None:
            w.writerow([r.axis_value, repr(r.metrics["g"])])
    return buf.getvalue()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z")


def cmd_experiment(args) -> int:
    cfg = parse_config(args.kind, args.config, args.seed, args.trials, args.n, args.N, args.lam, args.kmax)
    result = run_experiment(cfg, args.threads)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        _write_atomic(out_dir / f"{cfg.kind}.csv", result.to_csv())
        _write_atomic(out_dir / f"{cfg.kind}.json", result.to_json())
    if args.out:
        text = _kg_csv(result) if cfg.kind == "covariance_blowup" else result.to_csv()
        _write_atomic(Path(args.out), text)
    if not args.out and not args.out_dir:
        sys.stdout.write(result.to_json() + "\n")
    else:
        print(json.dumps({"experiment": cfg.kind, "status": result.status,
                          "metrics": result.to_dict()["metrics"]}, sort_keys=True))
    return 0


def _figure_checks(results) -> list:
    """Direction checks for the figure suite; returns failure reasons."""
    failures = []
    fig1 = results["explosive_mode"].metrics
    if not (fig1["median_ratio"] is not None and fig1["median_ratio"] > 1):
        failures.append("explosive_mode: explosive arm median error does not exceed stable arm")
    if not results["block_split"].metrics["strictly_decreasing"]:
        failures.append("block_split: median errors not strictly decreasing over partitions")
    factor = results["dimension_sweep"].metrics["increase_factor"]
    if not (factor is not None and factor >= 5):
        failures.append("dimension_sweep: log sigma_max increase below 5x the Gaussian baseline")
    if not results["covariance_blowup"].metrics["interior"]:
        failures.append("covariance_blowup: g(k) has no interior maximum")
    return failures


def cmd_suite(args) -> int:
    if args.suite != "figures":
        raise ConfigError("suite", f"unknown suite {args.suite!r}")
    overrides = _load_json(args.config) if args.config else {}
    if not isinstance(overrides, dict) or set(overrides) - set(KINDS):
        raise ConfigError("config", "suite config maps experiment kinds to config objects")
    out_dir = Path(args.out_dir)
    started = _now()
    seed = 0 if args.seed is None else args.seed
    kinds = list(dict.fromkeys(kind for _, kind, _ in FIGURES))
    configs = {k: ExperimentConfig.from_dict(dict(overrides.get(k, {}), kind=k, master_seed=seed)) for k in kinds}
    results, status, outputs = {}, {}, []
    for kind in kinds:
        try:
            results[kind] = run_experiment(configs[kind], args.threads)
            res = results[kind]
            status[kind] = "ok" if res.status == "ok" else f"partial({res.failures})"
        except LabError as exc:
            status[kind] = f"failed({type(exc).__name__}: {exc})"
    for stem, kind, metrics in FIGURES:
        if kind in results:
            path = out_dir / f"{stem}.csv"
            _write_atomic(path, results[kind].to_csv(metrics))
            outputs.append(str(path))
    failures = _figure_checks(results) if len(results) == len(kinds) else ["one or more experiments failed"]
    for reason in failures:
        kind = reason.split(":")[0]
        if kind in status and status[kind] == "ok":
            status[kind] = f"failed({reason.split(': ', 1)[1]})"
    manifest = {
        "tool_version": tool_version(),
        "config_path": args.config,
        "master_seed": seed,
        "started": started,
        "finished": _now(),
        "outputs": outputs,
        "experiments": {k: {"status": status[k], "config": configs[k].to_dict()} for k in kinds},
    }
    _write_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for reason in failures:
        print(f"FAIL {reason}", file=sys.stderr)
    return 1 if failures else 0


def _rel(a, b) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1.0)


def cmd_verify(args) -> int:
    if args.battery != "identities":
        raise ConfigError("battery", f"unknown battery {args.battery!r}")
    seed = 0 if args.seed is None else args.seed
    if args.cases < 1:
        raise ConfigError("cases", "must be positive")
    shapes = ((3, 5), (10, 30), (30, 90))
    nsm = ols = jordan = 0.0
    for i in range(args.cases):
        s = derive_trial_seed(seed, i)
        n, N = shapes[i % len(shapes)]
        Y = gaussian_matrix(n, N, s)
        lhs = float(np.sum(np.linalg.svd(Y, compute_uv=False) ** -2.0))
        rhs = float(np.sum(row_hyperplane_distances(Y) ** -2.0))
        nsm = max(nsm, abs(lhs - rhs) / rhs)
        n = (2, 5, 10)[i % 3]
        A = build_system(stable_diagonal(n, 0.9))
        lhs, rhs = ols_error_identity(assemble(simulate(A, 10 * n, seed=s)), A)
        ols = max(ols, _rel(lhs, rhs))
        rng = np.random.default_rng(s)
        lam, m, k = float(rng.uniform(-1.5, 1.5)), int(rng.integers(1, 9)), int(rng.integers(0, 40))
        J = lam * np.eye(m) + np.eye(m, k=1)
        ref = np.linalg.matrix_power(J, k)
        jordan = max(jordan, float(np.max(np.abs(jordan_block_power(lam, m, k) - ref))
                                   / max(np.max(np.abs(ref)), 1e-300)))
    worst = {"negative_second_moment": nsm, "ols_error_identity": ols, "jordan_power": jordan}
    for name, value in worst.items():
        print(f"{name}: max relative residual {value:.3e}")
    bad = [k for k, v in worst.items() if not v <= IDENTITY_TOL]
    if bad:
        raise ContainmentError(f"residual above {IDENTITY_TOL:g}: {', '.join(bad)}")
    return 0


def cmd_show_spec(args) -> int:
    data = _load_json(args.file, "file")
    spec = SystemSpec.from_dict(data)
    print(spec.to_json())
    print(f"n={spec.n} diagonalizable={str(spec.diagonalizable).lower()} digest={spec.digest()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ldslab", description="Linear dynamical system identification experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--seed", type=int)
        sp.add_argument("--config")
        sp.add_argument("--threads", type=int)

    e = sub.add_parser("experiment", help="run one experiment")
    e.add_argument("kind", choices=KINDS)
    common(e)
    e.add_argument("--trials", type=int)
    e.add_argument("--n", type=int)
    e.add_argument("--N", type=int)
    e.add_argument("--lambda", dest="lam", type=float)
    e.add_argument("--kmax", type=int)
    e.add_argument("--out")
    e.add_argument("--out-dir")
    e.set_defaults(func=cmd_experiment)

    s = sub.add_parser("suite", help="run a reproduction suite")
    s.add_argument("suite", choices=("figures",))
    common(s)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_suite)

    v = sub.add_parser("verify", help="run exact-identity checks")
    v.add_argument("battery", choices=("identities",))
    v.add_argument("--seed", type=int)
    v.add_argument("--cases", type=int, default=100)
    v.set_defaults(func=cmd_verify)

    sh = sub.add_parser("show-spec", help="validate and echo a system spec")
    sh.add_argument("file")
    sh.set_defaults(func=cmd_show_spec)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"FAIL {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
