"""Named, configuration-driven experiments with persisted outputs.

A spec file is INI text with an ``[experiment]`` section (name, kind, seed,
output, check, workers) and a ``[params]`` section holding kind-specific
parameters.  Every run writes into ``<output>/<name>/``:

* ``manifest.ini``: the spec with every default filled in; it can be fed
  back to ``run`` and reproduces the outputs byte for byte;
* ``results.csv``: one row per measurement, fixed columns per kind;
* ``summary.csv``: derived quantities (fits, spreads);
* ``checks.csv``: pass/fail records when check mode is on.
"""
from __future__ import annotations

import configparser
import csv
import math
import os
import warnings
from io import StringIO
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .noise import STREAM_RULE_VERSION, NoiseStream

OUTPUT_ENV = "HYPSG_OUTPUT_ROOT"
GREEN_SPREAD_BOUND = 0.2

EXIT_OK = 0
EXIT_CHECK_FAILED = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4
EXIT_OUTPUT = 5


class ConfigError(ValueError):
    pass


# --- parameter tables ------------------------------------------------------------

_F, _I, _FL, _IL, _S, _B = "float", "int", "floats", "ints", "str", "bool"

KINDS: dict[str, dict[str, tuple[str, object]]] = {
    "sigma-asymptotics": {
        "t": (_F, 0.5),
        "Ns": (_FL, [32, 64, 128, 256, 512]),
        "grid_factor": (_F, 2.0),
    },
    "green-check": {
        "Ns": (_FL, [32, 64, 128, 256, 512]),
        "kmax": (_I, 12),
        "grid_factor": (_F, 2.0),
    },
    "gamma-check": {
        "t": (_F, 0.25),
        "N": (_F, 64.0),
        "M": (_I, 0),
        "samples": (_I, 10000),
        "shifts": (_IL, [0, 0, 1, 0, 2, 1, 5, 0, 10, 7]),
    },
    "hrw-check": {
        "a": (_FL, [1, 10, 100]),
        "R": (_FL, [10, 100, 1000]),
    },
    "prod-scan": {
        "p": (_IL, [1, 2, 3, 4]),
        "lambdas": (_FL, [0.5, 1.0, 2.0]),
        "Ns": (_FL, [1, 10, 100, 1000, 1e6]),
        "trials": (_I, 1000),
    },
    "chaos-moments": {
        "t": (_FL, [0.1, 0.25, 0.5]),
        "alpha": (_FL, [0.1, 0.2, 0.4]),
        "beta2": (_F, math.pi),
        "N": (_F, 32.0),
        "M": (_I, 0),
        "p": (_I, 1),
        "samples": (_I, 10000),
    },
    "cauchy-rate": {
        "t": (_F, 0.25),
        "alpha": (_F, 0.3),
        "beta2": (_F, math.pi),
        "Ns": (_FL, [16, 32, 64, 128]),
        "grid_factor": (_F, 4.0),
    },
    "solve": {
        "mode": (_S, "renormalized"),
        "N": (_F, 64.0),
        "M": (_I, 0),
        "beta2": (_F, math.pi),
        "h": (_F, 0.005),
        "T": (_F, 0.1),
        "s": (_F, 1.0),
        "alpha": (_F, 0.1),
        "amplitude": (_F, 1.0),
        "sample": (_I, 0),
    },
    "picard": {
        "N": (_F, 64.0),
        "M": (_I, 0),
        "beta2": (_F, math.pi),
        "h": (_F, 0.005),
        "T": (_F, 0.05),
        "s": (_F, 0.5),
        "alpha": (_F, 1.0),
        "iterations": (_I, 8),
    },
    "triviality": {
        "Ns": (_FL, [16, 32, 64, 128, 256, 512]),
        "beta2": (_F, math.pi),
        "h": (_F, 0.0125),
        "T": (_F, 0.25),
        "s": (_F, 1.0),
        "realizations": (_I, 3),
    },
    "manufactured-convergence": {
        "hs": (_FL, [0.1, 0.05, 0.025, 0.0125]),
        "beta": (_F, 1.0),
        "M": (_I, 32),
        "T": (_F, 1.0),
    },
}

COLUMNS = {
    "sigma-asymptotics": ["N", "M", "t", "sigma", "t_logN_over_4pi"],
    "green-check": ["N", "M", "i", "r", "green", "green_plus_log"],
    "gamma-check": ["i", "j", "t", "N", "estimate", "se", "exact", "z"],
    "hrw-check": ["a", "R", "lattice_sum", "log_term", "residual", "bound"],
    "prod-scan": ["p", "lambda", "N", "trials", "max_ratio"],
    "chaos-moments": ["experiment", "t", "alpha", "beta2", "p", "N", "estimate", "se", "exact"],
    "cauchy-rate": ["N", "diff"],
    "solve": ["t", "v_Hs", "v_Hneg", "u_Hneg"],
    "picard": ["iteration", "diff", "factor"],
    "triviality": ["N", "realization", "e"],
    "manufactured-convergence": ["h", "error", "ratio"],
}


def _parse(kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == _F:
            return float(raw)
        if kind == _I:
            return int(raw)
        if kind == _FL:
            return [float(x) for x in raw.replace(",", " ").split()]
        if kind == _IL:
            return [int(x) for x in raw.replace(",", " ").split()]
        if kind == _B:
            return raw.lower() in ("1", "true", "yes", "on")
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r} as {kind}") from exc


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    return str(value)


@dataclass
class ExperimentSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: str = ""
    check: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; known: {', '.join(KINDS)}")
        table = KINDS[self.kind]
        unknown = set(self.params) - set(table)
        if unknown:
            raise ConfigError(f"unknown parameters for {self.kind}: {', '.join(sorted(unknown))}")
        full = {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in table.items()}
        full.update(self.params)
        for k, (typ, _) in table.items():
            if typ == _F:
                full[k] = float(full[k])
            elif typ == _I:
                full[k] = int(full[k])
            elif typ == _FL:
                full[k] = [float(x) for x in full[k]]
        self.params = full
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        _check_ranges(self)

    @property
    def output_dir(self) -> Path:
        root = self.output or os.environ.get(OUTPUT_ENV, "outputs")
        return Path(root) / self.name

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["experiment"] = {
            "name": self.name,
            "kind": self.kind,
            "seed": str(self.seed),
            "check": _format(self.check),
            "workers": str(self.workers),
        }
        cp["params"] = {k: _format(v) for k, v in self.params.items()}
        cp["meta"] = {
            "package_version": __version__,
            "stream_rule": str(STREAM_RULE_VERSION),
            "numpy": np.__version__,
        }
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


def _check_ranges(spec: ExperimentSpec) -> None:
    p = spec.params
    bad = []
    for key in ("t", "T", "h", "N", "beta2", "samples", "trials", "realizations", "iterations"):
        if key in p and not isinstance(p[key], list):
            if key in ("t", "beta2") and p[key] < 0:
                bad.append(f"{key} must be >= 0")
            elif key not in ("t", "beta2") and p[key] <= 0:
                bad.append(f"{key} must be positive")
    if "alpha" in p:
        alphas = p["alpha"] if isinstance(p["alpha"], list) else [p["alpha"]]
        if any(a < 0 for a in alphas):
            bad.append("alpha must be >= 0")
    if spec.kind == "solve" and p["mode"] not in ("renormalized", "unrenormalized", "linear"):
        bad.append(f"unknown solver mode {p['mode']!r}")
    if spec.kind == "chaos-moments" and p["samples"] < 100:
        bad.append("chaos-moments needs samples >= 100")
    if spec.kind == "cauchy-rate" and (len(p["Ns"]) < 4 or any(b <= a for a, b in zip(p["Ns"], p["Ns"][1:]))):
        bad.append("cauchy-rate needs a strictly increasing list of at least 4 N values")
    if spec.kind == "gamma-check" and len(p["shifts"]) % 2:
        bad.append("shifts must be a flat list of (i, j) pairs")
    if spec.kind == "prod-scan" and any(q > 8 or q < 1 for q in p["p"]):
        bad.append("prod-scan needs 1 <= p <= 8")
    if bad:
        raise ConfigError("; ".join(bad))


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"spec file not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed spec file: {exc}") from exc
    if "experiment" not in cp:
        raise ConfigError("spec needs an [experiment] section")
    e = cp["experiment"]
    if "kind" not in e:
        raise ConfigError("[experiment] needs a kind")
    kind = e["kind"].strip()
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; known: {', '.join(KINDS)}")
    params = {}
    if "params" in cp:
        for key, raw in cp["params"].items():
            if key not in KINDS[kind]:
                raise ConfigError(f"unknown parameter {key!r} for kind {kind}")
            params[key] = _parse(KINDS[kind][key][0], raw)
    return ExperimentSpec(
        name=e.get("name", path.stem).strip(),
        kind=kind,
        params=params,
        seed=_parse(_I, e.get("seed", "0")),
        output=e.get("output", "").strip(),
        check=_parse(_B, e.get("check", "false")),
        workers=_parse(_I, e.get("workers", "1")),
    )


# --- validation --------------------------------------------------------------------


@dataclass
class Finding:
    level: str  # "warning" or "error"
    message: str


def validate(spec: ExperimentSpec) -> list[Finding]:
    """Diagnostics that do not require running anything."""
    p = spec.params
    out = []
    beta2 = p.get("beta2", p.get("beta", 0.0) ** 2 if "beta" in p else None)
    horizon = p.get("T", p.get("t"))
    if beta2 is not None and horizon is not None and "alpha" in p and spec.kind in (
        "solve",
        "picard",
        "chaos-moments",
        "cauchy-rate",
    ):
        Ts = horizon if isinstance(horizon, list) else [horizon]
        alphas = p["alpha"] if isinstance(p["alpha"], list) else [p["alpha"]]
        for T in Ts:
            for a in alphas:
                if beta2 * T >= 8 * math.pi * a:
                    out.append(
                        Finding(
                            "warning",
                            f"beta^2 T = {beta2 * T:.4g} >= 8 pi alpha = {8 * math.pi * a:.4g} "
                            f"(T={T}, alpha={a}): outside the regime where Theta_N converges in W^(-alpha, inf)",
                        )
                    )
    if "N" in p and p.get("M", 0) and not isinstance(p["N"], list):
        M, N = p["M"], p["N"]
        if M < 2 * N + 2:
            out.append(Finding("error", f"grid under-resolution: M = {M} < 2N + 2 = {2 * N + 2:g}"))
        elif M % 2:
            out.append(Finding("error", f"grid size M = {M} must be even"))
    if "grid_factor" in p and p["grid_factor"] < 2:
        out.append(Finding("warning", f"grid_factor {p['grid_factor']} < 2; grids fall back to M >= 2N + 2"))
    return out


# --- running -------------------------------------------------------------------------


@dataclass
class RunResult:
    status: int
    directory: Path | None
    checks: list = field(default_factory=list)
    message: str = ""


def _pmap(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _grid(p, N):
    from .torus import TorusGrid, grid_for

    return TorusGrid(p["M"]) if p.get("M") else grid_for(N)


def _run_sigma(spec):
    from .covariance import log_slope
    from .renorm import sigma_exact
    from .torus import grid_for

    p = spec.params
    rows, sig = [], []
    for N in p["Ns"]:
        g = grid_for(N, p["grid_factor"])
        s = sigma_exact(p["t"], N, g)
        sig.append(s)
        rows.append([N, g.M, p["t"], s, p["t"] * math.log(N) / (4 * math.pi)])
    slope, icept = log_slope(p["Ns"], sig)
    target = p["t"] / (4 * math.pi)
    rel = abs(slope - target) / target
    summary = {"slope": slope, "intercept": icept, "target": target, "rel_err": rel}
    checks = [("sigma slope within 10% of t/(4 pi)", rel < 0.10, rel)]
    return rows, summary, checks


def _run_green(spec):
    from .covariance import dyadic_probes, log_slope, truncated_green
    from .torus import grid_for

    p = spec.params
    rows, origin, shifted = [], [], []
    for N in p["Ns"]:
        g = grid_for(N, p["grid_factor"])
        G = truncated_green(N, g)
        origin.append(G.origin)
        for i, r in [(0, 0.0)] + dyadic_probes(g, 0, p["kmax"]):
            val = G.at(i, 0)
            adj = val + math.log(r + 1.0 / N) / (2 * math.pi)
            shifted.append(adj)
            rows.append([N, g.M, i, r, val, adj])
    slope, _ = log_slope(p["Ns"], origin)
    target = 1 / (2 * math.pi)
    spread = max(shifted) - min(shifted)
    rel = abs(slope - target) / target
    summary = {"origin_slope": slope, "target": target, "rel_err": rel, "spread": spread, "spread_bound": GREEN_SPREAD_BOUND}
    checks = [
        ("green origin slope within 5% of 1/(2 pi)", rel < 0.05, rel),
        ("green log-law spread below recorded bound", spread <= GREEN_SPREAD_BOUND, spread),
    ]
    return rows, summary, checks


def _run_gamma(spec):
    from .covariance import mc_covariance

    p = spec.params
    shifts = list(zip(p["shifts"][0::2], p["shifts"][1::2]))
    grid = _grid(p, p["N"])
    est = mc_covariance(p["t"], p["N"], grid, shifts, p["samples"], NoiseStream(spec.seed, spec.name))
    rows = [[i, j, p["t"], p["N"], m, s, e, z] for (i, j), m, s, e, z in zip(shifts, est.mean, est.se, est.exact, est.z_scores)]
    zmax = float(np.max(np.abs(est.z_scores)))
    return rows, {"max_abs_z": zmax, "M": grid.M}, [("MC covariance within 3 SE", zmax <= 3.0, zmax)]


def _run_hrw(spec):
    from .covariance import hrw_check

    rows, worst = [], 0.0
    for a in spec.params["a"]:
        for R in spec.params["R"]:
            r = hrw_check(a, R)
            worst = max(worst, r.ratio)
            rows.append([a, R, r.lattice_sum, r.log_term, r.residual, r.bound])
    return rows, {"max_ratio": worst}, [("lattice sum residual below bound", worst <= 1.0, worst)]


def _scan_one(args):
    from .chaos import cancellation_ratio_scan

    p, lambdas, Ns, trials, seed = args
    return cancellation_ratio_scan((p,), lambdas, Ns, trials, seed)


def _run_prod(spec):
    p = spec.params
    jobs = [(q, tuple(p["lambdas"]), tuple(p["Ns"]), p["trials"], spec.seed) for q in p["p"]]
    scans = _pmap(_scan_one, jobs, spec.workers)
    rows = [[r.p, r.lam, r.N, r.trials, r.max_ratio] for scan in scans for r in scan]
    table = {(r[0], r[1], r[2]): r[4] for r in rows}
    p1 = all(v == 1.0 for (q, _, _), v in table.items() if q == 1)
    worst = 0.0
    for (q, lam, N), v in table.items():
        if q >= 2 and N == 1000.0 and (q, lam, 10.0) in table:
            worst = max(worst, max(v / table[(q, lam, 10.0)], table[(q, lam, 10.0)] / v))
    summary = {"p1_exact": p1, "max_factor_N1000_vs_N10": worst}
    checks = [("p = 1 ratio exactly 1", p1, float(p1)), ("max ratio at N=1e3 within 2x of N=10", worst <= 2.0, worst)]
    return rows, summary, checks


def _moment_one(args):
    from .chaos import moment_mc, second_moment_exact

    t, alpha, beta2, N, M, p, samples, seed, name = args
    grid = _grid({"M": M}, N)
    beta = math.sqrt(beta2)
    stream = NoiseStream(seed, f"{name}:t={t!r}:alpha={alpha!r}")
    est = moment_mc(t, alpha, p, beta, N, samples, stream, grid)
    exact = second_moment_exact(t, alpha, beta, N, grid) if p == 1 else float("nan")
    return [name, t, alpha, beta2, p, N, est.mean, est.se, exact]


def _run_moments(spec):
    p = spec.params
    jobs = [
        (t, a, p["beta2"], p["N"], p["M"], p["p"], p["samples"], spec.seed, spec.name)
        for t in p["t"]
        for a in p["alpha"]
    ]
    rows = _pmap(_moment_one, jobs, spec.workers)
    checks, zmax = [], 0.0
    if p["p"] == 1:
        zmax = max(abs(r[6] - r[8]) / r[7] for r in rows)
        checks.append(("MC second moment within 3 SE of exact", zmax <= 3.0, zmax))
    return rows, {"max_abs_z": zmax}, checks


def _run_cauchy(spec):
    from .chaos import cauchy_rate

    p = spec.params
    r = cauchy_rate(p["t"], p["alpha"], math.sqrt(p["beta2"]), p["Ns"], p["grid_factor"])
    rows = [[N, d] for N, d in zip(r.Ns, r.diffs)]
    summary = {"eps_hat": r.eps_hat, "residual": r.residual, "monotone": r.monotone}
    return rows, summary, [("differences strictly decreasing with eps_hat > 0", r.monotone and r.eps_hat > 0, r.eps_hat)]


def _solver_config(p, seed, name, **over):
    from .solver import SolverConfig, cosine_data

    kw = dict(
        N=p["N"],
        beta=math.sqrt(p["beta2"]),
        h=p["h"],
        T=p["T"],
        s=p["s"],
        alpha=p["alpha"],
        M=p["M"] or None,
        stream=NoiseStream(seed, name, p.get("sample", 0)),
    )
    kw.update(over)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = SolverConfig(**kw)
    u0, u1 = cosine_data(cfg.grid)
    amp = p.get("amplitude", 1.0)
    cfg.u0, cfg.u1 = u0.with_coeffs(amp * u0.coeffs), u1
    return cfg


def _run_solve(spec):
    from .solver import solve

    p = spec.params
    cfg = _solver_config(p, spec.seed, spec.name, mode=p["mode"])
    traj = solve(cfg, store=False)
    rows = [[r["t"], r["v_Hs"], r["v_Hneg"], r["u_Hneg"]] for r in traj.norms]
    summary = {"halted": traj.halted, "message": traj.message, "M": cfg.grid.M, "blowup_factor": cfg.blowup_factor}
    return rows, summary, [("run completed without blow-up guard", not traj.halted, float(traj.halted))]


def _run_picard(spec):
    from .solver import picard_iterate, single_mode_data

    p = spec.params
    cfg = _solver_config(p, spec.seed, spec.name, mode="renormalized")
    cfg.u0, cfg.u1 = single_mode_data(cfg.grid, 1.0, cfg.s)
    _, res = picard_iterate(cfg, iterations=p["iterations"])
    rows = [[k, d, res.factors[k - 1] if 0 < k <= len(res.factors) else ""] for k, d in enumerate(res.diffs)]
    summary = {"contracted": res.contracted, "message": res.message, "first_factor": res.factors[0] if res.factors else ""}
    return rows, summary, [("Picard map contracts", res.contracted, res.factors[0] if res.factors else float("nan"))]


def _run_triviality(spec):
    from .solver import default_triviality_config, triviality_experiment

    p = spec.params
    base = default_triviality_config(
        N=p["Ns"][0], beta=math.sqrt(p["beta2"]), T=p["T"], h=p["h"], s=p["s"], stream=NoiseStream(spec.seed, spec.name)
    )
    r = triviality_experiment(p["Ns"], base, p["realizations"])
    rows = [[N, k, r.errors[k, j]] for j, N in enumerate(r.Ns) for k in range(r.errors.shape[0])]
    summary = {
        "slope": r.slope,
        "intercept": r.intercept,
        "r2": r.r2,
        "strictly_decreasing": r.strictly_decreasing,
        "mean_error": " ".join(repr(x) for x in r.mean_error),
        "excluded": len(r.excluded),
    }
    checks = [("e(N) strictly decreasing with 1/log N fit R^2 >= 0.9", r.strictly_decreasing and r.r2 >= 0.9, r.r2)]
    return rows, summary, checks


def _run_manufactured(spec):
    from .solver import manufactured_errors

    p = spec.params
    errs = manufactured_errors(p["hs"], p["beta"], p["M"], p["T"])
    ratios = [""] + [a / b for a, b in zip(errs, errs[1:])]
    rows = [[h, e, r] for h, e, r in zip(p["hs"], errs, ratios)]
    ok = all(3.5 <= r <= 4.5 for r in ratios[1:])
    return rows, {"min_ratio": min(ratios[1:]), "max_ratio": max(ratios[1:])}, [("order-2 Richardson ratios in [3.5, 4.5]", ok, min(ratios[1:]))]


RUNNERS = {
    "sigma-asymptotics": _run_sigma,
    "green-check": _run_green,
    "gamma-check": _run_gamma,
    "hrw-check": _run_hrw,
    "prod-scan": _run_prod,
    "chaos-moments": _run_moments,
    "cauchy-rate": _run_cauchy,
    "solve": _run_solve,
    "picard": _run_picard,
    "triviality": _run_triviality,
    "manufactured-convergence": _run_manufactured,
}


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def run(spec: ExperimentSpec, output_dir: Path | None = None) -> RunResult:
    """Execute ``spec`` and persist manifest, results and summary."""
    out = Path(output_dir) if output_dir is not None else spec.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        return RunResult(EXIT_OUTPUT, None, message=f"output directory not writable: {exc}")
    (out / "manifest.ini").write_text(spec.to_ini())
    try:
        rows, summary, checks = RUNNERS[spec.kind](spec)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        return RunResult(EXIT_RUNTIME, out, message=f"{type(exc).__name__}: {exc}")
    _write_csv(out / "results.csv", COLUMNS[spec.kind], rows)
    _write_csv(out / "summary.csv", ["key", "value"], list(summary.items()))
    status = EXIT_OK
    if spec.check:
        _write_csv(out / "checks.csv", ["criterion", "passed", "value"], checks)
        if not all(ok for _, ok, _ in checks):
            status = EXIT_CHECK_FAILED
    return RunResult(status, out, checks)
