"""Seeded Monte-Carlo sweeps over the DL transmit power.

Every trial owns three random streams derived from ``(seed, trial)``:
geometry, channels and observation noise. All methods and all power points
of one trial consume the same draws, so method comparisons are paired.
Per-trial results are keyed by the trial index and reduced with
``math.fsum``, so the output does not depend on the execution order or on
the number of worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .channel import ScenarioConfig, build_covariance, crandn, drop_users, psd_sqrt
from .errors import ConfigError, NumericalBreakdown
from .iwmmse import estimate_all, run_iwmmse
from .powersplit import evaluate_split, optimize_split
from .sinr import PrecoderTransforms, SinrOperators, instantaneous_rates
from .training import build_pilot_matrix, observe, training_noise_variance

METHODS = ("bilinear_rs", "bilinear_nors", "iwmmse_rs", "iwmmse_nors")
DEFAULT_GRID = tuple(float(x) for x in range(0, 41, 5))


@dataclass(frozen=True)
class Tolerances:
    private_tol: float = 1e-5
    private_max_iter: int = 200
    common_tol: float = 1e-4
    common_max_steps: int = 500
    common_u_min: float = 1e-4
    golden_tol: float = 0.02
    golden_max_eval: int = 12
    iwmmse_tol: float = 1e-4
    iwmmse_max_iter: int = 100


@dataclass(frozen=True)
class SweepConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    T_dl: int = 8
    T_ch: int = 200
    p_dl_db: tuple = DEFAULT_GRID
    n_iter: int = 300
    methods: tuple = METHODS
    n_channels: int = 1
    fixed_geometry: bool = False
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if not 1 <= self.T_dl < self.scenario.M:
            raise ConfigError(f"T_dl must satisfy 1 <= T_dl < M, got T_dl={self.T_dl}, M={self.scenario.M}")
        if self.T_ch < self.T_dl:
            raise ConfigError(f"T_ch must be at least T_dl, got T_ch={self.T_ch}")
        if not self.p_dl_db:
            raise ConfigError("p_dl_db grid is empty")
        if self.n_iter < 1 or self.n_channels < 1:
            raise ConfigError("n_iter and n_channels must be >= 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["p_dl_db"] = list(self.p_dl_db)
        d["methods"] = list(self.methods)
        return d


PROFILES = {
    "paper": {},
    "desk": {"M": 16, "K": 3, "T_dl": 4, "n_iter": 50},
}


# config key -> (dataclass field, value parser)
def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _bool(v):
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    return tuple(float(x) for x in v.split(",") if x.strip())


def _words(v):
    return tuple(x.strip() for x in v.split(",") if x.strip())


_SCENARIO_KEYS = {
    "M": ("M", _int), "K": ("K", _int), "radius_m": ("cell_radius", _float),
    "N_path": ("N_path", _int), "N_rays": ("N_rays", _int), "nu": ("nu", _float),
    "seed": ("seed", _int), "path_loss": ("path_loss", str.strip),
    "center_spread": ("center_spread", _float), "cluster_spread": ("cluster_spread", _float),
    "ray_spread": ("ray_spread", _float),
}
_SWEEP_KEYS = {
    "T_dl": ("T_dl", _int), "T_ch": ("T_ch", _int), "p_dl_db": ("p_dl_db", _floats),
    "n_iter": ("n_iter", _int), "methods": ("methods", _words), "n_channels": ("n_channels", _int),
    "fixed_geometry": ("fixed_geometry", _bool),
}
_TOL_KEYS = {f.name: (f.name, _int if f.type in (int, "int") else _float)
             for f in dataclasses.fields(Tolerances)}
CONFIG_KEYS = tuple(_SCENARIO_KEYS) + tuple(_SWEEP_KEYS) + tuple(_TOL_KEYS)


def build_config(values: dict, profile: str = "paper") -> SweepConfig:
    """Assemble a :class:`SweepConfig` from already-parsed key values over a profile."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    merged = {**PROFILES[profile], **values}
    scen, sweep, tol = {}, {}, {}
    for key, value in merged.items():
        for table, target in ((_SCENARIO_KEYS, scen), (_SWEEP_KEYS, sweep), (_TOL_KEYS, tol)):
            if key in table:
                target[table[key][0]] = value
                break
        else:
            raise ConfigError(f"unknown key {key!r}")
    return SweepConfig(scenario=ScenarioConfig(**scen), tolerances=Tolerances(**tol), **sweep)


def parse_values(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        parser = None
        for table in (_SCENARIO_KEYS, _SWEEP_KEYS, _TOL_KEYS):
            if key in table:
                parser = table[key][1]
        if parser is None:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def parse_config(path=None, overrides: dict | None = None, profile: str = "paper") -> SweepConfig:
    """Read a key=value file (optional), apply ``overrides`` and validate.

    Invariant violations are reported with the file name.
    """
    values = {}
    source = "<defaults>"
    if path is not None:
        source = str(path)
        with open(path) as fh:
            values = parse_values(fh.read(), source)
    values.update(overrides or {})
    try:
        return build_config(values, profile)
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


# ---------------------------------------------------------------- running


def trial_streams(seed: int, trial: int, fixed_geometry: bool = False):
    """Independent generators ``(geometry, channels, noise)`` for one trial."""
    geo_key = 0 if fixed_geometry else trial
    geo = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0, geo_key))))
    ch = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, trial))))
    nz = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(2, trial))))
    return geo, ch, nz


@dataclass
class TrialRecord:
    """Outcome of one method at one power point in one trial."""

    sum_rate: float
    lb: float | None
    alpha_c: float | None
    common_rate: float
    user_rates: list


def _bilinear_record(sol, H, Y, rs: bool) -> TrialRecord:
    K = H.shape[-2]
    A_c = sol.A_c if rs else np.zeros_like(sol.A_c)
    p_c, P_p = PrecoderTransforms(sol.A_p, A_c).precoders(Y)
    rates = instantaneous_rates(H, p_c, P_p)
    total = rates.sum_rs if rs else rates.sum_nors
    common = float(np.mean(rates.common_rate)) if rs else 0.0
    users = np.mean(rates.private_rates.reshape(-1, K), axis=0)
    return TrialRecord(float(np.mean(total)), float(sol.rate_lb), float(sol.alpha_c if rs else 0.0),
                       common, [float(u) for u in users])


def _iwmmse_record(H, H_hat, P_dl, rs: bool, tol: Tolerances) -> TrialRecord:
    totals, commons, users = [], [], []
    for n in range(H.shape[0]):
        res = run_iwmmse(H_hat[n], P_dl, tol=tol.iwmmse_tol, max_iter=tol.iwmmse_max_iter, rs=rs)
        r = instantaneous_rates(H[n], res.p_c, res.P_p)
        totals.append(float(r.sum_rs if rs else r.sum_nors))
        commons.append(float(r.common_rate) if rs else 0.0)
        users.append(r.private_rates)
    return TrialRecord(math.fsum(totals) / len(totals), None, None, math.fsum(commons) / len(commons),
                       [float(u) for u in np.mean(users, axis=0)])


def run_trial(cfg: SweepConfig, trial: int, seed: int | None = None) -> dict:
    """All methods at all power points for one trial.

    Returns ``{(method, P_dl_dB): TrialRecord | None}``; ``None`` marks a
    numerical breakdown.
    """
    seed = cfg.scenario.seed if seed is None else seed
    sc = cfg.scenario
    geo, ch, nz = trial_streams(seed, trial, cfg.fixed_geometry)
    cov = build_covariance(drop_users(sc, geo), sc)
    roots = np.stack([psd_sqrt(C) for C in cov.C])
    W = crandn(ch, cfg.n_channels, sc.K, sc.M)
    H = np.einsum("kmn,...kn->...km", roots, W)
    noise = crandn(nz, cfg.n_channels, sc.K, cfg.T_dl)
    Phi = build_pilot_matrix(sc.M, cfg.T_dl)
    tol = cfg.tolerances
    popts = {"tol": tol.private_tol, "max_iter": tol.private_max_iter}
    copts = {"outer_tol": tol.common_tol, "N_max": tol.common_max_steps, "u_min": tol.common_u_min}
    out = {}
    for db in cfg.p_dl_db:
        P_dl = 10.0 ** (db / 10.0)
        s2 = training_noise_variance(P_dl, cfg.T_dl)
        Y = observe(H, Phi, s2, noise=noise)
        bilinear = [m for m in cfg.methods if m.startswith("bilinear")]
        if bilinear:
            try:
                ops = SinrOperators.build(cov, Phi, s2)
                base = evaluate_split(0.0, ops, P_dl, private_opts=popts, common_opts=copts)
                if "bilinear_nors" in bilinear:
                    out[("bilinear_nors", db)] = _bilinear_record(base, H, Y, rs=False)
                if "bilinear_rs" in bilinear:
                    sol, _ = optimize_split(ops, P_dl, tol=tol.golden_tol, max_eval=tol.golden_max_eval,
                                            baseline=base, private_opts=popts, common_opts=copts)
                    out[("bilinear_rs", db)] = _bilinear_record(sol, H, Y, rs=True)
            except (NumericalBreakdown, np.linalg.LinAlgError):
                for m in bilinear:
                    out[(m, db)] = None
        iw = [m for m in cfg.methods if m.startswith("iwmmse")]
        if iw:
            H_hat = estimate_all(Y, cov.C, Phi, s2)
            for m in iw:
                try:
                    out[(m, db)] = _iwmmse_record(H, H_hat, P_dl, m == "iwmmse_rs", tol)
                except (NumericalBreakdown, np.linalg.LinAlgError):
                    out[(m, db)] = None
    return out


def _run_trial_args(args):
    return run_trial(*args)


@dataclass
class PointResult:
    method: str
    P_dl_dB: float
    mean_sum_rate: float
    stderr: float
    mean_lb: float | None
    alpha_c: float | None
    common_rate: float
    user_rates: list
    trials: int
    failed: int
    samples: list  # per-trial sum rate, None where the trial failed
    lb_samples: list | None = None


@dataclass
class RateReport:
    config: dict
    points: list

    def point(self, method: str, P_dl_dB: float) -> PointResult:
        for p in self.points:
            if p.method == method and p.P_dl_dB == P_dl_dB:
                return p
        raise KeyError((method, P_dl_dB))

    @property
    def failed(self) -> int:
        return sum(p.failed for p in self.points)

    def to_dict(self) -> dict:
        return {"config": self.config, "points": [dataclasses.asdict(p) for p in self.points]}

    @classmethod
    def from_dict(cls, d: dict) -> "RateReport":
        return cls(d["config"], [PointResult(**p) for p in d["points"]])


def _mean(values):
    return math.fsum(values) / len(values)


def _stderr(values):
    n = len(values)
    if n < 2:
        return 0.0
    m = _mean(values)
    var = math.fsum((v - m) ** 2 for v in values) / (n - 1)
    return math.sqrt(var / n)


def aggregate(cfg: SweepConfig, trials: list) -> RateReport:
    """Reduce per-trial dictionaries (ordered by trial index) to a report."""
    K = cfg.scenario.K
    points = []
    for method in cfg.methods:
        for db in cfg.p_dl_db:
            recs = [t.get((method, db)) for t in trials]
            ok = [r for r in recs if r is not None]
            samples = [None if r is None else r.sum_rate for r in recs]
            if not ok:
                points.append(PointResult(method, db, float("nan"), float("nan"), None, None,
                                          float("nan"), [float("nan")] * K, 0, len(recs), samples))
                continue
            sums = [r.sum_rate for r in ok]
            lbs = [r.lb for r in ok if r.lb is not None]
            alphas = [r.alpha_c for r in ok if r.alpha_c is not None]
            points.append(PointResult(
                method=method,
                P_dl_dB=db,
                mean_sum_rate=_mean(sums),
                stderr=_stderr(sums),
                mean_lb=_mean(lbs) if lbs else None,
                alpha_c=_mean(alphas) if alphas else None,
                common_rate=_mean([r.common_rate for r in ok]),
                user_rates=[_mean([r.user_rates[k] for r in ok]) for k in range(K)],
                trials=len(ok),
                failed=len(recs) - len(ok),
                samples=samples,
                lb_samples=[None if r is None else r.lb for r in recs] if lbs else None,
            ))
    return RateReport(cfg.to_dict(), points)


def run_sweep(cfg: SweepConfig, workers: int = 1, progress=None) -> RateReport:
    """Run every trial and aggregate.

    ``workers > 1`` distributes trials over processes; the report is
    identical for any worker count.
    """
    jobs = [(cfg, t) for t in range(cfg.n_iter)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_run_trial_args, jobs))
    else:
        trials = []
        for job in jobs:
            trials.append(run_trial(*job))
            if progress is not None:
                progress(len(trials), cfg.n_iter)
    return aggregate(cfg, trials)


# ---------------------------------------------------------------- output

CSV_FIXED = ["method", "P_dl_dB", "mean_sum_rate", "stderr", "mean_lb", "alpha_c", "common_rate"]


def csv_header(K: int) -> list:
    return CSV_FIXED + [f"user_{k + 1}" for k in range(K)]


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_csv(report: RateReport, path) -> None:
    K = report.config["scenario"]["K"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(K))
        for p in report.points:
            w.writerow([p.method, _fmt(p.P_dl_dB), _fmt(p.mean_sum_rate), _fmt(p.stderr), _fmt(p.mean_lb),
                        _fmt(p.alpha_c), _fmt(p.common_rate)] + [_fmt(u) for u in p.user_rates])


def _git_revision():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(__file__))
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None if out.returncode == 0 else None


def write_json(report: RateReport, path) -> None:
    doc = report.to_dict()
    doc["version"] = __version__
    doc["git"] = _git_revision()
    doc["created"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, allow_nan=True)


def read_json(path) -> RateReport:
    with open(path) as fh:
        return RateReport.from_dict(json.load(fh))


def write_curves(report: RateReport, directory) -> list:
    """Two-column ``P_dl_dB value`` files, one per curve."""
    written = []
    curves = {}
    for p in report.points:
        curves.setdefault(p.method, []).append((p.P_dl_dB, p.mean_sum_rate))
        if p.mean_lb is not None:
            curves.setdefault(p.method + "_lb", []).append((p.P_dl_dB, p.mean_lb))
    for name, rows in curves.items():
        path = os.path.join(directory, f"{name}.dat")
        with open(path, "w") as fh:
            fh.write(f"# P_dl_dB {name}\n")
            for db, v in rows:
                fh.write(f"{db!r} {v!r}\n")
        written.append(path)
    return written


def emit_report(report: RateReport, out_dir, formats=("csv", "json", "dat")) -> list:
    """Write the report files into ``out_dir``; returns the written paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        if "csv" in formats:
            path = os.path.join(out_dir, "rates.csv")
            write_csv(report, path)
            written.append(path)
        if "json" in formats:
            path = os.path.join(out_dir, "rates.json")
            write_json(report, path)
            written.append(path)
        if "dat" in formats:
            written += write_curves(report, out_dir)
    except OSError as exc:
        raise OSError(f"cannot write report to {out_dir}: {exc.strerror or exc}") from exc
    return written
