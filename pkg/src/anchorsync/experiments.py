"""Reproducible Monte-Carlo experiments, the self-test, and run records.

Every trial draws from its own generator seeded by a 64-bit FNV-1a hash of
``"seed:valueIdx:trialIdx"``, so adding trials or values never changes
earlier ones. Results are written in (value, trial, method) order whatever
the worker pool does.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datamatrix import build_omega, build_t_hat
from .diagnostics import (
    Check,
    build_ground_truth_decomposition,
    check_eigen_gap,
    check_norm_bounds,
    decomposition_residuals,
    measured_rates,
    report_csv,
)
from .errors import ConfigError
from .estimators import ASE, METHODS, NAIVE, TWO_STAGE, EstimateSet, estimate, recover_translations, round_anchored
from .evaluation import METRICS, error_report
from .geometry import RigidMotion, is_rotation, project_so, random_rotations, relative
from .registration import (
    kabsch_pose_graph,
    perturb_pose_graph,
    refine_pose_graph,
    register_scans,
    synthetic_scene,
)
from .spectral import smallest_eigvecs
from .synthesis import generate_ground_truth, synthesize_observations

SWEEP_SIGMA1 = "sweep-sigma1"
SWEEP_SIGMA2 = "sweep-sigma2"
SCALE_N = "scale-n"
SELFTEST = "selftest"
DIAGNOSTICS = "diagnostics"
REGISTER = "register"
KINDS = (SWEEP_SIGMA1, SWEEP_SIGMA2, SCALE_N, SELFTEST, DIAGNOSTICS, REGISTER)

DATA_COLUMNS = (
    "experiment_id", "kind", "method", "n", "d", "sigma1", "sigma2", "trial", "seed",
    *METRICS, "wall_ms",
)
SUMMARY_COLUMNS = (
    "summary", "experiment_id", "kind", "method", "n", "d", "sigma1", "sigma2", "trials",
    *(f"{m}_{q}" for m in METRICS for q in ("q1", "median", "q3")),
)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a_64(text: str) -> int:
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def trial_seed(seed: int, value_idx: int, trial_idx: int) -> int:
    return fnv1a_64(f"{seed}:{value_idx}:{trial_idx}")


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = SWEEP_SIGMA2
    n: tuple = (500,)
    d: int = 3
    sigma1: tuple = (1.0,)
    sigma2: tuple = (0.25, 0.5, 1.0, 2.0)
    trials: int = 25
    seed: int = 0
    methods: tuple = (ASE, TWO_STAGE)
    translation_scale: float = 1.0
    out: str | None = None
    threads: int = 1
    timing: bool = False
    # registration
    scans: int = 5
    points: int = 500
    max_angle_deg: float = 8.0
    trans_sigma_mm: float = 0.8
    icp_iters: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for name in ("n", "sigma1", "sigma2", "methods"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} list must be nonempty")
        if any(v < 2 for v in self.n) or self.d < 2:
            raise ConfigError("n and d must be >= 2")
        if any(v < 0 for v in (*self.sigma1, *self.sigma2)):
            raise ConfigError("noise levels must be non-negative")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {', '.join(bad)}; choose from {', '.join(METHODS)}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.kind == SWEEP_SIGMA1 and len(self.sigma2) != 1:
            raise ConfigError("a sigma1 sweep needs a single sigma2")
        if self.kind == SWEEP_SIGMA2 and len(self.sigma1) != 1:
            raise ConfigError("a sigma2 sweep needs a single sigma1")
        if self.kind in (SWEEP_SIGMA1, SWEEP_SIGMA2, DIAGNOSTICS) and len(self.n) != 1:
            raise ConfigError(f"{self.kind} needs a single n")
        if self.kind in (SCALE_N, DIAGNOSTICS) and (len(self.sigma1) != 1 or len(self.sigma2) != 1):
            raise ConfigError(f"{self.kind} needs single sigma1 and sigma2 values")

    def canonical(self) -> str:
        """Stable text of every field that affects results."""
        skip = {"out", "threads", "timing"}
        parts = []
        for f in dataclasses.fields(self):
            if f.name in skip:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(_fmt(v) for v in value)
            else:
                value = _fmt(value)
            parts.append(f"{f.name}={value}")
        return ";".join(parts)

    @property
    def experiment_id(self) -> str:
        return f"{fnv1a_64(self.canonical()):016x}"


KIND_DEFAULTS = {
    SWEEP_SIGMA2: {},
    SWEEP_SIGMA1: {"sigma1": (0.25, 0.5, 1.0, 2.0), "sigma2": (1.0,)},
    SCALE_N: {"n": (100, 200, 400), "sigma1": (0.5,), "sigma2": (0.5,), "methods": (ASE,)},
    DIAGNOSTICS: {"n": (50,), "sigma1": (0.5,), "sigma2": (0.5,), "trials": 1, "methods": (ASE,)},
    REGISTER: {"trials": 25, "methods": (ASE, NAIVE)},
    SELFTEST: {"trials": 1},
}

_LIST_FIELDS = {"n": int, "sigma1": float, "sigma2": float, "methods": str}
_SCALAR_FIELDS = {
    "kind": str, "d": int, "trials": int, "seed": int, "translation_scale": float,
    "out": str, "threads": int, "timing": None, "scans": int, "points": int,
    "max_angle_deg": float, "trans_sigma_mm": float, "icp_iters": int,
}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _LIST_FIELDS and key not in _SCALAR_FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _convert(key: str, value):
    if not isinstance(value, str):
        return value
    try:
        if key in _LIST_FIELDS:
            items = [v.strip() for v in value.split(",") if v.strip()]
            return tuple(_LIST_FIELDS[key](v) for v in items)
        if key == "timing":
            return _parse_bool(value)
        return _SCALAR_FIELDS[key](value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def make_config(values: dict | None = None, overrides: dict | None = None, kind: str | None = None) -> ExperimentConfig:
    """Merge kind defaults, file values and overrides (later wins).

    Without an explicit kind a sweep over ``sigma1`` is inferred when more
    than one ``sigma1`` value is given, otherwise a ``sigma2`` sweep.
    """
    merged = {}
    for source in (values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            key = key.replace("-", "_")
            if key not in _LIST_FIELDS and key not in _SCALAR_FIELDS:
                raise ConfigError(f"unknown key {key!r}")
            merged[key] = _convert(key, value)
    kind = merged.pop("kind", None) or kind
    if kind is None:
        kind = SWEEP_SIGMA1 if len(merged.get("sigma1", ())) > 1 else SWEEP_SIGMA2
    if kind not in KIND_DEFAULTS:
        raise ConfigError(f"unknown kind {kind!r}; choose from {', '.join(KINDS)}")
    params = {**KIND_DEFAULTS[kind], **merged, "kind": kind}
    return ExperimentConfig(**params)


def load_config(path, overrides: dict | None = None, kind: str | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return make_config(parse_config_text(text), overrides, kind)


# ------------------------------------------------------------------- runs


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list = field(default_factory=list)  # dicts keyed by DATA_COLUMNS
    summaries: list = field(default_factory=list)  # lists of cells

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(DATA_COLUMNS)
        for row in self.rows:
            writer.writerow([_cell(row[c]) for c in DATA_COLUMNS])
        for summary in self.summaries:
            writer.writerow([_cell(v) for v in summary])
        return out.getvalue()

    def write(self, path=None) -> None:
        path = path or self.config.out
        if path is None:
            return
        try:
            with open(path, "w", newline="") as fh:
                fh.write(self.to_csv())
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from exc

    def values(self, method: str, metric: str, **match) -> np.ndarray:
        picked = [
            r[metric] for r in self.rows
            if r["method"] == method and all(r[k] == v for k, v in match.items())
        ]
        return np.array(picked, dtype=float)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _trial_rows(config: ExperimentConfig, value_idx: int, trial: int, n: int, sigma1: float, sigma2: float):
    seed = trial_seed(config.seed, value_idx, trial)
    rng = np.random.default_rng(seed)
    gt = generate_ground_truth(n, config.d, config.translation_scale, rng)
    obs = synthesize_observations(gt, sigma1, sigma2, rng)
    rows = []
    for method in config.methods:
        start = time.perf_counter()
        est = estimate(obs, method)
        elapsed = (time.perf_counter() - start) * 1e3
        report = error_report(est, gt, method)
        rows.append(
            {
                "experiment_id": config.experiment_id,
                "kind": config.kind,
                "method": method,
                "n": n,
                "d": config.d,
                "sigma1": float(sigma1),
                "sigma2": float(sigma2),
                "trial": trial,
                "seed": seed,
                **report.metrics(),
                # left blank by default so reruns are byte-identical
                "wall_ms": round(elapsed, 3) if config.timing else None,
            }
        )
    return rows


def _grid(config: ExperimentConfig):
    """``(value_idx, n, sigma1, sigma2)`` for each swept value."""
    if config.kind == SWEEP_SIGMA1:
        return [(k, config.n[0], s, config.sigma2[0]) for k, s in enumerate(config.sigma1)]
    if config.kind == SWEEP_SIGMA2:
        return [(k, config.n[0], config.sigma1[0], s) for k, s in enumerate(config.sigma2)]
    if config.kind == SCALE_N:
        return [(k, n, config.sigma1[0], config.sigma2[0]) for k, n in enumerate(config.n)]
    return [(0, config.n[0], config.sigma1[0], config.sigma2[0])]


def _run_grid(config: ExperimentConfig) -> ExperimentResult:
    grid = _grid(config)
    tasks = [(k, trial, n, s1, s2) for k, n, s1, s2 in grid for trial in range(config.trials)]
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        batches = list(pool.map(lambda task: _trial_rows(config, *task), tasks))
    result = ExperimentResult(config, [row for batch in batches for row in batch])
    for _, n, s1, s2 in grid:
        for method in config.methods:
            match = {"n": n, "sigma1": float(s1), "sigma2": float(s2)}
            cells = ["summary", config.experiment_id, config.kind, method, n, config.d,
                     float(s1), float(s2), config.trials]
            for metric in METRICS:
                q1, med, q3 = np.percentile(result.values(method, metric, **match), [25, 50, 75])
                cells += [float(q1), float(med), float(q3)]
            result.summaries.append(cells)
    return result


def run_sweep(config: ExperimentConfig) -> ExperimentResult:
    """Noise sweep: every estimator on fresh data for each value and trial."""
    if config.kind not in (SWEEP_SIGMA1, SWEEP_SIGMA2):
        raise ConfigError(f"run_sweep needs kind sweep-sigma1 or sweep-sigma2, got {config.kind}")
    result = _run_grid(config)
    result.write()
    return result


def loglog_slope(ns, errors) -> float | None:
    """Least-squares slope of ``log(error)`` against ``log(n)``; ``None`` for fewer than two sizes."""
    if len(ns) < 2:
        return None
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(errors, float)), 1)[0])


def run_scaling(config: ExperimentConfig) -> ExperimentResult:
    """Error against ``n`` with the log-log slope of the per-``n`` median uniform error."""
    if config.kind != SCALE_N:
        raise ConfigError(f"run_scaling needs kind scale-n, got {config.kind}")
    result = _run_grid(config)
    for method in config.methods:
        medians = [float(np.median(result.values(method, "max_se_error", n=n))) for n in config.n]
        slope = loglog_slope(config.n, medians)
        result.summaries.append(["summary", config.experiment_id, SCALE_N, method, "loglog_slope", slope])
    result.write()
    return result


def slope_from(result: ExperimentResult, method: str = ASE) -> float | None:
    for row in result.summaries:
        if row[3] == method and row[4] == "loglog_slope":
            return row[5]
    raise KeyError(method)


# ------------------------------------------------------------- diagnostics


def run_diagnostics(config: ExperimentConfig) -> list[Check]:
    """Decomposition residuals, deterministic bounds, gap and measured rates for one instance."""
    rng = np.random.default_rng(trial_seed(config.seed, 0, 0))
    n, s1, s2 = config.n[0], config.sigma1[0], config.sigma2[0]
    gt = generate_ground_truth(n, config.d, config.translation_scale, rng)
    obs = synthesize_observations(gt, s1, s2, rng)
    decomp = build_ground_truth_decomposition(gt, obs)
    checks = [
        Check(name, value, 1e-8, value <= 1e-8)
        for name, value in decomposition_residuals(decomp).items()
        if name != "centered_blockdiag_vanishes"
    ]
    checks += check_norm_bounds(decomp, gt)
    checks += check_eigen_gap(decomp)
    checks += measured_rates(decomp, gt, s1)
    if config.out:
        try:
            with open(config.out, "w", newline="") as fh:
                fh.write(report_csv(checks))
        except OSError as exc:
            raise ConfigError(f"cannot write {config.out}: {exc}") from exc
    return checks


# ------------------------------------------------------------ registration


def run_registration(config: ExperimentConfig) -> ExperimentResult:
    """Synthetic scans, perturbed Kabsch pose graph, every method on the same graph.

    Rows reuse the sweep schema with ``n`` = scan count and the ``sigma1`` /
    ``sigma2`` columns holding the maximum perturbation angle (degrees) and
    the translation noise (mm).
    """
    rows = []

    def one(trial):
        seed = trial_seed(config.seed, 0, trial)
        rng = np.random.default_rng(seed)
        scene = synthetic_scene(rng, config.scans, config.points)
        graph = perturb_pose_graph(kabsch_pose_graph(scene.scans), config.max_angle_deg, config.trans_sigma_mm, rng)
        if config.icp_iters > 0:
            graph = refine_pose_graph(scene.scans, graph, config.icp_iters)
        out = []
        for method in config.methods:
            est, _ = register_scans(scene.scans, graph, method)
            report = error_report(est, scene.ground_truth, method)
            out.append({"experiment_id": config.experiment_id, "kind": REGISTER, "method": method,
                        "n": config.scans, "d": 3, "sigma1": float(config.max_angle_deg),
                        "sigma2": float(config.trans_sigma_mm), "trial": trial, "seed": seed,
                        **report.metrics(), "wall_ms": None})
        return out

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        for batch in pool.map(one, range(config.trials)):
            rows.extend(batch)
    result = ExperimentResult(config, rows)
    for method in config.methods:
        cells = ["summary", config.experiment_id, REGISTER, method, config.scans, 3,
                 float(config.max_angle_deg), float(config.trans_sigma_mm), config.trials]
        for metric in METRICS:
            q1, med, q3 = np.percentile(result.values(method, metric), [25, 50, 75])
            cells += [float(q1), float(med), float(q3)]
        result.summaries.append(cells)
    result.write()
    return result


# ---------------------------------------------------------------- selftest


@dataclass
class SelftestReport:
    checks: list  # Check rows; satisfied is never None here

    @property
    def ok(self) -> bool:
        return all(c.satisfied for c in self.checks)

    def table(self) -> str:
        width = max(len(c.quantity) for c in self.checks)
        lines = [f"{'check':<{width}}  {'measured':>12}  {'bound':>12}  status"]
        for c in self.checks:
            status = "PASS" if c.satisfied else "FAIL"
            lines.append(f"{c.quantity:<{width}}  {c.value:12.4e}  {c.bound:12.4e}  {status}")
        lines.append(f"{sum(c.satisfied for c in self.checks)}/{len(self.checks)} checks passed")
        return "\n".join(lines)


def _omega_array(built) -> np.ndarray:
    return np.asarray(getattr(built, "omega", built), dtype=float)


def _translation_oracle(rng) -> float:
    """Relative gap between the closed-form translations and a dense constrained solve."""
    n, d = 6, 3
    gt = generate_ground_truth(n, d, 2.0, rng)
    obs = synthesize_observations(gt, 0.3, 0.5, rng)
    R = random_rotations(rng, d, n)
    A = np.zeros((n * (n - 1) * d, n * d))
    b = np.zeros(n * (n - 1) * d)
    row = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            A[row : row + d, j * d : (j + 1) * d] += R[i]
            A[row : row + d, i * d : (i + 1) * d] -= R[i]
            b[row : row + d] = obs.s[i, j]
            row += d
    C = np.kron(np.ones((1, n)), np.eye(d))
    K = np.block([[A.T @ A, C.T], [C, np.zeros((d, d))]])
    t = np.linalg.solve(K, np.concatenate([A.T @ b, np.zeros(d)]))[: n * d].reshape(n, d)
    closed = recover_translations(R, build_t_hat(obs))
    return float(np.linalg.norm(closed - t) / np.linalg.norm(t))


def run_selftest(omega_builder=build_omega, seed: int = 0) -> SelftestReport:
    """Invariant suite; ``omega_builder`` is swappable so a corrupted assembly can be injected."""
    rng = np.random.default_rng(trial_seed(seed, 0, 0))
    checks = []

    # geometry
    M = rng.standard_normal((20, 3, 3))
    worst = max(np.linalg.norm(project_so(m).T @ project_so(m) - np.eye(3)) for m in M)
    checks.append(Check("project_so_orthogonal", worst, 1e-12, worst <= 1e-12))
    Rs = random_rotations(rng, 3, 20)
    checks.append(Check("haar_in_SO3", float(not all(is_rotation(R) for R in Rs)), 0.0,
                        all(is_rotation(R) for R in Rs)))
    G = [RigidMotion(R, t) for R, t in zip(Rs[:3], rng.standard_normal((3, 3)))]
    chain = (G[0] @ relative(G[0], G[1])).as_matrix() - G[1].as_matrix()
    checks.append(Check("relative_composes", float(np.abs(chain).max()), 1e-12, np.abs(chain).max() <= 1e-12))

    # null space and gap of the noiseless data matrix
    n, d = 20, 3
    gt = generate_ground_truth(n, d, 1.0, rng)
    obs = synthesize_observations(gt, 0.0, 0.0, rng)
    omega = _omega_array(omega_builder(obs))
    null_res = float(np.linalg.norm(omega @ gt.stacked_rotations))
    null_bound = 1e-8 * float(np.linalg.norm(omega)) * math.sqrt(d)
    checks.append(Check("omega_null_space", null_res, null_bound, null_res <= null_bound))
    basis = smallest_eigvecs(omega, d)
    checks.append(Check("omega_gap_lambda_d+1", 2 * n - 1e-6, basis.next_eigenvalue,
                        basis.next_eigenvalue >= 2 * n - 1e-6))

    # exact recovery through the same assembly
    rotations = round_anchored(basis.blocks, 0)
    est_t = recover_translations(rotations, build_t_hat(obs))
    report = error_report(EstimateSet(rotations, est_t, ASE), gt)
    checks.append(Check("exact_recovery_rot_deg", report.max_rot_deg, 1e-6, report.max_rot_deg < 1e-6))
    checks.append(Check("exact_recovery_trans", report.max_trans_err, 1e-8, report.max_trans_err < 1e-8))

    # decomposition identity and deterministic bounds
    gt = generate_ground_truth(10, d, 1.0, rng)
    obs = synthesize_observations(gt, 0.5, 0.5, rng)
    decomp = build_ground_truth_decomposition(gt, obs)
    residual = decomposition_residuals(decomp)["h_decomposition"]
    checks.append(Check("h_decomposition", residual, 1e-8, residual <= 1e-8))
    checks += check_norm_bounds(decomp, gt)
    checks += check_eigen_gap(decomp)

    gap = _translation_oracle(rng)
    checks.append(Check("translation_oracle", gap, 1e-9, gap <= 1e-9))
    return SelftestReport(checks)


def corrupted_omega(obs):
    """Deliberately wrong assembly (drops the ``Sigma_hat`` term) for fault injection."""
    built = build_omega(obs)
    return built.omega - built.sigma_hat
