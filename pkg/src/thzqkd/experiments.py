"""End-to-end pipelines, Monte Carlo sweeps and the shared-phase RIS search.

The channel is deterministic given the geometry; Monte Carlo averaging runs
over pilot and detection noise only.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, Sequence

import numpy as np

from .channel import (ChannelSet, Geometry, PathSpec, RISConfig, SystemConfig,
                      build_channel)
from .errors import InvalidArgument, ModelError
from .keygen import DETECTOR_DM, ChannelEigenmodes, eigenmode_params, svd_decompose
from .pilot import (EstimationOutput, PilotConfig, dft_pilot_matrix, ls_estimate,
                    ml_noise_cov, ris_noise_cov, simulate_pilot_rx)
from .skr import BobVariance, SkrReport, skr_total

DetectorChoice = Literal["homodyne", "heterodyne", "both"]

SWEEP_VARIABLES = ("distance", "pilot_power_db", "pilot_length", "ris_elements", "ris_phase")
VARIABLE_ALIASES = {"distance": "distance", "d": "distance",
                    "vp_db": "pilot_power_db", "pilot_power_db": "pilot_power_db",
                    "lp": "pilot_length", "pilot_length": "pilot_length",
                    "k": "ris_elements", "ris_elements": "ris_elements",
                    "phi": "ris_phase", "ris_phase": "ris_phase"}

# Reference optimal shared phases (degrees) keyed by (N, V_p dB, d m).
# Display only: they were obtained under a different, unknown geometry.
REFERENCE_PHI_DEG = {
    (16, 1, 10): -128.43, (16, 10, 10): 72.10, (16, 30, 10): 158.05, (16, 60, 10): 129.40,
    (16, 1, 50): -151.35, (16, 10, 50): -99.78, (16, 30, 50): 112.20, (16, 60, 50): 129.40,
    (16, 1, 80): 43.45, (16, 10, 80): 100.75, (16, 30, 80): -2.38, (16, 60, 80): 129.40,
    (32, 1, 10): -162.81, (32, 10, 10): 140.86, (32, 30, 10): 129.40, (32, 60, 10): 129.40,
    (32, 1, 50): 152.32, (32, 10, 50): 77.83, (32, 30, 50): 129.40, (32, 60, 50): 129.40,
    (32, 1, 80): 135.13, (32, 10, 80): 123.67, (32, 30, 80): 117.94, (32, 60, 80): 129.40,
    (64, 1, 10): -180.0, (64, 10, 10): -105.52, (64, 30, 10): -134.16, (64, 60, 10): 129.40,
    (64, 1, 50): -139.89, (64, 10, 50): 72.10, (64, 30, 50): 135.13, (64, 60, 50): 129.40,
    (64, 1, 80): -162.81, (64, 10, 80): -162.81, (64, 30, 80): 112.21, (64, 60, 80): 129.40,
    (128, 1, 10): 146.59, (128, 10, 10): 129.40, (128, 30, 10): 129.40, (128, 60, 10): 129.40,
    (128, 1, 50): -180.0, (128, 10, 50): -162.81, (128, 30, 50): 129.40, (128, 60, 50): 129.40,
    (128, 1, 80): 102.46, (128, 10, 80): 117.94, (128, 30, 80): 123.66, (128, 60, 80): 129.40,
}


@dataclass(frozen=True)
class Scenario:
    """Physical scenario: system, RIS, geometry and pilot settings.

    ``ris_spacing=None`` means half-wavelength spacing; ``L_p=None`` means
    ``L_p = N_T``; ``ris_x=None`` puts the RIS above the link midpoint.
    ``extra_paths`` holds ``(link, PathSpec)`` pairs added to the LoS paths.
    """

    system: SystemConfig = field(default_factory=SystemConfig)
    K: int = 100
    phi: float = math.pi / 4
    ris_spacing: float | None = None
    distance: float = 10.0
    ris_x: float | None = None
    ris_y: float = 5.0
    L_p: int | None = None
    V_p_db: float = 60.0
    extra_paths: tuple[tuple[str, PathSpec], ...] = ()

    def __post_init__(self):
        if isinstance(self.K, bool) or int(self.K) != self.K or self.K < 1:
            raise InvalidArgument("Scenario violates K >= 1 (integer)")
        object.__setattr__(self, "K", int(self.K))
        if not math.isfinite(self.phi):
            raise InvalidArgument("Scenario violates finite phi")
        if self.ris_spacing is not None and not self.ris_spacing > 0:
            raise InvalidArgument("Scenario violates ris_spacing > 0")
        if not self.distance > 0:
            raise InvalidArgument("Scenario violates distance > 0")
        self.pilot().check_against(self.system.N_T, self.system.T_c)
        object.__setattr__(self, "extra_paths", tuple(tuple(p) for p in self.extra_paths))

    @property
    def lp(self) -> int:
        return self.system.N_T if self.L_p is None else int(self.L_p)

    def ris(self) -> RISConfig:
        spacing = self.system.lambda_c / 2 if self.ris_spacing is None else self.ris_spacing
        return RISConfig.uniform(self.K, self.phi, spacing)

    def geometry(self) -> Geometry:
        return Geometry.from_distance(self.distance, self.ris_x, self.ris_y)

    def pilot(self) -> PilotConfig:
        return PilotConfig.from_db(self.lp, self.V_p_db)

    def extra_path_map(self) -> dict[str, list[PathSpec]]:
        out: dict[str, list[PathSpec]] = {}
        for link, p in self.extra_paths:
            out.setdefault(link, []).append(p)
        return out

    def channel(self) -> ChannelSet:
        return build_channel(self.system, self.ris(), self.geometry(), self.extra_path_map())

    def with_value(self, variable: str, value: float) -> "Scenario":
        """Copy with one swept variable replaced."""
        var = VARIABLE_ALIASES.get(variable)
        if var == "distance":
            return replace(self, distance=float(value))
        if var == "pilot_power_db":
            return replace(self, V_p_db=float(value))
        if var == "pilot_length":
            return replace(self, L_p=_as_int(value, "pilot_length"))
        if var == "ris_elements":
            return replace(self, K=_as_int(value, "ris_elements"))
        if var == "ris_phase":
            return replace(self, phi=float(value))
        raise InvalidArgument(f"unknown sweep variable {variable!r}; "
                              f"valid: {', '.join(sorted(VARIABLE_ALIASES))}")


def _as_int(value, name: str) -> int:
    if float(value) != int(float(value)):
        raise InvalidArgument(f"{name} values must be integers, got {value!r}")
    return int(float(value))


@dataclass(frozen=True)
class ExperimentConfig:
    """Monte Carlo and evaluation options.

    ``crn`` (common random numbers) gives every sweep point the same trial
    seeds, which pairs trials across points.
    """

    trials: int = 100
    seed: int = 0
    detector: DetectorChoice = "homodyne"
    raw_sum: bool = False
    bob_variance: BobVariance = "measured"
    noiseless: bool = False
    crn: bool = False
    grid_step: float = 0.1

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise InvalidArgument("ExperimentConfig violates trials >= 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidArgument("ExperimentConfig violates seed >= 0 (integer)")
        if self.detector not in ("homodyne", "heterodyne", "both"):
            raise InvalidArgument("ExperimentConfig violates detector in "
                                  "{homodyne, heterodyne, both}")
        if self.bob_variance not in ("measured", "thermal"):
            raise InvalidArgument("ExperimentConfig violates bob_variance in {measured, thermal}")
        if not self.grid_step > 0:
            raise InvalidArgument("ExperimentConfig violates grid_step > 0")

    @property
    def detectors(self) -> tuple[str, ...]:
        return ("homodyne", "heterodyne") if self.detector == "both" else (self.detector,)


def trial_seed(base_seed: int, point: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), int(point), int(trial)])


def estimate_trial(chan: ChannelSet, sc: Scenario, rng: np.random.Generator,
                   noiseless: bool = False) -> tuple[EstimationOutput, ChannelEigenmodes]:
    """Pilot transmission, LS estimate, SVD and estimation-noise variances."""
    cfg, pilot = sc.system, sc.pilot()
    Psi = dft_pilot_matrix(cfg.N_T, pilot.L_p, pilot.V_p)
    obs = simulate_pilot_rx(chan.H_ris, Psi, cfg.V_o, cfg.nu_en, rng, noiseless=noiseless)
    H_ls = ls_estimate(obs.Y_p, Psi)
    C_n = ml_noise_cov(obs.Y_p, Psi, H_ls)
    modes = svd_decompose(H_ls)
    C_ris, sigma2 = ris_noise_cov(C_n, modes.U, cfg.V_a, pilot.V_p, cfg.N_T, pilot.L_p)
    return EstimationOutput(H_ls, C_n, C_ris, sigma2[:modes.r]), modes


def evaluate_skr(modes: ChannelEigenmodes, est: EstimationOutput, sc: Scenario,
                 detector: str, raw_sum: bool = False,
                 bob_variance: BobVariance = "measured") -> SkrReport:
    params = eigenmode_params(modes, est, sc.system, DETECTOR_DM[detector])
    return skr_total(params, sc.system.eta, sc.lp, sc.system.T_c, raw_sum=raw_sum,
                     bob_var=bob_variance, detector=detector)


def run_pipeline(sc: Scenario, exp: ExperimentConfig | None = None,
                 seed: int | None = None, chan: ChannelSet | None = None,
                 point: int = 0, trial: int = 0):
    """One realization: channel, pilots, estimate, decomposition, SKR.

    Returns ``(reports, est)`` where ``reports`` maps detector name to
    :class:`SkrReport`. Both detectors share one channel estimate.
    """
    exp = exp or ExperimentConfig()
    seed = exp.seed if seed is None else seed
    chan = chan if chan is not None else sc.channel()
    rng = np.random.default_rng(trial_seed(seed, point, trial))
    est, modes = estimate_trial(chan, sc, rng, noiseless=exp.noiseless)
    reports = {det: evaluate_skr(modes, est, sc, det, exp.raw_sum, exp.bob_variance)
               for det in exp.detectors}
    return reports, est


def monte_carlo_stats(samples: Sequence[float]) -> tuple[float, float]:
    """Sample mean and its standard error (0 for a single sample)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise InvalidArgument("monte_carlo_stats needs at least one sample")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple[float, ...]
    trials: int = 100
    seed: int = 0
    detector: DetectorChoice = "homodyne"

    def __post_init__(self):
        var = VARIABLE_ALIASES.get(self.variable)
        if var is None:
            raise InvalidArgument(f"unknown sweep variable {self.variable!r}; "
                                  f"valid: {', '.join(sorted(VARIABLE_ALIASES))}")
        object.__setattr__(self, "variable", var)
        vals = tuple(float(v) for v in self.values)
        if not vals or not all(math.isfinite(v) for v in vals):
            raise InvalidArgument("SweepSpec violates: values non-empty and finite")
        object.__setattr__(self, "values", vals)
        if int(self.trials) != self.trials or self.trials < 1:
            raise InvalidArgument("SweepSpec violates trials >= 1")


ROW_FIELDS = ("variable", "value", "detector", "N_T", "N_R", "K", "phi", "distance",
              "V_p_db", "L_p", "trials", "mean_skr", "stderr_skr", "mean_sigma2_ris",
              "r", "error")


@dataclass(frozen=True)
class ExperimentRow:
    """Aggregated result of one sweep point for one detector.

    ``r`` is the rank of the first trial. ``error`` is empty on success; on
    failure the numeric results are NaN.
    """

    variable: str
    value: float
    detector: str
    N_T: int
    N_R: int
    K: int
    phi: float
    distance: float
    V_p_db: float
    L_p: int
    trials: int
    mean_skr: float
    stderr_skr: float
    mean_sigma2_ris: float
    r: int
    error: str = ""
    runtime_ms: float = 0.0
    samples: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def as_record(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in ROW_FIELDS}


def _run_point(sc: Scenario, exp: ExperimentConfig, variable: str, value: float,
               point: int) -> list[ExperimentRow]:
    t0 = time.perf_counter()
    seed_point = 0 if exp.crn else point
    skr = {det: [] for det in exp.detectors}
    sig, rank, error = [], -1, ""
    try:
        chan = sc.channel()
        for t in range(exp.trials):
            reports, est = run_pipeline(sc, exp, chan=chan, point=seed_point, trial=t)
            for det, rep in reports.items():
                skr[det].append(rep.total_skr)
            sig.append(float(np.mean(est.sigma2_ris)) if est.sigma2_ris.size else 0.0)
            if t == 0:
                rank = int(est.sigma2_ris.size)
    except ModelError as exc:
        error = f"{type(exc).__name__}: {exc}"
    ms = (time.perf_counter() - t0) * 1e3
    cfg = sc.system
    rows = []
    for det in exp.detectors:
        if error:
            mean = se = msig = float("nan")
            samples: tuple[float, ...] = ()
        else:
            mean, se = monte_carlo_stats(skr[det])
            msig = float(np.mean(sig))
            samples = tuple(skr[det])
        rows.append(ExperimentRow(variable, float(value), det, cfg.N_T, cfg.N_R, sc.K,
                                  float(sc.phi), float(sc.distance), float(sc.V_p_db), sc.lp,
                                  exp.trials, mean, se, msig, rank, error, ms, samples))
    return rows


def worker_count(n_tasks: int) -> int:
    """Thread count from ``QKD_SIM_THREADS`` (0 or unset: automatic)."""
    raw = os.environ.get("QKD_SIM_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgument(f"QKD_SIM_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InvalidArgument("QKD_SIM_THREADS must be >= 0")
    if n == 0:
        n = os.cpu_count() or 1
    return max(1, min(n, n_tasks))


def run_sweep(spec: SweepSpec, base: Scenario,
              exp: ExperimentConfig | None = None) -> list[ExperimentRow]:
    """Evaluate every value of ``spec``; rows follow ``spec.values`` order.

    ``spec`` supplies trials, seed and detector; other options come from
    ``exp``. A point that fails (e.g. an unphysical transmittance) is marked
    in its row instead of aborting the sweep.
    """
    exp = replace(exp or ExperimentConfig(), trials=spec.trials, seed=spec.seed,
                  detector=spec.detector)

    def task(i: int) -> list[ExperimentRow]:
        try:
            sc = base.with_value(spec.variable, spec.values[i])
        except InvalidArgument as exc:
            sc = None
            err = f"{type(exc).__name__}: {exc}"
        if sc is None:
            nan = float("nan")
            cfg = base.system
            return [ExperimentRow(spec.variable, spec.values[i], det, cfg.N_T, cfg.N_R,
                                  base.K, base.phi, base.distance, base.V_p_db, base.lp,
                                  exp.trials, nan, nan, nan, -1, err)
                    for det in exp.detectors]
        return _run_point(sc, exp, spec.variable, spec.values[i], i)

    n = len(spec.values)
    workers = worker_count(n)
    if workers == 1:
        chunks = [task(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(task, range(n)))
    return [row for chunk in chunks for row in chunk]


def phase_grid(grid_step: float) -> np.ndarray:
    """``ceil(2 pi / step)`` points ``-pi + k step`` covering ``[-pi, pi)``."""
    if not grid_step > 0:
        raise InvalidArgument("grid_step must be positive")
    n = math.ceil(2 * math.pi / grid_step)
    return -math.pi + grid_step * np.arange(n)


@dataclass(frozen=True)
class PhaseSearchResult:
    phi_opt: float
    skr_at_opt: float
    grid_step: float
    curve: list[tuple[float, float]]
    detector: str = "homodyne"

    @property
    def phi_opt_deg(self) -> float:
        return math.degrees(self.phi_opt)


def format_degrees(phi_rad: float) -> str:
    return f"{math.degrees(phi_rad):.2f}°"


def optimize_phase(base: Scenario, exp: ExperimentConfig | None = None,
                   grid_step: float | None = None, trials: int | None = None,
                   crn: bool = True) -> PhaseSearchResult:
    """Grid search of the phase shared by all RIS elements.

    Trials use common random numbers across grid points by default, so the
    curve compares phases under identical noise. Ties go to the smallest
    phase. With ``detector='both'`` the heterodyne curve is discarded and the
    homodyne one is optimized.
    """
    exp = exp or ExperimentConfig()
    step = exp.grid_step if grid_step is None else grid_step
    grid = phase_grid(step)
    det = exp.detectors[0]
    spec = SweepSpec("ris_phase", tuple(grid), exp.trials if trials is None else trials,
                     exp.seed, det)
    rows = run_sweep(spec, base, replace(exp, crn=crn, detector=det))
    means = np.array([r.mean_skr for r in rows])
    if np.all(np.isnan(means)):
        raise ModelError(f"every grid point failed; first error: {rows[0].error}")
    best = int(np.nanargmax(means))
    curve = [(float(p), float(m)) for p, m in zip(grid, means)]
    return PhaseSearchResult(float(grid[best]), float(means[best]), float(step), curve, det)


def reference_phase_deg(N: int, V_p_db: float, distance: float) -> float | None:
    key = (int(N), int(round(V_p_db)), int(round(distance)))
    if (key[1], key[2]) != (V_p_db, distance):
        return None
    return REFERENCE_PHI_DEG.get(key)


__all__ = [
    "Scenario", "ExperimentConfig", "SweepSpec", "ExperimentRow", "PhaseSearchResult",
    "run_pipeline", "run_sweep", "optimize_phase", "monte_carlo_stats", "estimate_trial",
    "evaluate_skr", "trial_seed", "phase_grid", "format_degrees", "reference_phase_deg",
    "SWEEP_VARIABLES", "ROW_FIELDS", "REFERENCE_PHI_DEG",
]
