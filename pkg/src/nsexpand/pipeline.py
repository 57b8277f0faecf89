"""Run configuration and the simulate -> probe -> extract -> verify -> report pipeline.

Every stage persists its output under the run directory, so later stages can
be re-run from disk without repeating the expensive ones.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import pydantic
import scipy
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import __version__
from .analysis import (
    BelowFloorError,
    DecayFitError,
    fit_decay_rate,
    verify_improved_decay,
    verify_small_data_decay,
    verify_weak_decay_constants,
)
from .bilinear import growth_sweep
from .dynamics import GalerkinConfig, Trajectory, energy_residual, integrate, load_trajectory, save_trajectory
from .expansion import (
    ExpansionState,
    extract_expansion,
    load_expansion,
    ode_residual,
    perturb_coefficient,
    remainder_series,
    save_expansion,
    summarize,
)
from .field import GevreyParams, SpectralField, abc_flow, norms, random_field, single_mode
from .lattice import mode_set

REPORT_FORMAT = "nsexpand-report/1"
STAGES = ("simulate", "probe", "extract", "verify", "report")
TRAJECTORY_DIR = "trajectory"
EXPANSION_DIR = "expansion"
PROBE_FILE = "probe.json"
VERIFY_FILE = "verification.json"
REMAINDER_CSV = "remainders.csv"
REPORT_FILE = "report.json"


class ArtifactMissingError(FileNotFoundError):
    """A stage needs the output of an earlier stage that is not on disk."""


# configuration ----------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SingleModeIC(_Strict):
    kind: Literal["single_mode"]
    k: tuple[int, int, int]
    amplitude: float = Field(gt=0)

    @field_validator("k")
    @classmethod
    def _nonzero(cls, v):
        if v == (0, 0, 0):
            raise ValueError("wavevector must be nonzero")
        return v


class BeltramiIC(_Strict):
    kind: Literal["beltrami_abc"]
    a: float = Field(gt=0)
    b: float = Field(gt=0)
    c: float = Field(gt=0)


class RandomSmallIC(_Strict):
    kind: Literal["random_small"]
    seed: int
    amplitude: float = Field(gt=0)
    decay: float = Field(default=1.0, ge=0)


InitialCondition = Annotated[Union[SingleModeIC, BeltramiIC, RandomSmallIC], Field(discriminator="kind")]


class GalerkinSettings(_Strict):
    cutoff: int = Field(ge=1)
    dt: float = Field(gt=0)
    t_end: float = Field(gt=0)
    snapshot_stride: int = Field(default=10, ge=1)

    def to_config(self) -> GalerkinConfig:
        return GalerkinConfig(self.cutoff, self.dt, self.t_end, self.snapshot_stride)


class ProbeSettings(_Strict):
    samples: int = Field(default=1000, ge=1)
    seed: int = 0
    cutoff: int = Field(default=8, ge=1)
    sigma: float = Field(default=0.0, ge=0)


class EvalPair(_Strict):
    alpha: float = Field(ge=0)
    sigma: float = Field(ge=0)


class VerifySettings(_Strict):
    delta: float = Field(default=0.5, gt=0, lt=1)
    small_data: EvalPair = EvalPair(alpha=0.5, sigma=0.25)
    improved: EvalPair = EvalPair(alpha=0.5, sigma=0.1)
    weak_decay: Optional[EvalPair] = None
    slope_margin: float = Field(default=0.4, gt=0, lt=1)
    ode_tolerance: float = Field(default=1e-8, gt=0)
    sensitivity_floor: float = Field(default=1e-3, gt=0)
    perturbation: float = Field(default=0.01, gt=0)
    energy_tolerance: float = Field(default=1e-6, gt=0)

    @field_validator("small_data", "improved")
    @classmethod
    def _alpha_half(cls, v):
        if v.alpha < 0.5:
            raise ValueError("decay bounds need alpha >= 1/2")
        return v


class RunConfig(_Strict):
    initial: InitialCondition
    galerkin: GalerkinSettings
    n_max: int = Field(default=3, ge=1)
    sigma_extract: float = Field(default=0.25, ge=0)
    eval_pairs: list[EvalPair] = Field(min_length=1)
    probe: ProbeSettings = ProbeSettings()
    verify: VerifySettings = VerifySettings()
    output_dir: str = "run"

    @field_validator("galerkin")
    @classmethod
    def _whole_steps(cls, g):
        try:
            g.to_config().steps
        except ValueError as exc:
            raise ValueError(str(exc)) from None
        return g

    @model_validator(mode="after")
    def _mode_inside_cutoff(self):
        ic = self.initial
        if isinstance(ic, SingleModeIC) and sum(c * c for c in ic.k) > self.galerkin.cutoff:
            raise ValueError(f"wavevector {ic.k} lies outside the cutoff {self.galerkin.cutoff}")
        return self

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(self, out: str | None = None, seed: int | None = None) -> "RunConfig":
        data = self.model_dump(mode="json")
        if out is not None:
            data["output_dir"] = str(out)
        if seed is not None:
            data["probe"]["seed"] = seed
            if data["initial"]["kind"] == "random_small":
                data["initial"]["seed"] = seed
        return RunConfig.model_validate(data)


def load_config(path) -> RunConfig:
    return RunConfig.model_validate_json(Path(path).read_text())


def initial_field(cfg: RunConfig) -> SpectralField:
    ic, cutoff = cfg.initial, cfg.galerkin.cutoff
    if isinstance(ic, SingleModeIC):
        return single_mode(cutoff, ic.k, ic.amplitude)
    if isinstance(ic, BeltramiIC):
        return abc_flow(cutoff, ic.a, ic.b, ic.c)
    u = random_field(cutoff, np.random.default_rng(ic.seed), ic.decay)
    return u * (ic.amplitude / float(norms(u.coeffs, u.modes)))


# stages -----------------------------------------------------------------------


def _json_safe(obj):
    if isinstance(obj, float):
        if math.isfinite(obj):
            return obj
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def dump_json(obj) -> str:
    return json.dumps(_json_safe(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def _require(path: Path) -> Path:
    if not path.exists():
        raise ArtifactMissingError(f"missing artifact {path}; run the earlier stage first")
    return path


def stage_simulate(cfg: RunConfig, out: Path) -> Trajectory:
    traj = integrate(initial_field(cfg), cfg.galerkin.to_config())
    save_trajectory(traj, out / TRAJECTORY_DIR)
    return traj


def stage_probe(cfg: RunConfig, out: Path) -> dict:
    p = cfg.probe
    k_emp, reports = growth_sweep(p.sigma, p.samples, p.seed, p.cutoff)
    record = {"K_emp": k_emp, "reports": [r.as_record() for r in reports]}
    out.mkdir(parents=True, exist_ok=True)
    (out / PROBE_FILE).write_text(dump_json(record))
    return record


def stage_extract(cfg: RunConfig, out: Path, traj: Trajectory | None = None) -> ExpansionState:
    if traj is None:
        traj = load_trajectory(_require(out / TRAJECTORY_DIR))
    state = extract_expansion(traj, cfg.n_max, cfg.sigma_extract)
    save_expansion(state, out / EXPANSION_DIR, trajectory_dir=out / TRAJECTORY_DIR)
    return state


def _column(n: int, pair: EvalPair) -> str:
    return f"v{n}_alpha{pair.alpha!r}_sigma{pair.sigma!r}"


def _remainder_checks(cfg: RunConfig, traj: Trajectory, state: ExpansionState):
    columns, fits = {}, []
    for pair in cfg.eval_pairs:
        p = GevreyParams(pair.alpha, pair.sigma)
        reference = None
        for n in range(state.depth + 1):
            series = remainder_series(traj, state, p, n)
            columns[_column(n, pair)] = series
            if n == 0:
                reference = float(np.max(series))
            rec = {"N": n, "alpha": pair.alpha, "sigma": pair.sigma}
            try:
                fit = fit_decay_rate(traj.times, series, reference=reference)
                rec.update(status="fit", fit=fit.as_record(), rate=fit.rate)
            except BelowFloorError:
                rec.update(status="below_floor", fit=None, rate=None)
            except DecayFitError as exc:
                rec.update(status="error", fit=None, rate=None, error=str(exc))
            if n >= 1:
                required = n + cfg.verify.slope_margin
                rec["required_rate"] = required
                rec["passed"] = rec["status"] == "below_floor" or (rec["rate"] is not None and rec["rate"] >= required)
            fits.append(rec)
    return columns, fits


def _residual_checks(cfg: RunConfig, state: ExpansionState):
    v = cfg.verify
    rng = np.random.default_rng(cfg.probe.seed)
    times = state.source.times
    out = []
    for n in range(1, state.depth + 1):
        res = ode_residual(state, n, times)
        rec = {"n": n, "residual": res, "passed": res <= v.ode_tolerance}
        q = state.terms[n - 1].q
        if q.is_zero():
            rec["perturbed_residual"] = None
        else:
            bumped = perturb_coefficient(state, n, 0, v.perturbation, rng)
            pres = ode_residual(bumped, n, times)
            rec["perturbed_residual"] = pres
            rec["sensitive"] = pres >= v.sensitivity_floor
            rec["passed"] = rec["passed"] and rec["sensitive"]
        out.append(rec)
    return out


def stage_verify(
    cfg: RunConfig,
    out: Path,
    traj: Trajectory | None = None,
    state: ExpansionState | None = None,
    probe: dict | None = None,
) -> dict:
    if traj is None:
        traj = load_trajectory(_require(out / TRAJECTORY_DIR))
    if state is None:
        state = load_expansion(_require(out / EXPANSION_DIR), traj)
    if probe is None:
        probe = json.loads(_require(out / PROBE_FILE).read_text())
    v = cfg.verify
    k_emp = probe["K_emp"]

    columns, fits = _remainder_checks(cfg, traj, state)
    residuals = _residual_checks(cfg, state)
    energy = float(np.max(energy_residual(traj)))
    lemmas = [
        verify_small_data_decay(traj, v.small_data.alpha, v.small_data.sigma, v.delta, k_emp).as_record(),
        verify_improved_decay(traj, v.improved.alpha, v.improved.sigma, k_emp).as_record(),
    ]
    if v.weak_decay is not None:
        lemmas.append(verify_weak_decay_constants(traj, v.weak_decay.sigma, v.weak_decay.alpha, k_emp).as_record())

    checks = {
        "energy": energy <= v.energy_tolerance,
        "remainder_slopes": all(f.get("passed", True) for f in fits),
        "ode_residuals": all(r["passed"] for r in residuals),
        "lemma_bounds": all(rec["status"] != "fail" for rec in lemmas),
    }
    record = {
        "energy_residual_max": energy,
        "remainders": fits,
        "ode_residuals": residuals,
        "lemmas": lemmas,
        "checks": checks,
        "unverifiable": [rec["lemma"] for rec in lemmas if rec["status"] == "unverifiable"],
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / VERIFY_FILE).write_text(dump_json(record))
    write_remainder_csv(out / REMAINDER_CSV, traj.times, columns)
    return record


# report -----------------------------------------------------------------------


@dataclass(frozen=True)
class RunReport:
    data: dict
    times: np.ndarray
    columns: dict

    @property
    def status(self) -> str:
        return self.data["status"]


def write_remainder_csv(path: Path, times: np.ndarray, columns: dict) -> None:
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + names)
        for i, t in enumerate(times):
            w.writerow(["%.17g" % t] + ["%.17g" % columns[c][i] for c in names])


def read_remainder_csv(path: Path) -> tuple[np.ndarray, dict]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    table = np.array([[float(x) for x in r] for r in rows[1:]], dtype=np.float64).reshape(-1, len(names) + 1)
    return table[:, 0], {n: table[:, j + 1] for j, n in enumerate(names)}


def provenance(cfg: RunConfig) -> dict:
    return {
        "config_sha256": cfg.digest(),
        "versions": {
            "nsexpand": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pydantic": pydantic.VERSION,
            "python": platform.python_version(),
        },
    }


def stage_report(cfg: RunConfig, out: Path) -> RunReport:
    traj_manifest = json.loads(_require(out / TRAJECTORY_DIR / "trajectory.json").read_text())
    probe = json.loads(_require(out / PROBE_FILE).read_text())
    verification = json.loads(_require(out / VERIFY_FILE).read_text())
    state = load_expansion(_require(out / EXPANSION_DIR), _stub_trajectory(traj_manifest))
    times, columns = read_remainder_csv(_require(out / REMAINDER_CSV))
    artifacts = {
        "trajectory": TRAJECTORY_DIR,
        "expansion": EXPANSION_DIR,
        "probe": PROBE_FILE,
        "verification": VERIFY_FILE,
        "remainders_csv": REMAINDER_CSV,
        "report": REPORT_FILE,
    }
    data = {
        "format": REPORT_FORMAT,
        "config": cfg.model_dump(mode="json"),
        "provenance": provenance(cfg),
        "trajectory": {
            "samples": traj_manifest["count"],
            "t_end": traj_manifest["times"][-1],
            "energy_residual_max": verification["energy_residual_max"],
        },
        "probe": probe,
        "terms": summarize(state),
        "remainders": verification["remainders"],
        "ode_residuals": verification["ode_residuals"],
        "lemmas": verification["lemmas"],
        "checks": verification["checks"],
        "unverifiable": verification["unverifiable"],
        "status": "pass" if all(verification["checks"].values()) else "fail",
        "artifacts": artifacts,
    }
    report = RunReport(data, times, columns)
    export_report(report, out)
    return report


def _stub_trajectory(manifest: dict) -> Trajectory:
    """A single-sample trajectory carrying only the configuration, for summaries."""
    cfg = GalerkinConfig(**manifest["config"])
    return Trajectory(cfg, [0.0], np.zeros((1, mode_set(cfg.cutoff).size, 3)))


def export_report(report: RunReport, out) -> dict:
    """Write report.json and remainders.csv; the same report always yields the same bytes."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_remainder_csv(out / REMAINDER_CSV, report.times, report.columns)
    (out / REPORT_FILE).write_text(dump_json(report.data))
    missing = [name for name in report.data["artifacts"].values() if not (out / name).exists()]
    if missing:
        raise ArtifactMissingError(f"report references missing artifacts: {missing}")
    return {"report": out / REPORT_FILE, "remainders_csv": out / REMAINDER_CSV}


def run_pipeline(cfg: RunConfig, start: str = "simulate") -> RunReport:
    if start not in STAGES:
        raise ValueError(f"unknown stage {start!r}; expected one of {STAGES}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    todo = STAGES[STAGES.index(start) :]
    traj = state = probe = None
    if "simulate" in todo:
        traj = stage_simulate(cfg, out)
    if "probe" in todo:
        probe = stage_probe(cfg, out)
    if "extract" in todo:
        state = stage_extract(cfg, out, traj)
    if "verify" in todo:
        stage_verify(cfg, out, traj, state, probe)
    return stage_report(cfg, out)
