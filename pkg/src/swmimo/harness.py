"""Config-driven experiment runner.

Composes channel synthesis, acquisition, and estimation into seeded trials;
sweeps SNR/bits/grid axes; and runs the model-mismatch, iteration-census,
and CV-probe experiments.  Every trial's generator is derived from
(master seed, sweep point, trial index), so results are independent of
worker count and reruns are byte-identical.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channel import Channel, PathParams, SystemConfig, build_channel, sample_paths
from .cvprobe import CvProbeConfig, concavity_probe, fcv_lattice
from .estimator import EstimateState, GridSpec, fcfgs_cv, nfcfgs_cv, reconstruct_h
from .frontend import (
    QuantizedObservation,
    SensingOperator,
    assemble_sensing,
    build_combiners,
    design_training,
    make_quantizer,
    partition_cv,
    quantize,
    simulate_rx,
)

ESTIMATORS = {"nfcfgs": nfcfgs_cv, "fcfgs": fcfgs_cv}


def power_profile(K: int, snr: float, step_db: float = 0.0) -> tuple[float, ...]:
    """Per-user powers with ratios of step_db*(k-1) dB whose mean is the SNR."""
    ratios = 10 ** (step_db * np.arange(K) / 10.0)
    rho_1 = K * snr / ratios.sum()
    return tuple(float(rho_1 * r) for r in ratios)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a base system, sweep axes, and trial/seed bookkeeping."""

    base: SystemConfig
    snr_db: tuple[float, ...] = (0.0,)
    bits: tuple[int | None, ...] = (None,)
    grids: tuple[tuple[int, int], ...] = ()  # (res_angle, res_delay) axis; () = base's
    estimators: tuple[str, ...] = ("nfcfgs",)
    trials: int = 50
    aoas: tuple[float, ...] = ()  # deterministic AoAs for the mismatch experiment
    power_step_db: float = 0.0
    seed: int = 0
    workers: int = 1

    def to_json(self) -> str:
        doc = dataclasses.asdict(self)
        doc["base"] = dataclasses.asdict(self.base)
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        base = doc.pop("base")
        for key in ("paths", "powers"):
            base[key] = tuple(base[key])
        doc["base"] = SystemConfig(**base)
        for key in ("snr_db", "bits", "estimators", "aoas"):
            if key in doc:
                doc[key] = tuple(doc[key])
        if "grids" in doc:
            doc["grids"] = tuple(tuple(g) for g in doc["grids"])
        return cls(**doc)


@dataclass
class Scene:
    """One realization shared by paired estimator runs."""

    cfg: SystemConfig
    channel: Channel
    op: SensingOperator
    obs: QuantizedObservation


def trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, point, trial)))


def make_scene(
    cfg: SystemConfig,
    rng: np.random.Generator,
    paths: list[PathParams] | None = None,
) -> Scene:
    """Sample paths -> channel -> training/combiners -> AWGN -> quantize -> split."""
    if paths is None:
        paths = sample_paths(cfg, rng)
    channel = build_channel(paths, cfg)
    op = assemble_sensing(design_training(cfg), build_combiners(cfg, rng), cfg)
    y = simulate_rx(op, channel.h, rng)
    obs = quantize(y, make_quantizer(cfg)).with_partition(partition_cv(cfg))
    return Scene(cfg=cfg, channel=channel, op=op, obs=obs)


def estimate_scene(scene: Scene, kind: str, grid: GridSpec | None = None, **kwargs) -> tuple[EstimateState, dict]:
    """Run one estimator on a prebuilt scene and score it against the truth."""
    model = "narrowband" if kind == "narrowband" else "wideband"
    fn = nfcfgs_cv if kind in ("nfcfgs", "narrowband") else ESTIMATORS[kind]
    t0 = time.perf_counter()
    state = fn(scene.obs, scene.op, grid, model=model, **kwargs)
    wall = time.perf_counter() - t0
    h = scene.channel.h
    h_hat = reconstruct_h(state, scene.cfg)
    se = float(np.linalg.norm(h_hat - h) ** 2)
    norm = float(np.linalg.norm(h) ** 2)
    row = {
        "estimator": kind,
        "se": se,
        "nmse": se / norm if norm > 0 else float("nan"),
        "degenerate": norm == 0.0,
        "iterations": state.n_iterations,
        "paths_found": len(state.paths),
        "wall_time_s": wall,
    }
    return state, row


def run_trial(cfg: SystemConfig, kind: str, rng: np.random.Generator, **kwargs) -> dict:
    scene = make_scene(cfg, rng)
    _, row = estimate_scene(scene, kind, **kwargs)
    return row


def _config_at(ecfg: ExperimentConfig, snr_db: float, bits: int | None, grid=None) -> SystemConfig:
    powers = power_profile(ecfg.base.K, 10 ** (snr_db / 10.0), ecfg.power_step_db)
    cfg = replace(ecfg.base, powers=powers, bits=bits)
    if grid is not None:
        cfg = replace(cfg, res_angle=grid[0], res_delay=grid[1])
    return cfg


def _sweep_points(ecfg: ExperimentConfig):
    grids = ecfg.grids or ((ecfg.base.res_angle, ecfg.base.res_delay),)
    points = []
    for snr_db in ecfg.snr_db:
        for bits in ecfg.bits:
            for grid in grids:
                points.append((snr_db, bits, grid))
    return points


def _nmse_point(args):
    ecfg, index, (snr_db, bits, grid) = args
    cfg = _config_at(ecfg, snr_db, bits, grid)
    per_est: dict[str, list[dict]] = {k: [] for k in ecfg.estimators}
    for t in range(ecfg.trials):
        rng = trial_rng(ecfg.seed, index, t)
        scene = make_scene(cfg, rng)
        for kind in ecfg.estimators:
            _, row = estimate_scene(scene, kind)
            per_est[kind].append(row)
    out = []
    for kind, rows in per_est.items():
        nmse = np.array([r["nmse"] for r in rows])
        iters = np.array([r["iterations"] for r in rows])
        out.append(
            {
                "snr_db": snr_db,
                "bits": -1 if bits is None else bits,
                "res_angle": grid[0],
                "res_delay": grid[1],
                "estimator": kind,
                "trials": ecfg.trials,
                "nmse_mean": float(nmse.mean()),
                "nmse_median": float(np.median(nmse)),
                "nmse_mean_db": float(10 * np.log10(nmse.mean())),
                "nmse_median_db": float(10 * np.log10(np.median(nmse))),
                "iterations_mean": float(iters.mean()),
                "wall_time_s": float(sum(r["wall_time_s"] for r in rows)),
            }
        )
    return index, out


def _run_points(ecfg: ExperimentConfig, worker):
    points = _sweep_points(ecfg)
    jobs = [(ecfg, i, p) for i, p in enumerate(points)]
    if ecfg.workers > 1:
        with ProcessPoolExecutor(max_workers=ecfg.workers) as pool:
            results = list(pool.map(worker, jobs))
    else:
        results = [worker(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    table = []
    for _, rows in results:
        table.extend(rows)
    return table


def nmse_sweep(ecfg: ExperimentConfig) -> list[dict]:
    """Mean/median NMSE over the (SNR, bits, grid) Cartesian sweep."""
    return _run_points(ecfg, _nmse_point)


def mismatch_experiment(ecfg: ExperimentConfig) -> list[dict]:
    """NMSE degradation of the narrowband-model estimator at fixed AoAs.

    Both estimators consume identical channel/noise/quantizer realizations;
    only the atom dictionary differs.  Degradation is the ratio of mean
    NMSEs (mismatched over matched).
    """
    if not ecfg.aoas:
        raise ValueError("mismatch experiment needs deterministic AoAs")
    table = []
    for index, (snr_db, bits, grid) in enumerate(_sweep_points(ecfg)):
        cfg = _config_at(ecfg, snr_db, bits, grid)
        for a_idx, aoa in enumerate(ecfg.aoas):
            nmse_wb, nmse_nb = [], []
            for t in range(ecfg.trials):
                rng = trial_rng(ecfg.seed, 1_000_000 * (a_idx + 1) + index, t)
                paths = [
                    PathParams(gain=p.gain, aoa=aoa, delay=p.delay, user=p.user)
                    for p in sample_paths(cfg, rng)
                ]
                scene = make_scene(cfg, rng, paths=paths)
                _, row_wb = estimate_scene(scene, "nfcfgs")
                _, row_nb = estimate_scene(scene, "narrowband")
                nmse_wb.append(row_wb["nmse"])
                nmse_nb.append(row_nb["nmse"])
            ratio = float(np.mean(nmse_nb) / np.mean(nmse_wb))
            table.append(
                {
                    "snr_db": snr_db,
                    "bits": -1 if bits is None else bits,
                    "aoa": float(aoa),
                    "trials": ecfg.trials,
                    "nmse_matched": float(np.mean(nmse_wb)),
                    "nmse_mismatched": float(np.mean(nmse_nb)),
                    "degradation": ratio,
                    "degradation_db": float(10 * np.log10(ratio)),
                }
            )
    return table


def iteration_census(ecfg: ExperimentConfig) -> list[dict]:
    """Mean outer-iteration counts of both greedy variants per sweep point."""
    table = []
    for index, (snr_db, bits, grid) in enumerate(_sweep_points(ecfg)):
        cfg = _config_at(ecfg, snr_db, bits, grid)
        counts = {"nfcfgs": [], "fcfgs": []}
        for t in range(ecfg.trials):
            rng = trial_rng(ecfg.seed, index, t)
            scene = make_scene(cfg, rng)
            for kind in counts:
                state, _ = estimate_scene(scene, kind)
                counts[kind].append(state.n_iterations)
        table.append(
            {
                "snr_db": snr_db,
                "bits": -1 if bits is None else bits,
                "res_angle": grid[0],
                "res_delay": grid[1],
                "trials": ecfg.trials,
                "iterations_nfcfgs": float(np.mean(counts["nfcfgs"])),
                "iterations_fcfgs": float(np.mean(counts["fcfgs"])),
            }
        )
    return table


def cvprobe_experiment(ecfg: ExperimentConfig, out_dir: Path) -> list[dict]:
    """Lattice + concavity probe per ADC resolution; writes fcv_lattice.csv."""
    rng = np.random.default_rng(ecfg.seed)
    lattice_rows = []
    table = []
    for bits in ecfg.bits:
        probe = CvProbeConfig(h_real=(5.0, 5.0), bits=1 if bits is None else bits, n_samples=100_000)
        rows = fcv_lattice(probe, rng)
        for r in rows:
            r = dict(r)
            r["bits"] = probe.bits
            lattice_rows.append(r)
        report = concavity_probe(probe, rng)
        best = max(rows, key=lambda r: r["fcv"])
        table.append(
            {
                "bits": probe.bits,
                "argmax_h1": best["h1"],
                "argmax_h2": best["h2"],
                "fcv_at_argmax": best["fcv"],
                "concavity_violations": report.n_violations,
            }
        )
    write_csv(lattice_rows, Path(out_dir) / "fcv_lattice.csv")
    return table


# -----------------------------------------------------------------------------
# Result emission
# -----------------------------------------------------------------------------

_TIMING_COLUMNS = {"wall_time_s"}


def build_fingerprint() -> str:
    """Short content hash of the package sources (stable across runs)."""
    pkg = Path(__file__).parent
    digest = hashlib.sha256()
    for path in sorted(pkg.glob("*.py")) + sorted(pkg.glob("*.pyx")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:12]


def _format_cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_columns(table: list[dict]) -> list[str]:
    cols: list[str] = []
    for row in table:
        for key in row:
            if key not in cols:
                cols.append(key)
    return cols


def write_csv(table: list[dict], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = table_columns(table)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in table:
        writer.writerow([_format_cell(row.get(c, "")) for c in cols])
    path.write_text(buf.getvalue())


def emit_results(table: list[dict], out_dir, ecfg: ExperimentConfig | None = None, experiment: str = "") -> None:
    """Write results.csv (stable columns, full precision) and results.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(table, out_dir / "results.csv")
    doc = {
        "experiment": experiment,
        "fingerprint": build_fingerprint(),
        "config": json.loads(ecfg.to_json()) if ecfg is not None else None,
        "rows": table,
    }
    (out_dir / "results.json").write_text(json.dumps(doc, indent=2))


def load_results(out_dir) -> list[dict]:
    doc = json.loads((Path(out_dir) / "results.json").read_text())
    return doc["rows"]


def strip_timing(csv_text: str) -> str:
    """Drop wall-time columns for byte-identity comparisons."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    header = rows[0]
    keep = [i for i, c in enumerate(header) if c not in _TIMING_COLUMNS]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([row[i] for i in keep])
    return buf.getvalue()
