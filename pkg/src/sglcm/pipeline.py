"""End-to-end runs: simulate -> fit -> evaluate, single or replicated.

Each stage writes its outputs plus a manifest that captures every resolved
setting (seeds included), so any directory can be reproduced bit-for-bit
from its manifest alone.  Replications derive independent per-replicate
seeds from the root seed and can run on a bounded worker pool; results do
not depend on the worker count.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as sio
from .core import TwoLayerParams
from .errors import InputError
from .gibbs import PosteriorDraws, SamplerConfig, run_chain
from .postproc import EvalReport, evaluate_run
from .simulate import reference_truth, simulate_two_layer

PACKAGE_VERSION = "0.1.0"


def _manifest(command: str, resolved: dict, runtime: float) -> dict:
    return {
        "command": command,
        "resolved": resolved,
        "package_version": PACKAGE_VERSION,
        "runtime_seconds": runtime,
    }


def resolve_truth(spec: str | TwoLayerParams) -> TwoLayerParams:
    """Accepts the built-in name 'reference' or a truth JSON path."""
    if isinstance(spec, TwoLayerParams):
        return spec
    if spec == "reference":
        return reference_truth()
    path = Path(spec)
    if not path.exists():
        raise InputError(f"truth {spec!r} is neither 'reference' nor an existing file")
    return sio.read_truth_json(path)


def simulate_to_dir(truth_spec, n: int, seed: int, outdir, header: bool = False, jobs: int = 1) -> Path:
    """Simulate a two-layer dataset and write dataset/latents/truth files.

    Subject streams are split from the seed, so jobs > 1 chunking cannot
    change the result; the chunked path exists to exercise that contract.
    """
    t0 = time.perf_counter()
    outdir = Path(outdir)
    truth = resolve_truth(truth_spec)
    if jobs > 1 and n >= 4:
        bounds = np.linspace(0, n, jobs + 1, dtype=int)
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(
                ex.map(
                    _simulate_chunk,
                    [(truth_spec if isinstance(truth_spec, str) else sio.truth_to_dict(truth), seed, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])],
                )
            )
        values = np.vstack([p[0] for p in parts])
        alpha = np.vstack([p[1] for p in parts])
        z = np.concatenate([p[2] for p in parts])
        from .core import Dataset

        sim_dataset = Dataset(values=values, cardinalities=(truth.d,) * truth.p)
        sim_alpha, sim_z = alpha, z
    else:
        sim = simulate_two_layer(truth, n=n, seed=seed)
        sim_dataset, sim_alpha, sim_z = sim.dataset, sim.latents_alpha, sim.latents_z
    sio.write_dataset_csv(sim_dataset, outdir / "dataset.csv", header=header)
    sio.write_matrix_csv(sim_alpha, outdir / "alpha.csv")
    sio.write_text_atomic(
        outdir / "z.csv", "\n".join(str(int(v)) for v in sim_z) + "\n"
    )
    sio.write_truth_json(truth, outdir / "truth.json")
    resolved = {
        "truth": truth_spec if isinstance(truth_spec, str) else "inline",
        "n": n,
        "seed": seed,
        "header": header,
    }
    sio.write_json_atomic(
        outdir / "manifest.json",
        _manifest("simulate", resolved, time.perf_counter() - t0),
    )
    return outdir


def _simulate_chunk(args):
    """Subject range [lo, hi) of the full simulation; streams are per subject."""
    truth_doc, seed, lo, hi = args
    truth = resolve_truth(truth_doc) if isinstance(truth_doc, str) else sio.truth_from_dict(truth_doc)
    # Generate per-subject rows with the same spawn keys as the full run.
    from .simulate import _categorical_rows, _observed_categories, _subject_uniforms

    K1, p = truth.K1, truth.p
    rows = hi - lo
    u = np.empty((rows, 1 + K1 + p))
    for off, i in enumerate(range(lo, hi)):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        u[off] = np.random.default_rng(ss).random(1 + K1 + p)
    z = _categorical_rows(np.broadcast_to(truth.tau, (rows, truth.B)), u[:, 0])
    alpha = (u[:, 1 : 1 + K1] < truth.eta[:, z - 1].T).astype(np.int8)
    y = _observed_categories(truth.graph.entries, truth.beta0, truth.beta, alpha, u[:, 1 + K1 :])
    return y, alpha, z


def fit_to_dir(data_path, config: SamplerConfig, outdir, header: bool = False, cardinality: int | None = None) -> PosteriorDraws:
    """Fit the sampler to a dataset CSV and write the draws directory."""
    t0 = time.perf_counter()
    outdir = Path(outdir)
    dataset = sio.read_dataset_csv(data_path, header=header)
    if cardinality is not None:
        dataset = sio.read_dataset_csv(
            data_path, header=header, cardinalities=(cardinality,) * dataset.p
        )
    draws = run_chain(dataset, config)
    sio.write_draws(draws, outdir)
    resolved = {
        "data": str(data_path),
        "header": header,
        "cardinality": cardinality,
        "config": dataclasses.asdict(config),
    }
    sio.write_json_atomic(
        outdir / "fit_manifest.json",
        _manifest("fit", resolved, time.perf_counter() - t0),
    )
    return draws


def evaluate_to_file(draws_dir, truth_path, out_path) -> EvalReport:
    """Evaluate a draws directory against a truth file; write the report."""
    draws = sio.read_draws(draws_dir)
    truth = sio.read_truth_json(truth_path)
    report = evaluate_run(draws, truth)
    sio.write_json_atomic(out_path, report.to_dict())
    return report


@dataclasses.dataclass(frozen=True)
class ReplicateResult:
    """Per-replicate reports plus quantile aggregates, per sample size."""

    n_values: tuple[int, ...]
    replications: int
    reports: dict  # n -> list[EvalReport]
    aggregates: dict  # n -> {metric: {median, q25, q75}}

    def to_dict(self) -> dict:
        return {
            "n_values": list(self.n_values),
            "replications": self.replications,
            "reports": {
                str(n): [r.to_dict() for r in reps] for n, reps in self.reports.items()
            },
            "aggregates": {str(n): agg for n, agg in self.aggregates.items()},
        }


_METRICS = (
    "g_error_matrix",
    "g_error_row",
    "g_error_entry",
    "rmse_beta_active",
    "rmse_beta_all",
    "rmse_beta0",
    "rmse_eta",
    "k_star",
)


def _metric_value(report: EvalReport, metric: str):
    if metric.startswith("rmse_"):
        return report.rmse[metric[len("rmse_") :]]
    return getattr(report, metric)


def replicate_seeds(root_seed: int, n: int, rep: int) -> tuple[int, int]:
    """Independent (simulation, chain) seeds for one replicate."""
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=(n, rep))
    sim_seed, chain_seed = (int(v) for v in ss.generate_state(2))
    return sim_seed, chain_seed


def _one_replicate(args) -> tuple[int, int, dict]:
    truth_doc, n, rep, root_seed, config_kwargs = args
    truth = sio.truth_from_dict(truth_doc)
    sim_seed, chain_seed = replicate_seeds(root_seed, n, rep)
    sim = simulate_two_layer(truth, n=n, seed=sim_seed)
    config = SamplerConfig(seed=chain_seed, **config_kwargs)
    draws = run_chain(sim.dataset, config)
    report = evaluate_run(draws, truth)
    return n, rep, report.to_dict()


def replicate(
    truth_spec,
    n_values,
    replications: int,
    config_kwargs: dict,
    root_seed: int,
    jobs: int = 1,
    outdir=None,
) -> ReplicateResult:
    """Run R independent simulate->fit->evaluate pipelines per sample size.

    Failures propagate with their (n, replicate) indices.  Aggregates are
    the median and quartiles of each metric across replications.
    """
    truth = resolve_truth(truth_spec)
    truth_doc = sio.truth_to_dict(truth)
    tasks = [
        (truth_doc, int(n), rep, root_seed, dict(config_kwargs))
        for n in n_values
        for rep in range(replications)
    ]
    results: dict[int, list] = {int(n): [None] * replications for n in n_values}
    try:
        if jobs > 1:
            with ProcessPoolExecutor(jobs) as ex:
                for n, rep, rep_dict in ex.map(_one_replicate, tasks):
                    results[n][rep] = rep_dict
        else:
            for task in tasks:
                n, rep, rep_dict = _one_replicate(task)
                results[n][rep] = rep_dict
    except Exception as err:
        done = [(n, r) for n, reps in results.items() for r, v in enumerate(reps) if v is None]
        raise RuntimeError(f"replicate failed; incomplete (n, rep) pairs: {done}") from err

    reports = {
        n: [_report_from_dict(d) for d in reps] for n, reps in results.items()
    }
    aggregates = {}
    for n, reps in reports.items():
        agg = {}
        for metric in _METRICS:
            vals = [v for v in (_metric_value(r, metric) for r in reps) if v is not None]
            if not vals:
                continue
            q25, med, q75 = np.percentile(vals, [25, 50, 75])
            agg[metric] = {"q25": float(q25), "median": float(med), "q75": float(q75)}
        aggregates[n] = agg
    out = ReplicateResult(
        n_values=tuple(int(n) for n in n_values),
        replications=replications,
        reports=reports,
        aggregates=aggregates,
    )
    if outdir is not None:
        outdir = Path(outdir)
        sio.write_json_atomic(outdir / "replicate_report.json", out.to_dict())
        sio.write_text_atomic(outdir / "metrics_vs_n.csv", aggregate_csv(out))
        resolved = {
            "truth": truth_spec if isinstance(truth_spec, str) else "inline",
            "n_values": [int(n) for n in n_values],
            "replications": replications,
            "config": dict(config_kwargs),
            "root_seed": root_seed,
        }
        sio.write_json_atomic(
            outdir / "manifest.json", _manifest("replicate", resolved, 0.0)
        )
    return out


def _report_from_dict(d: dict) -> EvalReport:
    return EvalReport(
        g_error_matrix=d["g_error_matrix"],
        g_error_row=d["g_error_row"],
        g_error_entry=d["g_error_entry"],
        rmse=d["rmse"],
        k_star=d["k_star"],
        permutation=tuple(d["permutation"]),
        retained_columns=tuple(d["retained_columns"]),
        class_permutation=tuple(d["class_permutation"]),
        meta=d.get("meta", {}),
    )


def aggregate_csv(result: ReplicateResult) -> str:
    """Plot-ready long-format table: metric quantiles versus sample size."""
    lines = ["n,metric,q25,median,q75"]
    for n in result.n_values:
        for metric, q in result.aggregates[n].items():
            lines.append(
                f"{n},{metric},{q['q25']:.6g},{q['median']:.6g},{q['q75']:.6g}"
            )
    return "\n".join(lines) + "\n"
