"""File formats: dataset/matrix CSVs, truth JSON, draws directories.

All writers are atomic (temp file + rename) so a crashed run never leaves a
half-written artifact behind.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import Dataset, GraphicalMatrix, TwoLayerParams
from .errors import DataError
from .gibbs import PosteriorDraws, SamplerConfig


def _atomic_write(path: Path, write_fn) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    _atomic_write(Path(path), lambda fh: fh.write(text))


def write_json_atomic(path, obj) -> None:
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_dataset_csv(dataset: Dataset, path, header: bool = False) -> None:
    lines = []
    if header:
        lines.append(",".join(f"y{j + 1}" for j in range(dataset.p)))
    for row in dataset.values:
        lines.append(",".join(str(int(v)) for v in row))
    write_text_atomic(path, "\n".join(lines) + "\n")


def read_dataset_csv(path, header: bool = False, cardinalities=None) -> Dataset:
    """Dataset from a CSV of integer category codes.

    Cardinalities are either declared or inferred as each column's maximum.
    A malformed cell raises DataError naming its row and column.
    """
    rows = []
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if header:
        lines = lines[1:]
    if not lines:
        raise DataError(f"{path}: no data rows")
    for r, line in enumerate(lines, start=1):
        cells = line.split(",")
        parsed = []
        for c, cell in enumerate(cells, start=1):
            try:
                v = int(cell.strip())
            except ValueError:
                raise DataError(
                    f"{path}: row {r}, column {c}: {cell.strip()!r} is not an integer"
                ) from None
            parsed.append(v)
        rows.append(parsed)
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: rows have inconsistent column counts {sorted(widths)}")
    values = np.asarray(rows, dtype=np.int64)
    if cardinalities is None:
        cardinalities = tuple(int(v) for v in values.max(axis=0))
    bad = np.argwhere((values < 1) | (values > np.asarray(cardinalities)[None, :]))
    if bad.size:
        r, c = bad[0]
        raise DataError(
            f"{path}: row {int(r) + 1}, column {int(c) + 1}: value "
            f"{int(values[r, c])} outside 1..{cardinalities[int(c)]}"
        )
    return Dataset(values=values, cardinalities=tuple(cardinalities))


def write_matrix_csv(matrix, path) -> None:
    """Binary matrix as 0/1 CSV without header."""
    entries = matrix.entries if hasattr(matrix, "entries") else np.asarray(matrix)
    lines = [",".join(str(int(v)) for v in row) for row in entries]
    write_text_atomic(path, "\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for r, line in enumerate((ln.strip() for ln in fh), start=1):
            if not line:
                continue
            cells = line.split(",")
            parsed = []
            for c, cell in enumerate(cells, start=1):
                v = cell.strip()
                if v not in ("0", "1"):
                    raise DataError(f"{path}: row {r}, column {c}: {v!r} is not 0/1")
                parsed.append(int(v))
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: empty matrix")
    return np.asarray(rows, dtype=np.int8)


def truth_to_dict(truth: TwoLayerParams) -> dict:
    return {
        "graph": truth.graph.entries.astype(int).tolist(),
        "beta0": truth.beta0.tolist(),
        "beta": truth.beta.tolist(),
        "tau": truth.tau.tolist(),
        "eta": truth.eta.tolist(),
        "meta": dict(truth.meta),
    }


def truth_from_dict(doc: dict) -> TwoLayerParams:
    return TwoLayerParams(
        graph=GraphicalMatrix(np.asarray(doc["graph"], dtype=np.int8)),
        beta0=np.asarray(doc["beta0"], dtype=np.float64),
        beta=np.asarray(doc["beta"], dtype=np.float64),
        tau=np.asarray(doc["tau"], dtype=np.float64),
        eta=np.asarray(doc["eta"], dtype=np.float64),
        meta=dict(doc.get("meta", {})),
    )


def write_truth_json(truth: TwoLayerParams, path) -> None:
    write_json_atomic(path, truth_to_dict(truth))


def read_truth_json(path) -> TwoLayerParams:
    with open(path) as fh:
        return truth_from_dict(json.load(fh))


_FLOAT_BLOCKS = ("beta0", "beta", "sigma2", "gamma", "tau", "eta", "loglik", "csp_pi", "csp_v")
_INT_BLOCKS = ("G", "A", "Z", "csp_zind")


def write_draws(draws: PosteriorDraws, outdir) -> None:
    """Per-block CSVs (one retained draw per row) plus a manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    shapes = {}
    for name in _FLOAT_BLOCKS + _INT_BLOCKS:
        arr = getattr(draws, name)
        if arr is None:
            continue
        shapes[name] = list(arr.shape)
        flat = arr.reshape(arr.shape[0], -1)
        fmt = "%d" if name in _INT_BLOCKS else "%.10g"
        rows = "\n".join(",".join(fmt % v for v in row) for row in flat)
        write_text_atomic(outdir / f"{name}.csv", rows + "\n")
    manifest = {
        "config": dataclasses.asdict(draws.config),
        "shapes": shapes,
        "meta": {
            k: v
            for k, v in draws.meta.items()
            if isinstance(v, (int, float, str, bool, list, dict))
        },
    }
    write_json_atomic(outdir / "manifest.json", manifest)


def read_draws(outdir) -> PosteriorDraws:
    outdir = Path(outdir)
    with open(outdir / "manifest.json") as fh:
        manifest = json.load(fh)
    config = SamplerConfig(**manifest["config"])
    blocks = {}
    for name, shape in manifest["shapes"].items():
        dtype = np.int64 if name in _INT_BLOCKS else np.float64
        flat = np.loadtxt(outdir / f"{name}.csv", delimiter=",", dtype=dtype, ndmin=2)
        blocks[name] = flat.reshape(shape)
    for opt in ("csp_pi", "csp_zind", "csp_v"):
        blocks.setdefault(opt, None)
    blocks["gamma"] = blocks["gamma"].ravel()
    blocks["loglik"] = blocks["loglik"].ravel()
    return PosteriorDraws(config=config, meta=manifest.get("meta", {}), **blocks)
