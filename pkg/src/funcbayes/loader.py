"""Dataset ingestion and draw storage.

Delimited datasets have one header row. For scalar outcomes the columns are:
outcome first, an optional ``censor`` column, scalar covariates (any header
that does not parse as a number), then functional columns whose headers are
their grid values. Functional-response datasets have no outcome column.

Draws are stored as ``draws.bin``:

    8 bytes   magic b"FBDRAWS1"
    uint32    number of dimensions (3)
    uint64    chains, draws per chain, parameters
    float64   values, row-major, little-endian

next to ``manifest.json`` holding the layout and everything needed to map
draws back to curves without refitting.
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from .basis import build_spline_system
from .errors import IngestError
from .layout import ParamLayout
from .pipeline import FitResult
from .types import FosrDataset, FpcaFit, FunctionalDataset, HazardBasis, PosteriorDraws, ReparamMap, SplineSpec

logger = logging.getLogger(__name__)

DRAWS_MAGIC = b"FBDRAWS1"
DRAWS_FILE = "draws.bin"
MANIFEST_FILE = "manifest.json"
CENSOR_COLUMN = "censor"


@dataclass(frozen=True)
class DatasetSchema:
    functional_response: bool = False
    censor_column: str = CENSOR_COLUMN
    require_censor: bool = False


def _is_number(label: str) -> bool:
    try:
        float(label)
    except ValueError:
        return False
    return True


def _read_table(path: Union[str, Path], sep: str) -> pd.DataFrame:
    data_path = Path(path)
    if not data_path.exists():
        raise FileNotFoundError(f"dataset not found: {data_path}")
    try:
        frame = pd.read_csv(data_path, sep=sep, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise IngestError("no data rows") from exc
    if frame.empty:
        raise IngestError("no data rows")
    return frame


_MISSING_TOKENS = ["", "na", "nan", "null"]


def _numeric(frame: pd.DataFrame) -> np.ndarray:
    text = frame.apply(lambda column: column.astype(str).str.strip())
    missing = text.apply(lambda column: column.str.lower().isin(_MISSING_TOKENS)).to_numpy()
    values = text.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = missing | ~np.isfinite(values)
    if not bad.any():
        return values
    # first offending cell in column order
    j, i = np.argwhere(bad.T)[0]
    column, row, cell = str(frame.columns[j]), int(i) + 1, text.iat[i, j]
    if missing[i, j]:
        raise IngestError(f"missing value at row {row}, column {column!r}", row=row, column=column)
    if np.isnan(values[i, j]):
        raise IngestError(f"non-numeric value {cell!r} at row {row}, column {column!r}", row=row, column=column)
    raise IngestError(f"non-finite value at row {row}, column {column!r}", row=row, column=column)


def _grid(columns: List[str]) -> np.ndarray:
    if len(columns) < 2:
        raise IngestError(f"need at least 2 functional columns, got {len(columns)}")
    grid = np.array([float(c) for c in columns])
    bad = np.flatnonzero(np.diff(grid) <= 0)
    if bad.size:
        column = columns[bad[0] + 1]
        raise IngestError(f"functional column headers are not strictly increasing at {column!r}", column=column)
    return grid


def parse_dataset(
    path: Union[str, Path], schema: Optional[DatasetSchema] = None, sep: str = ","
) -> Union[FunctionalDataset, FosrDataset]:
    schema = schema or DatasetSchema()
    frame = _read_table(path, sep)
    columns = [str(c).strip() for c in frame.columns]
    frame.columns = columns
    functional = [c for c in columns if _is_number(c)]
    others = [c for c in columns if not _is_number(c)]
    grid = _grid(functional)

    if schema.functional_response:
        y = _numeric(frame[functional])
        x = _numeric(frame[others]) if others else np.zeros((len(frame), 0))
        logger.info("loaded %d curves on %d grid points with %d predictors", y.shape[0], grid.size, len(others))
        return FosrDataset(y=y, x=x, grid=grid, x_names=others)

    if not others:
        raise IngestError("no outcome column: the first column header must not be numeric")
    outcome, rest = others[0], others[1:]
    if columns[0] != outcome:
        raise IngestError(f"outcome column must come first, found {columns[0]!r}", column=columns[0])
    censor = None
    if schema.censor_column in rest:
        rest = [c for c in rest if c != schema.censor_column]
        censor = _numeric(frame[[schema.censor_column]])[:, 0]
        bad = np.flatnonzero(~np.isin(censor, (0.0, 1.0)))
        if bad.size:
            i = int(bad[0])
            raise IngestError(
                f"censor value {censor[i]:g} at row {i + 1} is not 0 or 1", row=i + 1, column=schema.censor_column
            )
        censor = censor.astype(int)
    elif schema.require_censor:
        raise IngestError(f"time-to-event models need a {schema.censor_column!r} column", column=schema.censor_column)

    y = _numeric(frame[[outcome]])[:, 0]
    z = _numeric(frame[rest]) if rest else np.zeros((len(frame), 0))
    w = _numeric(frame[functional])
    logger.info("loaded %d subjects, %d grid points, %d scalar covariates", y.size, grid.size, len(rest))
    return FunctionalDataset(y=y, w=w, grid=grid, z=z, censor=censor, z_names=rest)


def _grid_header(t: float) -> str:
    return repr(float(t))


def write_dataset(data: Union[FunctionalDataset, FosrDataset], path: Union[str, Path], sep: str = ",") -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    columns: Dict[str, np.ndarray] = {}
    if isinstance(data, FosrDataset):
        names = list(data.x_names) or [f"x{j}" for j in range(data.x.shape[1])]
        for j, name in enumerate(names):
            columns[name] = data.x[:, j]
        for m, t in enumerate(data.grid):
            columns[_grid_header(t)] = data.y[:, m]
    else:
        columns["y"] = data.y
        if data.censor is not None:
            columns[CENSOR_COLUMN] = np.asarray(data.censor, dtype=int)
        names = list(data.z_names) or [f"z{j}" for j in range(data.num_scalar)]
        for j, name in enumerate(names):
            columns[name] = data.z[:, j]
        for m, t in enumerate(data.grid):
            columns[_grid_header(t)] = data.w[:, m]
    frame = pd.DataFrame(columns)
    frame.to_csv(out, sep=sep, index=False, float_format=None)
    # pandas writes float64 with the shortest repr that round-trips
    return out


def save_draws(draws: np.ndarray, path: Union[str, Path]) -> Path:
    draws = np.ascontiguousarray(draws, dtype="<f8")
    if draws.ndim != 3:
        raise IngestError(f"draws must be chains x draws x dim, got shape {draws.shape}")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("wb") as f:
        f.write(DRAWS_MAGIC)
        f.write(struct.pack("<I", draws.ndim))
        f.write(struct.pack("<3Q", *draws.shape))
        f.write(draws.tobytes(order="C"))
    return out


def load_draws(path: Union[str, Path]) -> np.ndarray:
    data_path = Path(path)
    if not data_path.exists():
        raise FileNotFoundError(f"draws file not found: {data_path}")
    blob = data_path.read_bytes()
    if blob[:8] != DRAWS_MAGIC:
        raise IngestError(f"{data_path} is not a draws file")
    (ndims,) = struct.unpack_from("<I", blob, 8)
    if ndims != 3:
        raise IngestError(f"unsupported draws rank {ndims}")
    shape = struct.unpack_from("<3Q", blob, 12)
    offset = 12 + 8 * ndims
    expected = int(np.prod(shape)) * 8
    if len(blob) - offset != expected:
        raise IngestError(f"draws file truncated: expected {expected} payload bytes, got {len(blob) - offset}")
    return np.frombuffer(blob, dtype="<f8", offset=offset).reshape(shape).astype(float)


def _array(value: Any) -> Optional[List]:
    return None if value is None else np.asarray(value).tolist()


def build_manifest(result: FitResult) -> Dict[str, Any]:
    draws = result.draws
    manifest: Dict[str, Any] = {
        "model": result.model,
        "layout": draws.layout.to_record(),
        "shape": list(draws.draws.shape),
        "spline": {
            "kind": result.system.spec.kind,
            "num_basis": result.system.spec.num_basis,
            "domain": list(result.system.spec.domain),
            "rank": result.system.rank,
            "knots": _array(result.system.knots),
        },
        "grid": _array(result.grid),
        "basis_eval": _array(result.system.eval),
        "z_names": list(result.z_names),
        "x_names": list(result.x_names),
        "sampler": {
            "divergences": _array(draws.divergences),
            "accept_stat": _array(draws.accept_stat),
            "step_size": _array(draws.step_size),
            "tree_depth": _array(draws.tree_depth),
            "warnings": list(draws.warnings),
            "elapsed_sec": result.elapsed_sec,
        },
    }
    if result.rmap is not None:
        manifest["reparam"] = {"U": _array(result.rmap.U), "v_diag": _array(result.rmap.v_diag), "rank": result.rmap.rank}
    if result.hazard is not None:
        manifest["hazard"] = {
            "df": result.hazard.df,
            "boundary": list(result.hazard.boundary),
            "knots": _array(result.hazard.knots),
        }
    if result.fpca is not None:
        fpca = result.fpca
        manifest["fpca"] = {
            "mean": _array(fpca.mean),
            "efunctions": _array(fpca.efunctions),
            "evalues": _array(fpca.evalues),
            "pve": fpca.pve,
            "noise_var": fpca.noise_var,
        }
    return manifest


def save_fit(result: FitResult, out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_draws(result.draws.draws, out / DRAWS_FILE)
    with (out / MANIFEST_FILE).open("w", encoding="utf-8") as f:
        json.dump(build_manifest(result), f, indent=2)
    logger.info("saved %s draws to %s", result.model, out)
    return out


def load_fit(out_dir: Union[str, Path]) -> FitResult:
    out = Path(out_dir)
    manifest_path = out / MANIFEST_FILE
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    with manifest_path.open("r", encoding="utf-8") as f:
        manifest = json.load(f)
    values = load_draws(out / DRAWS_FILE)
    layout = ParamLayout.from_record(manifest["layout"])
    if values.shape[2] != layout.size:
        raise IngestError(f"draws have {values.shape[2]} parameters, manifest layout has {layout.size}")

    sampler = manifest.get("sampler", {})
    draws = PosteriorDraws(
        draws=values,
        layout=layout,
        divergences=np.asarray(sampler.get("divergences") or np.zeros(values.shape[0]), dtype=int),
        accept_stat=np.asarray(sampler.get("accept_stat") or np.full(values.shape[0], np.nan), dtype=float),
        step_size=np.asarray(sampler.get("step_size") or np.full(values.shape[0], np.nan), dtype=float),
        tree_depth=np.asarray(sampler["tree_depth"], dtype=float) if sampler.get("tree_depth") else None,
        warnings=list(sampler.get("warnings", [])),
    )

    spline = manifest["spline"]
    spec = SplineSpec(kind=spline["kind"], num_basis=int(spline["num_basis"]), domain=tuple(spline["domain"]))
    system = build_spline_system(spec, np.asarray(manifest["grid"], dtype=float))

    rmap = None
    if "reparam" in manifest:
        rp = manifest["reparam"]
        rmap = ReparamMap(U=np.asarray(rp["U"], dtype=float), v_diag=np.asarray(rp["v_diag"], dtype=float), rank=int(rp["rank"]))

    hazard = None
    if "hazard" in manifest:
        hz = manifest["hazard"]
        df = int(hz["df"])
        hazard = HazardBasis(
            df=df,
            boundary=tuple(hz["boundary"]),
            knots=np.asarray(hz["knots"], dtype=float),
            times=np.zeros(0),
            m_eval=np.zeros((0, df)),
            i_eval=np.zeros((0, df)),
        )

    fpca = None
    if "fpca" in manifest:
        fp = manifest["fpca"]
        efunctions = np.asarray(fp["efunctions"], dtype=float)
        fpca = FpcaFit(
            mean=np.asarray(fp["mean"], dtype=float),
            efunctions=efunctions,
            evalues=np.asarray(fp["evalues"], dtype=float),
            scores=np.zeros((0, efunctions.shape[0])),
            pve=float(fp["pve"]),
            noise_var=float(fp["noise_var"]),
        )

    return FitResult(
        model=manifest["model"],
        draws=draws,
        system=system,
        rmap=rmap,
        hazard=hazard,
        fpca=fpca,
        z_names=list(manifest.get("z_names", [])),
        x_names=list(manifest.get("x_names", [])),
        elapsed_sec=float(sampler.get("elapsed_sec", 0.0)),
    )
