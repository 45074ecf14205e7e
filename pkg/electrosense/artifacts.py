"""Run artifacts: atomic file writes, CSV/PGM/text codecs and the run manifest."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from electrosense.constants import PGM_MAXVAL
from electrosense.features import BandMask, GptMatrix, WaveletCoeffMatrix
from electrosense.imaging import BoundaryImage
from electrosense.sensing import MsrMatrix
from electrosense.types import TraceRow
from electrosense.wavelet import WaveletGrid

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

COEFF_HEADER = "n1,n2,np1,np2,value"
MASK_HEADER = "n1,n2,np1,np2"
GPT_HEADER = "a1,a2,b1,b2,value"
IMAGE_HEADER = "n1,n2,value"
TRACE_HEADER = "iteration,objective,residual,nnz"


class ArtifactFormatError(ValueError):
    """An artifact file does not have the expected layout."""


def fmt(value: float) -> str:
    return "%.17g" % value


def write_atomic(path: PathLike, data: Union[str, bytes]) -> Path:
    """Write to a temporary file next to ``path`` and rename it into place."""
    target = Path(path)
    target_dir = target.parent.resolve()
    target_dir.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=f".{target.name}_", suffix=".tmp", dir=target_dir)
    try:
        if isinstance(data, bytes):
            with os.fdopen(fd, "wb") as f:
                f.write(data)
        else:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
                f.write(data)
        os.replace(tmp_path, target)
    except Exception:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise
    logger.debug("Wrote %s", target)
    return target


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _lines(header: Optional[str], rows: Iterable[str]) -> str:
    body = list(rows)
    if header is not None:
        body.insert(0, header)
    return "\n".join(body) + "\n"


def _read_table(path: PathLike, header: str, columns: int) -> np.ndarray:
    with open(path, encoding="utf-8") as f:
        first = f.readline().strip()
        if first != header:
            raise ArtifactFormatError(f"{path}: expected header {header!r}, found {first!r}")
        rows = [line.strip() for line in f if line.strip()]
    if not rows:
        return np.zeros((0, columns))
    try:
        table = np.array([[float(v) for v in row.split(",")] for row in rows])
    except ValueError as e:
        raise ArtifactFormatError(f"{path}: {e}") from e
    if table.ndim != 2 or table.shape[1] != columns:
        raise ArtifactFormatError(f"{path}: expected {columns} columns per row")
    return table


def save_msr(path: PathLike, V: MsrMatrix) -> Path:
    """One CSV row per source, one column per receiver, no header."""
    return write_atomic(path, _lines(None, (",".join(fmt(v) for v in row) for row in V.values)))


def load_msr(path: PathLike, provenance: str = "file") -> MsrMatrix:
    with open(path, encoding="utf-8") as f:
        rows = [line.strip() for line in f if line.strip()]
    try:
        values = np.array([[float(v) for v in row.split(",")] for row in rows])
    except ValueError as e:
        raise ArtifactFormatError(f"{path}: {e}") from e
    if values.ndim != 2 or values.size == 0:
        raise ArtifactFormatError(f"{path}: MSR file must hold a rectangular non-empty matrix")
    return MsrMatrix(values=values, noisy=True, provenance=provenance)


def _pair_rows(grid: WaveletGrid, matrix: sp.spmatrix, with_values: bool) -> List[str]:
    coo = sp.csr_matrix(matrix)
    coo.sort_indices()
    coo = coo.tocoo()
    r1, r2 = grid.unravel(coo.row)
    c1, c2 = grid.unravel(coo.col)
    if with_values:
        return [
            f"{a},{b},{c},{d},{fmt(v)}"
            for a, b, c, d, v in zip(r1.tolist(), r2.tolist(), c1.tolist(), c2.tolist(), coo.data)
        ]
    return [f"{a},{b},{c},{d}" for a, b, c, d in zip(r1.tolist(), r2.tolist(), c1.tolist(), c2.tolist())]


def save_coeffs(path: PathLike, X: WaveletCoeffMatrix) -> Path:
    return write_atomic(path, _lines(COEFF_HEADER, _pair_rows(X.grid, X.matrix, True)))


def save_sparse_coeffs(path: PathLike, grid: WaveletGrid, matrix: sp.spmatrix) -> Path:
    return write_atomic(path, _lines(COEFF_HEADER, _pair_rows(grid, matrix, True)))


def load_coeffs(path: PathLike, grid: WaveletGrid) -> WaveletCoeffMatrix:
    """Rebuild a coefficient matrix on ``grid``; every index pair must belong to it."""
    table = _read_table(path, COEFF_HEADER, 5)
    idx = table[:, :4].astype(np.int64)
    lo1, lo2 = grid.lo
    hi1, hi2 = grid.hi
    inside = (
        (idx[:, [0, 2]] >= lo1).all(axis=1) & (idx[:, [0, 2]] <= hi1).all(axis=1)
        & (idx[:, [1, 3]] >= lo2).all(axis=1) & (idx[:, [1, 3]] <= hi2).all(axis=1)
    )
    if not inside.all():
        raise ArtifactFormatError(f"{path}: {int((~inside).sum())} index pair(s) outside the lattice")
    rows = grid.linear(idx[:, 0], idx[:, 1])
    cols = grid.linear(idx[:, 2], idx[:, 3])
    matrix = sp.csr_matrix((table[:, 4], (rows, cols)), shape=(grid.size, grid.size))
    matrix.sort_indices()
    active = np.zeros(grid.size, dtype=bool)
    active[rows] = True
    return WaveletCoeffMatrix(grid=grid, matrix=matrix, active=active)


def save_mask(path: PathLike, mask: BandMask) -> Path:
    return write_atomic(path, _lines(MASK_HEADER, _pair_rows(mask.grid, mask.matrix, False)))


def save_gpt(path: PathLike, indices: Sequence, entries: np.ndarray) -> Path:
    rows = [
        f"{a1},{a2},{b1},{b2},{fmt(entries[i, j])}"
        for i, (a1, a2) in enumerate(indices)
        for j, (b1, b2) in enumerate(indices)
    ]
    return write_atomic(path, _lines(GPT_HEADER, rows))


def save_gpt_matrix(path: PathLike, gpt: GptMatrix) -> Path:
    return save_gpt(path, gpt.indices, gpt.entries)


def save_image_csv(path: PathLike, img: BoundaryImage) -> Path:
    o1, o2 = img.origin
    n1, n2 = img.values.shape
    rows = [
        f"{i + o1},{j + o2},{fmt(img.values[i, j])}" for i in range(n1) for j in range(n2)
    ]
    return write_atomic(path, _lines(IMAGE_HEADER, rows))


def pgm_levels(values: np.ndarray) -> np.ndarray:
    """Intensities scaled to 0..65535, rows from top (largest x₂) to bottom."""
    peak = float(np.max(values)) if values.size else 0.0
    scaled = np.zeros(values.shape) if peak <= 0 else np.round(values / peak * PGM_MAXVAL)
    return np.clip(scaled, 0, PGM_MAXVAL).astype(np.uint16).T[::-1]


def save_pgm(path: PathLike, img: BoundaryImage, binary: bool = True) -> Path:
    levels = pgm_levels(img.values)
    height, width = levels.shape
    if binary:
        header = f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii")
        return write_atomic(path, header + levels.astype(">u2").tobytes())
    rows = (" ".join(str(v) for v in row) for row in levels.tolist())
    return write_atomic(path, _lines(f"P2\n{width} {height}\n{PGM_MAXVAL}", rows))


def read_pgm(path: PathLike) -> np.ndarray:
    """Pixel rows of a 16-bit P2 or P5 file as written by ``save_pgm``."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if len(parts) < 4 or parts[0] not in (b"P2", b"P5"):
        raise ArtifactFormatError(f"{path}: not a P2/P5 PGM file")
    width, height, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != PGM_MAXVAL:
        raise ArtifactFormatError(f"{path}: unsupported maxval {maxval}")
    if parts[0] == b"P5":
        payload = data[len(data) - 2 * width * height:]
        return np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.uint16)
    values = np.array(parts[4].split(), dtype=np.uint16) if len(parts) > 4 else np.array([])
    return values.reshape(height, width)


def save_values(path: PathLike, values: Sequence[float]) -> Path:
    return write_atomic(path, _lines(None, (fmt(v) for v in values)))


def save_trace(path: PathLike, trace: Sequence[TraceRow]) -> Path:
    rows = (
        f"{row['iteration']},{fmt(row['objective'])},{fmt(row['residual'])},{row['nnz']}"
        for row in trace
    )
    return write_atomic(path, _lines(TRACE_HEADER, rows))


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    return str(value)


def dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n"


def config_hash(settings: Dict[str, Any]) -> str:
    payload = json.dumps(settings, sort_keys=True, default=_jsonable).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


@dataclass
class RunManifest:
    """Deterministic record of one command; timings are kept in a sibling file."""

    command: str
    version: str
    config: Dict[str, Any]
    seed: int
    parameters: Dict[str, Any] = field(default_factory=dict)
    metrics: Dict[str, Any] = field(default_factory=dict)
    files: Dict[str, str] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def add_file(self, path: PathLike, root: PathLike) -> None:
        rel = os.path.relpath(path, root).replace(os.sep, "/")
        self.files[rel] = sha256_file(path)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "version": self.version,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "parameters": self.parameters,
            "metrics": self.metrics,
            "files": dict(sorted(self.files.items())),
        }

    def write(self, directory: PathLike) -> Path:
        out = Path(directory)
        write_atomic(out / f"timings_{self.command}.json", dumps(self.timings))
        path = write_atomic(out / f"manifest_{self.command}.json", dumps(self.to_dict()))
        logger.info("Manifest written to %s (%s files)", path, len(self.files))
        return path


def load_manifest(path: PathLike) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ArtifactFormatError(f"{path}: {e}") from e
