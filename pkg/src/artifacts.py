"""Reading and writing run artifacts: density and eigenvalue CSVs, JSON documents."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
import hashlib
import json

import numpy as np
import pandas as pd

from src.errors import ConfigError, SpectraError
from src.spectra import EmpiricalSpectrum, SpectralDensity


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int | None
    started: float
    finished: float
    solver: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)


def config_hash(*paths: str | Path) -> str:
    """sha256 over the raw bytes of the input files, in order."""
    digest = hashlib.sha256()
    for path in paths:
        digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    return path


def write_manifest(artifact: str | Path, manifest: RunManifest) -> Path:
    artifact = Path(artifact)
    return write_json(artifact.parent / f"{artifact.name}.manifest.json", asdict(manifest))


def write_density_csv(path: str | Path, density: SpectralDensity) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"x": density.grid, "f": density.values})
    # repr-exact floats so reading back recovers identical values
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_density_csv(path: str | Path) -> SpectralDensity:
    frame = _read_csv(path, ["x", "f"])
    try:
        return SpectralDensity(grid=frame["x"].to_numpy(), values=frame["f"].to_numpy())
    except (SpectraError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def eigs_filename(rep: int) -> str:
    return f"eigs_rep{rep:04d}.csv"


def write_eigs_csv(path: str | Path, spectrum: EmpiricalSpectrum) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {
            "rep": np.full(spectrum.p, spectrum.replicate, dtype=int),
            "index": np.arange(spectrum.p),
            "eigenvalue": spectrum.eigenvalues,
        }
    )
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def read_eigs_csv(path: str | Path, rep: int | None = None) -> EmpiricalSpectrum:
    frame = _read_csv(path, ["rep", "index", "eigenvalue"])
    reps = sorted(frame["rep"].unique())
    chosen = reps[0] if rep is None else rep
    if chosen not in reps:
        raise ConfigError(f"{path}: replicate {chosen} not present (have {reps})")
    rows = frame[frame["rep"] == chosen].sort_values("index")
    eigs = rows["eigenvalue"].to_numpy()
    try:
        return EmpiricalSpectrum(eigenvalues=eigs, p=eigs.size, replicate=int(chosen))
    except (SpectraError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _read_csv(path: str | Path, columns: list[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse CSV: {exc}") from exc
    if list(frame.columns) != columns:
        raise ConfigError(f"{path}: expected columns {columns}, got {list(frame.columns)}")
    if frame.empty or frame.isna().any().any():
        raise ConfigError(f"{path}: empty or non-numeric rows")
    bad = [c for c in columns if not pd.api.types.is_numeric_dtype(frame[c])]
    if bad:
        raise ConfigError(f"{path}: non-numeric values in column(s) {bad}")
    if not np.isfinite(frame.to_numpy(dtype=float)).all():
        raise ConfigError(f"{path}: non-finite values")
    return frame
