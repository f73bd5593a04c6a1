"""MGF spectrum I/O, preprocessing into fixed-length feature vectors, and
precursor-based bucketing.

The parser is deliberately forgiving at the file level and strict at the
record level: a malformed record is skipped and counted with its line
number instead of aborting the whole file.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DECOY_PREFIX = "DECOY_"


@dataclass(frozen=True)
class Spectrum:
    """One MS/MS spectrum: a peak list plus precursor metadata."""

    id: str
    precursor_mz: float  # Th
    precursor_charge: int
    peaks: tuple[tuple[float, float], ...]  # (mz, intensity), sorted by mz
    is_decoy: bool = False
    label: str | None = None  # ground-truth class, when known


@dataclass
class FeatureVector:
    """Binned, normalized spectrum of fixed length with its value bounds."""

    values: np.ndarray
    l_min: float = 0.0
    l_max: float = 1.0
    is_empty: bool = False  # no peaks survived preprocessing


@dataclass(frozen=True, order=True)
class BucketKey:
    charge: int
    mz_window_index: int


@dataclass(frozen=True)
class PreprocessConfig:
    mz_min: float = 101.0
    mz_max: float = 1500.0
    bin_width: float = 1.0005
    top_k: int = 50
    intensity_transform: str = "sqrt"  # "sqrt" or "none"

    def __post_init__(self) -> None:
        if not self.mz_min < self.mz_max:
            raise ValueError("mz_min must be < mz_max")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be > 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.intensity_transform not in ("sqrt", "none"):
            raise ValueError(f"unknown intensity_transform {self.intensity_transform!r}")

    @property
    def num_bins(self) -> int:
        return int(math.ceil((self.mz_max - self.mz_min) / self.bin_width))


@dataclass
class MgfParseResult:
    """Parsed spectra plus per-record error diagnostics."""

    spectra: list[Spectrum] = field(default_factory=list)
    errors: list[tuple[int, str]] = field(default_factory=list)  # (line, message)
    missing_charge_count: int = 0

    @property
    def error_count(self) -> int:
        return len(self.errors)


def _parse_charge(raw: str) -> int:
    # "2+" -> 2, "3" -> 3; magnitude only, charge is >= 1 by contract
    token = raw.strip().split()[0]
    token = token.rstrip("+-")
    charge = int(token)
    if charge < 1:
        raise ValueError(f"charge must be >= 1, got {charge}")
    return charge


def _parse_title(raw: str) -> tuple[str, str | None, bool]:
    """Split a TITLE into (id, label, is_decoy); label comes from a
    ``label=<value>`` token embedded in the title."""
    tokens = raw.strip().split()
    if not tokens:
        raise ValueError("empty TITLE")
    spec_id = tokens[0]
    label = None
    for tok in tokens[1:]:
        if tok.startswith("label="):
            label = tok[len("label="):]
    return spec_id, label, spec_id.startswith(DECOY_PREFIX)


def parse_mgf(path: str | Path) -> MgfParseResult:
    """Parse an MGF file into spectra.

    Records are BEGIN IONS / END IONS blocks with TITLE, PEPMASS and CHARGE
    headers followed by ``mz intensity`` peak lines. Peaks are sorted by mz
    on output; CHARGE "2+" parses to 2; a missing CHARGE defaults to 1 and
    is counted. Malformed records are skipped and reported with the line
    number where the problem was detected.
    """
    result = MgfParseResult()
    headers: dict[str, str] = {}
    peaks: list[tuple[float, float]] = []
    in_record = False
    record_bad = False

    def fail(lineno: int, message: str) -> None:
        nonlocal record_bad
        if not record_bad:
            result.errors.append((lineno, message))
        record_bad = True

    def finish(lineno: int) -> None:
        nonlocal in_record, record_bad
        if not record_bad:
            try:
                result.spectra.append(_build_spectrum(headers, peaks, result))
            except ValueError as exc:
                result.errors.append((lineno, str(exc)))
        in_record = False
        record_bad = False
        headers.clear()
        peaks.clear()

    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "BEGIN IONS":
            if in_record:
                fail(lineno, "BEGIN IONS inside an open record")
                finish(lineno)
            in_record = True
            continue
        if line == "END IONS":
            if not in_record:
                result.errors.append((lineno, "END IONS without BEGIN IONS"))
                continue
            finish(lineno)
            continue
        if not in_record:
            result.errors.append((lineno, f"content outside record: {line!r}"))
            continue
        if record_bad:
            continue
        if "=" in line and not line[0].isdigit():
            key, _, value = line.partition("=")
            headers[key.strip().upper()] = value.strip()
            continue
        fields = line.split()
        if len(fields) < 2:
            fail(lineno, f"malformed peak line: {line!r}")
            continue
        try:
            mz, intensity = float(fields[0]), float(fields[1])
        except ValueError:
            fail(lineno, f"malformed peak line: {line!r}")
            continue
        if mz <= 0 or intensity < 0:
            fail(lineno, f"peak out of range: mz={mz}, intensity={intensity}")
            continue
        peaks.append((mz, intensity))

    if in_record:
        result.errors.append((lineno, "unterminated record (missing END IONS)"))
    if result.missing_charge_count:
        logger.warning(
            "%d record(s) had no CHARGE header; defaulted to 1",
            result.missing_charge_count,
        )
    return result


def _build_spectrum(
    headers: dict[str, str], peaks: list[tuple[float, float]], result: MgfParseResult
) -> Spectrum:
    if "TITLE" not in headers:
        raise ValueError("missing TITLE header")
    if "PEPMASS" not in headers:
        raise ValueError("missing PEPMASS header")
    spec_id, label, is_decoy = _parse_title(headers["TITLE"])
    precursor_mz = float(headers["PEPMASS"].split()[0])
    if precursor_mz <= 0:
        raise ValueError(f"PEPMASS must be > 0, got {precursor_mz}")
    if "CHARGE" in headers:
        charge = _parse_charge(headers["CHARGE"])
    else:
        charge = 1
        result.missing_charge_count += 1
    return Spectrum(
        id=spec_id,
        precursor_mz=precursor_mz,
        precursor_charge=charge,
        peaks=tuple(sorted(peaks, key=lambda p: p[0])),
        is_decoy=is_decoy,
        label=label,
    )


def write_mgf(spectra: Iterable[Spectrum], path: str | Path) -> None:
    """Write spectra as MGF; inverse of parse_mgf up to float formatting."""
    lines: list[str] = []
    for s in spectra:
        title = s.id if s.label is None else f"{s.id} label={s.label}"
        lines.append("BEGIN IONS")
        lines.append(f"TITLE={title}")
        lines.append(f"PEPMASS={s.precursor_mz!r}")
        lines.append(f"CHARGE={s.precursor_charge}+")
        for mz, intensity in s.peaks:
            lines.append(f"{mz!r} {intensity!r}")
        lines.append("END IONS")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def preprocess(spectrum: Spectrum, cfg: PreprocessConfig) -> FeatureVector:
    """Bin a spectrum into a fixed-length feature vector.

    Keeps the top_k most intense peaks inside [mz_min, mz_max], applies the
    intensity transform, accumulates into fixed-width m/z bins, and scales
    to unit maximum. An all-zero vector is flagged is_empty.
    """
    num_bins = cfg.num_bins
    values = np.zeros(num_bins, dtype=np.float64)
    if spectrum.peaks:
        arr = np.asarray(spectrum.peaks, dtype=np.float64)
        mz, intensity = arr[:, 0], arr[:, 1]
        keep = (mz >= cfg.mz_min) & (mz <= cfg.mz_max)
        mz, intensity = mz[keep], intensity[keep]
        if mz.size > cfg.top_k:
            order = np.argsort(-intensity, kind="stable")[: cfg.top_k]
            mz, intensity = mz[order], intensity[order]
        if cfg.intensity_transform == "sqrt":
            intensity = np.sqrt(intensity)
        bins = np.floor((mz - cfg.mz_min) / cfg.bin_width).astype(np.int64)
        np.clip(bins, 0, num_bins - 1, out=bins)  # mz == mz_max lands in the last bin
        np.add.at(values, bins, intensity)
    peak = values.max() if values.size else 0.0
    if peak > 0:
        values /= peak
        return FeatureVector(values=values, l_min=0.0, l_max=1.0, is_empty=False)
    return FeatureVector(values=values, l_min=0.0, l_max=1.0, is_empty=True)


def bucket_key(spectrum: Spectrum, window_width: float) -> BucketKey:
    return BucketKey(
        charge=spectrum.precursor_charge,
        mz_window_index=int(math.floor(spectrum.precursor_mz / window_width)),
    )


def bucketize(
    spectra: Sequence[Spectrum], window_width: float
) -> dict[BucketKey, list[str]]:
    """Partition spectra by (charge, precursor m/z window); preserves input
    order inside each bucket."""
    if window_width <= 0:
        raise ValueError("window_width must be > 0")
    buckets: dict[BucketKey, list[str]] = {}
    for s in spectra:
        buckets.setdefault(bucket_key(s, window_width), []).append(s.id)
    return buckets
