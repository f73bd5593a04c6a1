"""Device models for the two superlattice PCM technologies.

Measured material parameters for the low-programming-energy device used by
clustering (frequent rewrites) and the long-retention device used by
database search (write-once, read-heavy), plus the multiplicative
programming-noise model, the adjacent-level misread probability, power-law
resistance drift, and an endurance budget check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class DeviceProfile:
    """Measured parameters of one PCM technology."""

    name: str
    prog_current_ua: float  # uA per cell
    prog_voltage_v: float  # V
    prog_energy_pj: float  # pJ per cell per pulse
    retention_105c_hours: float  # h at 105 C
    low_resistance_kohm: float  # kOhm
    on_off_ratio: float
    endurance_cycles: float  # write cycles per cell


# Sb2Te3-based superlattice: low programming current/energy, shorter
# retention. Used for clustering, where data is rewritten constantly.
SBTE_GST467 = DeviceProfile(
    name="SbTe_GST467",
    prog_current_ua=80.0,
    prog_voltage_v=0.7,
    prog_energy_pj=1.12,
    retention_105c_hours=30.0,
    low_resistance_kohm=30.0,
    on_off_ratio=150.0,
    endurance_cycles=1e8,
)

# TiTe2-based superlattice: ~2.6x higher programming energy, >1e5 h
# retention. Used for the database-search reference bank.
TITE_GST467 = DeviceProfile(
    name="TiTe_GST467",
    prog_current_ua=160.0,
    prog_voltage_v=0.9,
    prog_energy_pj=2.88,
    retention_105c_hours=1e5,
    low_resistance_kohm=10.0,
    on_off_ratio=100.0,
    endurance_cycles=1e8,
)

PROFILES: dict[str, DeviceProfile] = {"sbte": SBTE_GST467, "tite": TITE_GST467}

MIN_MLC_BITS = 1
MAX_MLC_BITS = 3


@dataclass
class NoiseParams:
    """Relative conductance spread of a programmed cell.

    Write-verify narrows the distribution geometrically: sigma(wv) =
    max(sigma_min, sigma0 * rho**wv). A table override takes precedence,
    so measured (mlc_bits, wv_cycles) -> sigma curves can be pasted in.
    """

    sigma0: float = 0.12
    rho: float = 0.55
    sigma_min: float = 0.01
    table_override: dict[tuple[int, int], float] = field(default_factory=dict)
    per_read: bool = False  # redraw noise on every access instead of at program time

    def __post_init__(self) -> None:
        # sigma0 == sigma_min == 0 is the noiseless test configuration
        if self.sigma_min < 0 or self.sigma0 < self.sigma_min:
            raise ValueError("need sigma0 >= sigma_min >= 0")
        if self.sigma0 > 0 and self.sigma0 <= self.sigma_min:
            raise ValueError("need sigma0 > sigma_min when noise is enabled")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must be in (0, 1)")

    @staticmethod
    def noiseless() -> "NoiseParams":
        return NoiseParams(sigma0=0.0, sigma_min=0.0)


def _check_mlc(mlc_bits: int) -> None:
    if not MIN_MLC_BITS <= mlc_bits <= MAX_MLC_BITS:
        raise ValueError(
            f"mlc_bits must be in [{MIN_MLC_BITS}, {MAX_MLC_BITS}], got {mlc_bits}"
        )


def sigma_for(
    profile: DeviceProfile, params: NoiseParams, mlc_bits: int, wv_cycles: int
) -> float:
    """Relative sigma after the given number of write-verify cycles."""
    _check_mlc(mlc_bits)
    if wv_cycles < 0:
        raise ValueError(f"wv_cycles must be >= 0, got {wv_cycles}")
    override = params.table_override.get((mlc_bits, wv_cycles))
    if override is not None:
        return override
    return max(params.sigma_min, params.sigma0 * params.rho**wv_cycles)


def apply_noise(w: float, sigma: float, rng: np.random.Generator) -> float:
    """Perturb one stored value multiplicatively: w * (1 + eta),
    eta ~ N(0, sigma^2). sigma == 0 returns w exactly."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return w
    return w * (1.0 + sigma * rng.standard_normal())


def apply_noise_array(
    w: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Vector form of apply_noise; one independent draw per element."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    w = np.asarray(w, dtype=np.float64)
    if sigma == 0.0:
        return w.copy()
    return w * (1.0 + sigma * rng.standard_normal(w.shape))


def ber_from_sigma(sigma: float, mlc_bits: int) -> float:
    """Adjacent-level misread probability at a given relative sigma.

    Levels are unit-spaced integers up to the largest packed magnitude
    (== mlc_bits); the worst case is that largest level, misread when the
    multiplicative perturbation exceeds half a gap:
    P(|w_max * eta| > 1/2) = 2 * (1 - Phi(0.5 / (w_max * sigma))).
    """
    _check_mlc(mlc_bits)
    if sigma <= 0.0:
        return 0.0
    return 2.0 * (1.0 - _STD_NORMAL.cdf(0.5 / (mlc_bits * sigma)))


def sigma_for_ber(target_ber: float, mlc_bits: int) -> float:
    """Inverse of ber_from_sigma: the sigma that yields a target misread
    probability (used to tune noise-robustness studies)."""
    _check_mlc(mlc_bits)
    if not 0.0 < target_ber < 1.0:
        raise ValueError(f"target_ber must be in (0, 1), got {target_ber}")
    z = _STD_NORMAL.inv_cdf(1.0 - target_ber / 2.0)
    return 0.5 / (mlc_bits * z)


def bit_error_rate(
    profile: DeviceProfile, params: NoiseParams, mlc_bits: int, wv_cycles: int
) -> float:
    """Misread probability as a function of write-verify effort; monotone
    non-increasing in wv_cycles and increasing in mlc_bits."""
    return ber_from_sigma(sigma_for(profile, params, mlc_bits, wv_cycles), mlc_bits)


def drift_resistance(r0_kohm: float, t_s: float, t0_s: float, nu: float) -> float:
    """Power-law resistance drift: r0 * (t / t0)**nu."""
    if r0_kohm <= 0:
        raise ValueError("r0 must be > 0")
    if t0_s <= 0:
        raise ValueError("t0 must be > 0")
    if t_s < t0_s:
        raise ValueError(f"t ({t_s}) must be >= t0 ({t0_s})")
    if nu < 0:
        raise ValueError("nu must be >= 0")
    return r0_kohm * (t_s / t0_s) ** nu


@dataclass(frozen=True)
class RetentionReport:
    workload_hours: float
    retention_105c_hours: float
    within_retention: bool


def retention_check(workload_seconds: float, profile: DeviceProfile) -> RetentionReport:
    """Validity gate: stored values are only trusted while the workload
    duration stays inside the device's 105 C retention window. Drift itself
    is modeled separately (drift_resistance) and off by default."""
    if workload_seconds < 0:
        raise ValueError("workload_seconds must be >= 0")
    hours = workload_seconds / 3600.0
    return RetentionReport(
        workload_hours=hours,
        retention_105c_hours=profile.retention_105c_hours,
        within_retention=hours <= profile.retention_105c_hours,
    )


@dataclass(frozen=True)
class EnduranceReport:
    writes_per_cell: float
    endurance_cycles: float
    remaining_fraction: float
    supported_processes: float  # full workloads of this size the cell budget allows


def endurance_check(writes_per_cell: float, profile: DeviceProfile) -> EnduranceReport:
    """Budget report: how many workloads of this write intensity the device
    endurance supports."""
    if writes_per_cell < 0:
        raise ValueError("writes_per_cell must be >= 0")
    endurance = profile.endurance_cycles
    return EnduranceReport(
        writes_per_cell=writes_per_cell,
        endurance_cycles=endurance,
        remaining_fraction=max(0.0, 1.0 - writes_per_cell / endurance),
        supported_processes=endurance / max(1.0, writes_per_cell),
    )


def load_noise_table(path: str | Path) -> dict[tuple[int, int], float]:
    """Read a CSV of ``mlc_bits,wv_cycles,sigma`` rows into a table override."""
    table: dict[tuple[int, int], float] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.reader(handle):
            if not row or row[0].strip().startswith("#"):
                continue
            if row[0].strip().lower() in ("mlc_bits", "mlc"):
                continue  # header
            mlc, wv, sigma = int(row[0]), int(row[1]), float(row[2])
            table[(mlc, wv)] = sigma
    return table


def noise_params_from_config(cfg) -> NoiseParams:
    """Build NoiseParams from a Config (loads noise.table if set)."""
    table = {}
    path = cfg.get("noise.table")
    if path:
        table = load_noise_table(path)
    return NoiseParams(
        sigma0=cfg.get("noise.sigma0"),
        rho=cfg.get("noise.rho"),
        sigma_min=cfg.get("noise.sigma_min"),
        table_override=table,
        per_read=cfg.get("noise.per_read"),
    )
