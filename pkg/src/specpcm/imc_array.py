"""Behavioral model of 128x128 2T2R PCM tiles.

A signed value is stored differentially as the conductance difference of a
cell pair; programming applies multiplicative noise whose spread shrinks
with write-verify cycles. An in-memory MVM drives a DAC-limited input
across all activated rows at once and digitizes each row's analog dot
product with a flash ADC whose effective precision (and energy) is set by
the number of enabled comparators. Hypervectors wider than one tile are
striped across arrays at the same row; per-tile partial sums are
accumulated digitally by the near-memory logic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cost_model
from .cost_model import (
    MVM_CYCLES,
    PROGRAM_CYCLES,
    ComponentCatalog,
    CostLedger,
    DEFAULT_CATALOG,
    PricedEvent,
    event_energy,
    merge_parallel,
)
from .pcm_device import DeviceProfile, NoiseParams, apply_noise_array, sigma_for


def default_full_scale(n: int, cols: int = 128) -> float:
    """ADC full scale matched to the spread of a random packed partial sum
    over one tile width; self-match sums deliberately saturate."""
    return 4.0 * n * math.sqrt(cols)


@dataclass
class MvmConfig:
    """Knobs of one in-memory MVM."""

    dac_bits: int = 3
    adc_bits: int = 6
    full_scale: float = 0.0  # 0 -> default_full_scale(n)
    bypass: bool = False  # return exact analog sums (oracle/test mode only)

    def __post_init__(self) -> None:
        if not 1 <= self.adc_bits <= cost_model.ADC_MAX_BITS:
            raise ValueError(f"adc_bits must be in [1, 6], got {self.adc_bits}")
        if self.dac_bits < 1:
            raise ValueError(f"dac_bits must be >= 1, got {self.dac_bits}")


def adc_quantize(y: np.ndarray, adc_bits: int, full_scale: float) -> np.ndarray:
    """Uniform mid-tread quantization with saturation.

    step = full_scale / 2**(adc_bits - 1); codes clamp to the signed range
    [-(2**(b-1)), 2**(b-1) - 1]; the digitized value is code * step.
    """
    if full_scale <= 0:
        raise ValueError("full_scale must be > 0")
    half = 2 ** (adc_bits - 1)
    step = full_scale / half
    codes = np.clip(np.round(np.asarray(y, dtype=np.float64) / step), -half, half - 1)
    return codes * step


def dac_saturate(x: np.ndarray, dac_bits: int) -> np.ndarray:
    """Input driver limit: values pass through exactly up to the signed
    range of the DAC, beyond which they saturate."""
    lim = float(2 ** (dac_bits - 1))
    return np.clip(np.asarray(x, dtype=np.float64), -lim, lim)


@dataclass
class ArrayState:
    """One 2T2R tile: positive/negative conductance magnitudes plus write
    counters. At most one of (g_pos, g_neg) is nonzero per cell."""

    profile: DeviceProfile
    noise: NoiseParams
    rows: int = 128
    cols: int = 128
    g_pos: np.ndarray = field(init=False)
    g_neg: np.ndarray = field(init=False)
    writes: np.ndarray = field(init=False)
    read_sigma: np.ndarray = field(init=False)  # per-cell sigma for per-read mode

    def __post_init__(self) -> None:
        self.g_pos = np.zeros((self.rows, self.cols), dtype=np.float64)
        self.g_neg = np.zeros((self.rows, self.cols), dtype=np.float64)
        self.writes = np.zeros((self.rows, self.cols), dtype=np.int64)
        self.read_sigma = np.zeros((self.rows, self.cols), dtype=np.float64)

    def effective(
        self, row_start: int = 0, num_rows: int | None = None,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Signed stored values (g_pos - g_neg) for a row window; redraws
        noise when the per-read mode is active."""
        if num_rows is None:
            num_rows = self.rows - row_start
        sl = slice(row_start, row_start + num_rows)
        diff = self.g_pos[sl] - self.g_neg[sl]
        if self.noise.per_read:
            if rng is None:
                raise ValueError("per-read noise needs a generator")
            sigma = self.read_sigma[sl]
            diff = diff * (1.0 + sigma * rng.standard_normal(diff.shape))
        return diff


def store_row_segment(
    array: ArrayState,
    row: int,
    segment: np.ndarray,
    mlc_bits: int,
    wv_cycles: int,
    rng: np.random.Generator,
    catalog: ComponentCatalog = DEFAULT_CATALOG,
    col_start: int = 0,
) -> PricedEvent:
    """Program one row segment differentially.

    value v >= 0 goes to g_pos = |v|, v < 0 to g_neg = |v|, with
    multiplicative noise at the write-verify-dependent sigma (zero values
    stay exactly zero). Write counters grow by 1 + wv_cycles; the program
    event costs cells * prog_energy * (1 + wv_cycles) and takes one 20 ns
    pulse per iteration.
    """
    if not 0 <= row < array.rows:
        raise ValueError(f"row {row} out of range [0, {array.rows})")
    segment = np.asarray(segment, dtype=np.float64)
    if segment.ndim != 1 or segment.size == 0:
        raise ValueError("segment must be a non-empty 1-D sequence")
    if col_start < 0 or col_start + segment.size > array.cols:
        raise ValueError(
            f"segment of {segment.size} values at col {col_start} exceeds "
            f"{array.cols} columns"
        )
    if np.max(np.abs(segment)) > mlc_bits:
        raise ValueError(
            f"segment magnitude exceeds packed range [-{mlc_bits}, {mlc_bits}]"
        )
    if wv_cycles < 0:
        raise ValueError("wv_cycles must be >= 0")

    sigma = sigma_for(array.profile, array.noise, mlc_bits, wv_cycles)
    magnitudes = np.abs(segment)
    if array.noise.per_read:
        stored = magnitudes  # kept clean; noise is redrawn on every access
    else:
        stored = apply_noise_array(magnitudes, sigma, rng)
    cols = slice(col_start, col_start + segment.size)
    array.g_pos[row, cols] = np.where(segment >= 0, stored, 0.0)
    array.g_neg[row, cols] = np.where(segment < 0, stored, 0.0)
    array.writes[row, cols] += 1 + wv_cycles
    array.read_sigma[row, cols] = sigma

    energy = event_energy(
        "program",
        {"cells": segment.size, "wv_cycles": wv_cycles},
        catalog,
        array.profile,
    )
    return PricedEvent(
        kind="program",
        phase="program",
        latency_cycles=(1 + wv_cycles) * PROGRAM_CYCLES,
        energy_pj=energy,
    )


def read_row(
    array: ArrayState,
    row: int,
    catalog: ComponentCatalog = DEFAULT_CATALOG,
    rng: np.random.Generator | None = None,
    col_start: int = 0,
    length: int | None = None,
) -> tuple[np.ndarray, PricedEvent]:
    """Normal read of one row: signed values g_pos - g_neg.

    Store-time noise is already baked into the magnitudes (or redrawn here
    in per-read mode). One cycle; energy is the sense-amplifier line, one
    unit per four columns read.
    """
    if not 0 <= row < array.rows:
        raise ValueError(f"row {row} out of range [0, {array.rows})")
    if length is None:
        length = array.cols - col_start
    if col_start < 0 or length < 1 or col_start + length > array.cols:
        raise ValueError(f"read window [{col_start}, {col_start + length}) invalid")
    values = array.effective(row, 1, rng)[0, col_start : col_start + length].copy()
    event = PricedEvent(
        kind="read",
        phase="read",
        latency_cycles=1,
        energy_pj=event_energy("sense_amp", {"units": -(-length // 4)}, catalog),
    )
    return values, event


def mvm(
    array: ArrayState,
    x: np.ndarray,
    cfg: MvmConfig,
    mlc_bits: int,
    catalog: ComponentCatalog = DEFAULT_CATALOG,
    rng: np.random.Generator | None = None,
    row_start: int = 0,
    num_rows: int | None = None,
) -> tuple[np.ndarray, list[PricedEvent]]:
    """One in-memory matrix-vector multiply on a single tile.

    DAC saturation, then analog dot products y_r = sum_c x_c * (g_pos -
    g_neg)[r, c] for every activated row simultaneously, then flash-ADC
    quantization (or exact sums in bypass mode). Ten cycles total; ADC
    energy scales with the enabled comparators, (2**bits - 1) / 63.
    """
    if num_rows is None:
        num_rows = array.rows - row_start
    if not (0 <= row_start and row_start + num_rows <= array.rows and num_rows >= 1):
        raise ValueError(f"row window [{row_start}, {row_start + num_rows}) invalid")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != array.cols:
        raise ValueError(f"input length {x.shape[0]} != {array.cols} columns")

    drive = dac_saturate(x, cfg.dac_bits)
    weights = array.effective(row_start, num_rows, rng)
    y = weights @ drive
    if cfg.bypass:
        out = y
    else:
        full_scale = cfg.full_scale if cfg.full_scale > 0 else default_full_scale(mlc_bits, array.cols)
        out = adc_quantize(y, cfg.adc_bits, full_scale)

    mvm_energy = (
        event_energy("dac", {"columns": array.cols}, catalog)
        + event_energy("sl_drive", {"units": catalog.sl_gen_drive.count}, catalog)
        + event_energy("wl_drive", {"units": 2 * num_rows}, catalog)
        + event_energy("pcm_array", {"cells": num_rows * array.cols}, catalog)
    )
    events = [
        PricedEvent("mvm", "mvm", MVM_CYCLES, mvm_energy),
        PricedEvent(
            "adc_conversion",
            "adc",
            0,  # conversion time is inside the 10-cycle MVM
            event_energy(
                "adc", {"conversions": num_rows, "bits": cfg.adc_bits}, catalog
            ),
        ),
    ]
    return out, events


@dataclass(frozen=True)
class BankLayout:
    """How one logical bank of hypervectors maps onto tiles.

    A packed HV of dims_packed values is striped over ``stripes`` arrays at
    the same row; every 128 HVs open a new row group of arrays. Array index
    = group * stripes + stripe.
    """

    stripes: int
    row_groups: int
    dims_packed: int
    rows: int = 128
    cols: int = 128

    @property
    def num_arrays(self) -> int:
        return self.stripes * self.row_groups

    @property
    def capacity(self) -> int:
        return self.rows * self.row_groups

    @staticmethod
    def for_workload(
        dims_packed: int, num_rows: int, rows: int = 128, cols: int = 128
    ) -> "BankLayout":
        if dims_packed < 1 or num_rows < 1:
            raise ValueError("dims_packed and num_rows must be >= 1")
        return BankLayout(
            stripes=-(-dims_packed // cols),
            row_groups=-(-num_rows // rows),
            dims_packed=dims_packed,
            rows=rows,
            cols=cols,
        )

    def locate(self, logical_row: int) -> tuple[int, int]:
        """(row group, row within group) of a logical HV index."""
        if not 0 <= logical_row < self.capacity:
            raise ValueError(f"logical row {logical_row} out of range")
        return logical_row // self.rows, logical_row % self.rows


class MachineState:
    """A bank of tiles plus the staging buffer, output buffer, and ledger."""

    def __init__(
        self,
        layout: BankLayout,
        profile: DeviceProfile,
        noise: NoiseParams,
        mvm_cfg: MvmConfig | None = None,
        catalog: ComponentCatalog = DEFAULT_CATALOG,
    ) -> None:
        self.layout = layout
        self.profile = profile
        self.noise = noise
        self.mvm_cfg = mvm_cfg or MvmConfig()
        self.catalog = catalog
        self.arrays = [
            ArrayState(profile=profile, noise=noise, rows=layout.rows, cols=layout.cols)
            for _ in range(layout.num_arrays)
        ]
        self.input_buffer = np.zeros(layout.stripes * layout.cols, dtype=np.float64)
        self.output_buffer: np.ndarray | None = None
        self.ledger = CostLedger()

    def array(self, idx: int) -> ArrayState:
        if not 0 <= idx < len(self.arrays):
            raise ValueError(f"array index {idx} out of range [0, {len(self.arrays)})")
        return self.arrays[idx]

    def max_writes_per_cell(self) -> int:
        return int(max(a.writes.max() for a in self.arrays))

    def reset_buffer(self) -> None:
        self.input_buffer[:] = 0.0


def accumulation_cycles(stripes: int) -> int:
    """Digital reduction of per-tile partial sums: one cycle per tile-pair
    reduction level in the near-memory adder tree."""
    if stripes <= 1:
        return 0
    return int(math.ceil(math.log2(stripes)))


def mvm_full(
    machine: MachineState,
    x: np.ndarray,
    cfg: MvmConfig,
    mlc_bits: int,
    rng: np.random.Generator | None = None,
    row_start: int = 0,
    num_rows: int | None = None,
) -> tuple[np.ndarray, list[PricedEvent]]:
    """Bank-wide MVM: every tile computes its stripe in parallel, and the
    near-memory logic sums partial outputs of the same logical row.

    Returns one score per logical row (row groups concatenated in order).
    Latency: the flat 10-cycle MVM (tiles parallel) plus the adder-tree
    cycles; ADC conversions are counted per activated row on every tile.
    """
    layout = machine.layout
    if num_rows is None:
        num_rows = layout.rows - row_start
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != layout.dims_packed:
        raise ValueError(
            f"input length {x.shape[0]} != bank width {layout.dims_packed}"
        )
    padded = np.zeros(layout.stripes * layout.cols, dtype=np.float64)
    padded[: x.shape[0]] = x

    scores = np.zeros(layout.row_groups * num_rows, dtype=np.float64)
    tile_events: list[PricedEvent] = []
    adc_events: list[PricedEvent] = []
    for group in range(layout.row_groups):
        total = np.zeros(num_rows, dtype=np.float64)
        for stripe in range(layout.stripes):
            arr = machine.array(group * layout.stripes + stripe)
            xs = padded[stripe * layout.cols : (stripe + 1) * layout.cols]
            out, events = mvm(
                arr, xs, cfg, mlc_bits, machine.catalog, rng, row_start, num_rows
            )
            total += out
            tile_events.append(events[0])
            adc_events.append(events[1])
        scores[group * num_rows : (group + 1) * num_rows] = total

    tree = accumulation_cycles(layout.stripes)
    merged = [
        merge_parallel(tile_events, "mvm", "mvm"),
        merge_parallel(adc_events, "adc_conversion", "adc"),
    ]
    if tree:
        merged.append(
            PricedEvent(
                "accumulate",
                "asic",
                tree,
                event_energy("asic", {"cycles": tree}, machine.catalog),
            )
        )
    return scores, merged
