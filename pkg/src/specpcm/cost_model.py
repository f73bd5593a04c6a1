"""Energy, latency, and area accounting.

Unit figures come from post-layout characterization of the 40 nm
implementation: per-component unit power/area plus system totals, a 500 MHz
clock (2 ns cycle), a 10-cycle in-memory MVM including input generation,
and a 20 ns (10-cycle) program pulse per write-verify iteration. Run events
are priced here and accumulated into a mergeable ledger.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .pcm_device import DeviceProfile

CLOCK_MHZ = 500.0
CYCLE_NS = 2.0  # 1 / 500 MHz
MVM_CYCLES = 10  # full-tile MVM, input generation through conversion
PROGRAM_PULSE_NS = 20.0  # one program iteration
PROGRAM_CYCLES = 10  # 20 ns at 2 ns/cycle
ADC_MAX_BITS = 6
ADC_COMPARATORS = 63  # 2**6 - 1 dynamic comparators in the flash ADC


@dataclass(frozen=True)
class ComponentSpec:
    unit_power_uw: float | None  # uW; None where only the total was measured
    unit_area_um2: float | None  # um^2
    total_power_mw: float  # mW, whole tile
    total_area_mm2: float  # mm^2, whole tile
    count: int  # units per tile


@dataclass(frozen=True)
class ComponentCatalog:
    """Per-tile component figures (power, area, unit counts)."""

    pcm_array: ComponentSpec = ComponentSpec(0.22, 0.5, 3.58, 0.0082, 128 * 128)
    flash_adc: ComponentSpec = ComponentSpec(320.0, 920.0, 5.12, 0.0147, 16)
    dac: ComponentSpec = ComponentSpec(6.56, 32.0, 0.84, 0.0041, 128)
    sl_gen_drive: ComponentSpec = ComponentSpec(52.5, 72.47, 3.36, 0.0046, 64)
    read_gen: ComponentSpec = ComponentSpec(None, None, 0.51, 0.0018, 256)
    wl_decode_drive: ComponentSpec = ComponentSpec(4.05, 10.68, 1.04, 0.0027, 256)
    sense_amp: ComponentSpec = ComponentSpec(20.0, 75.9, 0.64, 0.0024, 32)
    selectors: ComponentSpec = ComponentSpec(None, None, 0.50, 0.0017, 1)
    total_power_mw: float = 15.59
    total_area_mm2: float = 0.0402

    def components(self) -> dict[str, ComponentSpec]:
        return {
            "pcm_array": self.pcm_array,
            "flash_adc": self.flash_adc,
            "dac": self.dac,
            "sl_gen_drive": self.sl_gen_drive,
            "read_gen": self.read_gen,
            "wl_decode_drive": self.wl_decode_drive,
            "sense_amp": self.sense_amp,
            "selectors": self.selectors,
        }


DEFAULT_CATALOG = ComponentCatalog()

# Phases a ledger entry can be tagged with.
PHASES = ("program", "read", "mvm", "adc", "asic")


def _uw_to_pj(unit_power_uw: float, time_ns: float) -> float:
    # 1 uW * 1 ns = 1e-3 pJ
    return unit_power_uw * time_ns / 1000.0


def event_energy(
    kind: str,
    params: dict,
    catalog: ComponentCatalog = DEFAULT_CATALOG,
    profile: DeviceProfile | None = None,
) -> float:
    """Energy in pJ of one hardware event.

    Kinds: "program" (cells, wv_cycles), "adc" (conversions, bits),
    "dac" (columns), "sense_amp" (units), "sl_drive" (units),
    "wl_drive" (units), "pcm_array" (cells, cycles), "asic" (cycles).
    """
    if kind == "program":
        if profile is None:
            raise ValueError("program events need a device profile")
        return params["cells"] * profile.prog_energy_pj * (1 + params["wv_cycles"])
    if kind == "adc":
        bits = params["bits"]
        if not 1 <= bits <= ADC_MAX_BITS:
            raise ValueError(f"adc bits must be in [1, {ADC_MAX_BITS}], got {bits}")
        gating = (2**bits - 1) / ADC_COMPARATORS  # enabled comparators
        per = _uw_to_pj(catalog.flash_adc.unit_power_uw, CYCLE_NS) * gating
        return params["conversions"] * per
    if kind == "dac":
        return params["columns"] * _uw_to_pj(catalog.dac.unit_power_uw, CYCLE_NS)
    if kind == "sense_amp":
        return params["units"] * _uw_to_pj(catalog.sense_amp.unit_power_uw, CYCLE_NS)
    if kind == "sl_drive":
        return params["units"] * _uw_to_pj(catalog.sl_gen_drive.unit_power_uw, CYCLE_NS)
    if kind == "wl_drive":
        return params["units"] * _uw_to_pj(
            catalog.wl_decode_drive.unit_power_uw, CYCLE_NS
        )
    if kind == "pcm_array":
        cycles = params.get("cycles", 1)
        return (
            params["cells"]
            * _uw_to_pj(catalog.pcm_array.unit_power_uw, CYCLE_NS)
            * cycles
        )
    if kind == "asic":
        # near-memory logic priced at the selectors/residual power line
        per_cycle = _uw_to_pj(catalog.selectors.total_power_mw * 1000.0, CYCLE_NS)
        return params["cycles"] * per_cycle
    raise ValueError(f"unknown event class: {kind!r}")


@dataclass(frozen=True)
class PricedEvent:
    """One costed hardware event ready to be recorded."""

    kind: str
    phase: str
    latency_cycles: int
    energy_pj: float


def merge_parallel(events: list[PricedEvent], kind: str, phase: str) -> PricedEvent:
    """Combine per-tile events that execute in parallel: energies add,
    latency is the maximum."""
    if not events:
        raise ValueError("no events to merge")
    return PricedEvent(
        kind=kind,
        phase=phase,
        latency_cycles=max(e.latency_cycles for e in events),
        energy_pj=sum(e.energy_pj for e in events),
    )


@dataclass
class CostLedger:
    """Cumulative event counts, energy, and latency, tagged by phase.

    Merging is associative and order-independent up to float summation
    error, so per-tile or per-bucket ledgers can be combined at joins.
    """

    counts: Counter = field(default_factory=Counter)  # event kind -> count
    energy_pj: Counter = field(default_factory=Counter)  # phase -> pJ
    latency_cycles: Counter = field(default_factory=Counter)  # phase -> cycles

    def record(self, event: PricedEvent) -> None:
        self.counts[event.kind] += 1
        if event.energy_pj:
            self.energy_pj[event.phase] += event.energy_pj
        if event.latency_cycles:
            self.latency_cycles[event.phase] += event.latency_cycles

    def record_all(self, events: list[PricedEvent]) -> None:
        for event in events:
            self.record(event)

    def merge(self, other: "CostLedger") -> None:
        self.counts.update(other.counts)
        self.energy_pj.update(other.energy_pj)
        self.latency_cycles.update(other.latency_cycles)

    def __add__(self, other: "CostLedger") -> "CostLedger":
        out = self.copy()
        out.merge(other)
        return out

    def copy(self) -> "CostLedger":
        return CostLedger(
            Counter(self.counts), Counter(self.energy_pj), Counter(self.latency_cycles)
        )

    @property
    def total_energy_pj(self) -> float:
        return float(sum(self.energy_pj.values()))

    @property
    def total_latency_cycles(self) -> int:
        return int(sum(self.latency_cycles.values()))

    @property
    def total_latency_ns(self) -> float:
        return self.total_latency_cycles * CYCLE_NS

    @property
    def total_energy_j(self) -> float:
        return self.total_energy_pj * 1e-12

    @property
    def total_seconds(self) -> float:
        return self.total_latency_ns * 1e-9

    def approx_equal(self, other: "CostLedger", rel: float = 1e-9) -> bool:
        if self.counts != other.counts:
            return False
        if self.latency_cycles != other.latency_cycles:
            return False
        keys = set(self.energy_pj) | set(other.energy_pj)
        for key in keys:
            a, b = self.energy_pj.get(key, 0.0), other.energy_pj.get(key, 0.0)
            if abs(a - b) > rel * max(1.0, abs(a), abs(b)):
                return False
        return True

    def to_text(self) -> str:
        lines = ["# specpcm cost ledger v1"]
        for key in sorted(self.counts):
            lines.append(f"count.{key} = {self.counts[key]}")
        for key in sorted(self.energy_pj):
            lines.append(f"energy_pj.{key} = {self.energy_pj[key]!r}")
        for key in sorted(self.latency_cycles):
            lines.append(f"latency_cycles.{key} = {self.latency_cycles[key]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CostLedger":
        ledger = cls()
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            section, _, name = key.partition(".")
            if section == "count":
                ledger.counts[name] = int(value)
            elif section == "energy_pj":
                ledger.energy_pj[name] = float(value)
            elif section == "latency_cycles":
                ledger.latency_cycles[name] = int(value)
            else:
                raise ValueError(f"unknown ledger line: {raw!r}")
        return ledger

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CostLedger":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


@dataclass
class CostReport:
    """Run totals with per-phase breakdown."""

    energy_pj: float
    energy_j: float
    latency_cycles: int
    latency_ns: float
    seconds: float
    by_phase_energy_pj: dict[str, float]
    by_phase_cycles: dict[str, int]
    event_counts: dict[str, int]
    parallelism: int = 1
    parallel_seconds: float = 0.0

    def to_text(self) -> str:
        lines = [
            f"total energy:  {self.energy_pj:.3f} pJ ({self.energy_j:.6e} J)",
            f"total latency: {self.latency_cycles} cycles "
            f"({self.latency_ns:.1f} ns, {self.seconds:.6e} s)",
        ]
        if self.parallelism > 1:
            lines.append(
                f"wall time at parallelism {self.parallelism}: "
                f"{self.parallel_seconds:.6e} s (approximate, ceil-divided work)"
            )
        lines.append("phase breakdown:")
        phases = sorted(set(self.by_phase_energy_pj) | set(self.by_phase_cycles))
        for phase in phases:
            lines.append(
                f"  {phase:<8} {self.by_phase_energy_pj.get(phase, 0.0):>14.3f} pJ"
                f"  {self.by_phase_cycles.get(phase, 0):>10} cycles"
            )
        lines.append("event counts:")
        for kind in sorted(self.event_counts):
            lines.append(f"  {kind:<12} {self.event_counts[kind]}")
        return "\n".join(lines) + "\n"

    def to_csv_rows(self) -> list[list]:
        rows = [["metric", "value"]]
        rows.append(["energy_pj", repr(self.energy_pj)])
        rows.append(["energy_j", repr(self.energy_j)])
        rows.append(["latency_cycles", self.latency_cycles])
        rows.append(["latency_ns", repr(self.latency_ns)])
        rows.append(["seconds", repr(self.seconds)])
        for phase in sorted(self.by_phase_energy_pj):
            rows.append([f"energy_pj.{phase}", repr(self.by_phase_energy_pj[phase])])
        for phase in sorted(self.by_phase_cycles):
            rows.append([f"latency_cycles.{phase}", self.by_phase_cycles[phase]])
        for kind in sorted(self.event_counts):
            rows.append([f"count.{kind}", self.event_counts[kind]])
        return rows


def report(
    ledger: CostLedger,
    catalog: ComponentCatalog = DEFAULT_CATALOG,
    parallelism: int = 1,
) -> CostReport:
    """Summarize a ledger. ``parallelism`` approximates wall time when
    independent work units (buckets, queries) run on that many banks."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    cycles = ledger.total_latency_cycles
    parallel_cycles = -(-cycles // parallelism)
    return CostReport(
        energy_pj=ledger.total_energy_pj,
        energy_j=ledger.total_energy_j,
        latency_cycles=cycles,
        latency_ns=ledger.total_latency_ns,
        seconds=ledger.total_seconds,
        by_phase_energy_pj=dict(ledger.energy_pj),
        by_phase_cycles=dict(ledger.latency_cycles),
        event_counts=dict(ledger.counts),
        parallelism=parallelism,
        parallel_seconds=parallel_cycles * CYCLE_NS * 1e-9,
    )


def area_report(
    num_tiles: int = 1, catalog: ComponentCatalog = DEFAULT_CATALOG
) -> dict[str, float]:
    """Area in mm^2 per component for a machine of num_tiles tiles.

    Uses unit_area * count where a unit figure exists, the measured total
    otherwise; the per-tile sum lands within 1% of the measured tile total.
    """
    if num_tiles < 1:
        raise ValueError("num_tiles must be >= 1")
    out: dict[str, float] = {}
    for name, spec in catalog.components().items():
        if spec.unit_area_um2 is not None:
            area = spec.unit_area_um2 * spec.count / 1e6
        else:
            area = spec.total_area_mm2
        out[name] = area * num_tiles
    out["total"] = sum(out.values())
    return out


# Externally published end-to-end figures for the same workloads, kept as
# context for reports. These are reported numbers from other systems and
# from the full-scale accelerator study; this simulator does not reproduce
# them (they depend on TB-scale datasets and an unstated tile count).
PUBLISHED_BASELINES = {
    "clustering_latency_s": {
        "PXD001468": {
            "Falcon (CPU)": 573.0,
            "msCRUSH (CPU)": 358.0,
            "HyperSpec (GPU)": 38.0,
            "SpecHD (FPGA)": 13.17,
            "SpecPCM (40nm)": 5.46,
        },
        "PXD000561": {
            "Falcon (CPU)": 134.0 * 60.0,
            "msCRUSH (CPU)": 42.0 * 60.0,
            "HyperSpec (GPU)": 17.0 * 60.0,
            "SpecHD (FPGA)": 179.0,
            "SpecPCM (40nm)": 98.4,
        },
    },
    "db_search_latency_s": {
        "iPRG2012": {
            "ANN-SoLo (CPU-GPU)": 6.45,
            "HyperOMS (GPU)": 2.08,
            "RRAM (130nm)": 1.22,
            "3D NAND (7nm)": 0.145,
            "SpecPCM (40nm)": 0.049,
        },
        "HEK293": {
            "ANN-SoLo (CPU-GPU)": 45.14,
            "HyperOMS (GPU)": 10.4,
            "SpecPCM (40nm)": 0.316,
        },
    },
    "energy_j": {
        "clustering PXD000561": 3.27,
        "db_search HEK293 subset": 0.149,
    },
}


def baselines_text() -> str:
    """Published reference figures formatted for the report CLI."""
    lines = ["published reference figures (reported, not reproduced here):"]
    for section, datasets in PUBLISHED_BASELINES.items():
        lines.append(f"{section}:")
        for dataset, entries in datasets.items():
            if isinstance(entries, dict):
                lines.append(f"  {dataset}:")
                for tool, value in entries.items():
                    lines.append(f"    {tool:<22} {value}")
            else:
                lines.append(f"  {dataset:<28} {entries}")
    return "\n".join(lines) + "\n"
