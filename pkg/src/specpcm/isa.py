"""Three-instruction control ISA and its executor.

Programs are text, one instruction per line: ``OPCODE key=value ...``.
STORE_HV programs a data vector at (arr_idx, col_addr, row_addr), striping
across consecutive arrays of the same row group when the vector is wider
than one tile; arr_idx = -1 targets the input staging buffer instead of
PCM. READ_HV loads a stored vector back into the staging buffer (and the
trace). MVM_COMPUTE drives the staging buffer into every array of the bank
at once and leaves one accumulated score per logical row in the output
buffer — which is how a retrieved or query vector is compared against all
stored vectors simultaneously.

The high-level pipelines issue their memory traffic exclusively through
``execute``, so recording the instruction stream and replaying it on a
fresh machine with the same seed reproduces a run exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cost_model import CostLedger, PricedEvent, event_energy, merge_parallel
from .imc_array import MachineState, MvmConfig, mvm_full, read_row, store_row_segment

BUFFER_ARRAY = -1  # pseudo-array index of the input staging buffer

# opcode -> operand names, in canonical text order. All operands are
# mandatory; "data" takes a comma-separated integer list or @file#row.
OPERANDS = {
    "STORE_HV": ("arr_idx", "col_addr", "row_addr", "MLC_bits", "write_cycles", "data"),
    "READ_HV": ("data_size", "arr_idx", "col_addr", "row_addr", "MLC_bits"),
    "MVM_COMPUTE": ("row_addr", "num_activated_row", "ADC_bits", "MLC_bits"),
}

_RANGES = {
    "MLC_bits": (1, 3),
    "ADC_bits": (1, 6),
    "write_cycles": (0, 1_000_000),
    "num_activated_row": (1, 128),
    "row_addr": (0, 10**9),
    "col_addr": (0, 10**9),
    "data_size": (1, 10**9),
    "arr_idx": (BUFFER_ARRAY, 10**9),
}


class IsaParseError(ValueError):
    """Malformed program text; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str) -> None:
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class IsaTrap(RuntimeError):
    """Runtime fault (bad address, buffer overrun); carries the
    0-based instruction index once raised through run()."""

    def __init__(self, message: str, index: int | None = None) -> None:
        super().__init__(message)
        self.index = index


@dataclass
class Instruction:
    opcode: str
    operands: dict[str, object]  # ints, plus "data" -> np.ndarray of ints

    def to_text(self) -> str:
        parts = [self.opcode]
        for name in OPERANDS[self.opcode]:
            value = self.operands[name]
            if name == "data":
                parts.append("data=" + ",".join(str(int(v)) for v in value))
            else:
                parts.append(f"{name}={value}")
        return " ".join(parts)


@dataclass
class TraceStep:
    index: int
    opcode: str
    latency_cycles: int
    energy_pj: float
    outputs: np.ndarray | None


@dataclass
class Trace:
    steps: list[TraceStep] = field(default_factory=list)

    @property
    def total_cycles(self) -> int:
        return sum(s.latency_cycles for s in self.steps)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["index", "opcode", "latency_cycles", "energy_pj", "outputs"])
            for s in self.steps:
                outputs = ""
                if s.outputs is not None:
                    outputs = ";".join(_fmt(v) for v in s.outputs)
                writer.writerow([s.index, s.opcode, s.latency_cycles, repr(s.energy_pj), outputs])


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def _load_data_ref(ref: str, base_dir: Path, lineno: int) -> np.ndarray:
    """Resolve a @file#row reference to a CSV row of integers
    (non-integer fields, e.g. a leading id column, are skipped)."""
    if "#" not in ref:
        raise IsaParseError(lineno, f"data reference needs '#row': {ref!r}")
    name, _, row_str = ref.partition("#")
    try:
        row_idx = int(row_str)
    except ValueError:
        raise IsaParseError(lineno, f"bad data row index: {row_str!r}") from None
    path = Path(name)
    if not path.is_absolute():
        path = base_dir / path
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            rows = [r for r in csv.reader(handle) if r]
    except OSError as exc:
        raise IsaParseError(lineno, f"cannot read data file {path}: {exc}") from None
    if not 0 <= row_idx < len(rows):
        raise IsaParseError(lineno, f"data row {row_idx} out of range in {path}")
    values = []
    for fielditem in rows[row_idx]:
        try:
            values.append(int(fielditem))
        except ValueError:
            continue
    if not values:
        raise IsaParseError(lineno, f"no integer data in {path} row {row_idx}")
    return np.asarray(values, dtype=np.int64)


def _strip_comment(line: str) -> str:
    # a comment starts at a '#' at line start or after whitespace, so
    # @file#row data references survive
    if line.startswith("#"):
        return ""
    for i in range(1, len(line)):
        if line[i] == "#" and line[i - 1] in " \t":
            return line[:i]
    return line


def parse_program(text: str, base_dir: str | Path = ".") -> list[Instruction]:
    """Parse program text; unknown opcodes/keys, missing operands, and
    out-of-range values raise IsaParseError with the line number."""
    base = Path(base_dir)
    program: list[Instruction] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        tokens = line.split()
        opcode = tokens[0]
        if opcode not in OPERANDS:
            raise IsaParseError(lineno, f"unknown opcode: {opcode!r}")
        expected = OPERANDS[opcode]
        operands: dict[str, object] = {}
        for token in tokens[1:]:
            if "=" not in token:
                raise IsaParseError(lineno, f"expected key=value, got {token!r}")
            key, _, value = token.partition("=")
            if key not in expected:
                raise IsaParseError(lineno, f"unknown operand {key!r} for {opcode}")
            if key in operands:
                raise IsaParseError(lineno, f"duplicate operand {key!r}")
            if key == "data":
                if value.startswith("@"):
                    operands[key] = _load_data_ref(value[1:], base, lineno)
                else:
                    try:
                        operands[key] = np.asarray(
                            [int(v) for v in value.split(",")], dtype=np.int64
                        )
                    except ValueError:
                        raise IsaParseError(
                            lineno, f"data must be comma-separated integers: {value!r}"
                        ) from None
            else:
                try:
                    operands[key] = int(value)
                except ValueError:
                    raise IsaParseError(
                        lineno, f"operand {key} must be an integer: {value!r}"
                    ) from None
        for name in expected:
            if name not in operands:
                raise IsaParseError(lineno, f"missing operand {name!r} for {opcode}")
        for name, value in operands.items():
            if name == "data":
                continue
            lo, hi = _RANGES[name]
            if not lo <= value <= hi:
                raise IsaParseError(
                    lineno, f"operand {name}={value} out of range [{lo}, {hi}]"
                )
        program.append(Instruction(opcode=opcode, operands=operands))
    return program


def format_program(program: list[Instruction]) -> str:
    return "\n".join(instr.to_text() for instr in program) + "\n"


@dataclass
class StepResult:
    outputs: np.ndarray | None
    latency_cycles: int
    energy_pj: float


def _store_striped(
    machine: MachineState,
    arr_idx: int,
    col_addr: int,
    row_addr: int,
    data: np.ndarray,
    mlc_bits: int,
    wv_cycles: int,
    rng: np.random.Generator,
) -> list[PricedEvent]:
    """Write data starting at (arr_idx, col_addr), walking consecutive
    stripe arrays of the same row group; chunks program in parallel."""
    layout = machine.layout
    stripe0 = arr_idx % layout.stripes
    group = arr_idx // layout.stripes
    capacity = (layout.stripes - stripe0) * layout.cols - col_addr
    if data.shape[0] > capacity:
        raise IsaTrap(
            f"data of {data.shape[0]} values exceeds {capacity} cells from "
            f"array {arr_idx} col {col_addr}"
        )
    events = []
    offset = 0
    stripe = stripe0
    col = col_addr
    while offset < data.shape[0]:
        chunk = min(layout.cols - col, data.shape[0] - offset)
        array = machine.array(group * layout.stripes + stripe)
        try:
            events.append(
                store_row_segment(
                    array,
                    row_addr,
                    data[offset : offset + chunk],
                    mlc_bits,
                    wv_cycles,
                    rng,
                    machine.catalog,
                    col_start=col,
                )
            )
        except ValueError as exc:
            raise IsaTrap(str(exc)) from None
        offset += chunk
        stripe += 1
        col = 0
    return events


def execute(
    instr: Instruction, machine: MachineState, rng: np.random.Generator
) -> StepResult:
    """Execute one instruction against the machine; events land in the
    machine ledger, outputs (if any) are returned for the trace."""
    ops = instr.operands
    if instr.opcode == "STORE_HV":
        data = np.asarray(ops["data"], dtype=np.float64)
        arr_idx = int(ops["arr_idx"])
        col_addr = int(ops["col_addr"])
        if arr_idx == BUFFER_ARRAY:
            if col_addr + data.shape[0] > machine.input_buffer.shape[0]:
                raise IsaTrap(
                    f"buffer write of {data.shape[0]} values at {col_addr} exceeds "
                    f"{machine.input_buffer.shape[0]}"
                )
            machine.reset_buffer()
            machine.input_buffer[col_addr : col_addr + data.shape[0]] = data
            # staging-buffer load overlaps the next MVM's input generation;
            # costed as one cycle of near-memory logic, no added latency
            event = PricedEvent(
                "buffer_load",
                "asic",
                0,
                energy_pj=event_energy("asic", {"cycles": 1}, machine.catalog),
            )
            machine.ledger.record(event)
            return StepResult(None, event.latency_cycles, event.energy_pj)
        if not 0 <= arr_idx < machine.layout.num_arrays:
            raise IsaTrap(f"array index {arr_idx} out of range")
        events = _store_striped(
            machine,
            arr_idx,
            col_addr,
            int(ops["row_addr"]),
            data,
            int(ops["MLC_bits"]),
            int(ops["write_cycles"]),
            rng,
        )
        merged = merge_parallel(events, "program", "program")
        machine.ledger.record(merged)
        return StepResult(None, merged.latency_cycles, merged.energy_pj)

    if instr.opcode == "READ_HV":
        arr_idx = int(ops["arr_idx"])
        col_addr = int(ops["col_addr"])
        row_addr = int(ops["row_addr"])
        size = int(ops["data_size"])
        if not 0 <= arr_idx < machine.layout.num_arrays:
            raise IsaTrap(f"array index {arr_idx} out of range")
        layout = machine.layout
        stripe = arr_idx % layout.stripes
        group = arr_idx // layout.stripes
        capacity = (layout.stripes - stripe) * layout.cols - col_addr
        if size > capacity:
            raise IsaTrap(
                f"read of {size} values exceeds {capacity} cells from "
                f"array {arr_idx} col {col_addr}"
            )
        chunks: list[np.ndarray] = []
        events: list[PricedEvent] = []
        remaining, col = size, col_addr
        while remaining > 0:
            length = min(layout.cols - col, remaining)
            array = machine.array(group * layout.stripes + stripe)
            try:
                values, event = read_row(
                    array, row_addr, machine.catalog, rng, col_start=col, length=length
                )
            except ValueError as exc:
                raise IsaTrap(str(exc)) from None
            chunks.append(values)
            events.append(event)
            remaining -= length
            stripe += 1
            col = 0
        data = np.concatenate(chunks)
        machine.reset_buffer()
        machine.input_buffer[:size] = data
        merged = merge_parallel(events, "read", "read")
        machine.ledger.record(merged)
        return StepResult(data, merged.latency_cycles, merged.energy_pj)

    if instr.opcode == "MVM_COMPUTE":
        row_addr = int(ops["row_addr"])
        num = int(ops["num_activated_row"])
        if row_addr + num > machine.layout.rows:
            raise IsaTrap(
                f"activated rows [{row_addr}, {row_addr + num}) exceed "
                f"{machine.layout.rows}"
            )
        cfg = MvmConfig(
            dac_bits=machine.mvm_cfg.dac_bits,
            adc_bits=int(ops["ADC_bits"]),
            full_scale=machine.mvm_cfg.full_scale,
            bypass=machine.mvm_cfg.bypass,
        )
        scores, events = mvm_full(
            machine,
            machine.input_buffer[: machine.layout.dims_packed],
            cfg,
            int(ops["MLC_bits"]),
            rng,
            row_start=row_addr,
            num_rows=num,
        )
        machine.output_buffer = scores
        machine.ledger.record_all(events)
        return StepResult(
            scores,
            sum(e.latency_cycles for e in events),
            sum(e.energy_pj for e in events),
        )

    raise IsaTrap(f"unknown opcode {instr.opcode!r}")


def run(
    program: list[Instruction], machine: MachineState, rng: np.random.Generator
) -> tuple[Trace, CostLedger]:
    """Execute a program sequentially; the first trap aborts with the
    partial trace attached to the exception."""
    trace = Trace()
    for index, instr in enumerate(program):
        try:
            result = execute(instr, machine, rng)
        except IsaTrap as trap:
            trap.index = index
            trap.partial_trace = trace  # type: ignore[attr-defined]
            raise
        trace.steps.append(
            TraceStep(
                index=index,
                opcode=instr.opcode,
                latency_cycles=result.latency_cycles,
                energy_pj=result.energy_pj,
                outputs=result.outputs,
            )
        )
    return trace, machine.ledger
