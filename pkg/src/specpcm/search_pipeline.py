"""Open database search on the reference bank with target-decoy FDR.

Reference hypervectors are programmed once (with write-verify, on the
long-retention device) and striped across tiles; each query is staged into
the input buffer and compared against every stored reference in one
bank-wide MVM. The best match is the argmax score; accepted matches are
selected by a running target-decoy false-discovery-rate filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import isa
from .config import SEARCH_DEFAULTS, Config
from .cost_model import DEFAULT_CATALOG, CostLedger
from .hdc_core import PackedHV, encode, gen_item_memory, make_rng, pack, pad_dimension
from .imc_array import BankLayout, MachineState, MvmConfig
from .pcm_device import PROFILES, noise_params_from_config
from .spectra_io import PreprocessConfig, Spectrum, preprocess


class CapacityError(ValueError):
    """The reference set does not fit the configured machine."""


@dataclass
class ReferenceBank:
    """Programmed reference store plus the metadata needed at query time."""

    machine: MachineState
    ref_ids: list[str]
    is_decoy: np.ndarray  # (N,) bool
    precursor_mz: np.ndarray  # (N,) float
    mlc_bits: int
    build_ledger: CostLedger  # one-time programming cost, kept separate
    program: list[isa.Instruction] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.ref_ids)

    @property
    def layout(self) -> BankLayout:
        return self.machine.layout


@dataclass
class SearchResult:
    query_id: str
    ref_id: str
    score: float  # digitized similarity (integer in ADC-bypass mode)
    is_decoy: bool
    accepted: bool = False


@dataclass
class FdrOutcome:
    accepted: list[SearchResult]
    threshold: float | None  # lowest accepted score; None -> nothing accepted
    identified_count: int


def build_reference_bank(
    refs: list[PackedHV],
    ref_ids: list[str],
    is_decoy: list[bool],
    precursor_mz: list[float],
    cfg: Config,
    rng: np.random.Generator,
    wv_cycles: int | None = None,
) -> ReferenceBank:
    """Program all references with write-verify; the one-time build cost is
    recorded separately from query traffic so it can be amortized."""
    if len(set(ref_ids)) != len(ref_ids):
        dupes = sorted({r for r in ref_ids if ref_ids.count(r) > 1})
        raise ValueError(f"duplicate reference ids: {dupes[:5]}")
    if not refs:
        raise ValueError("empty reference set")
    if wv_cycles is None:
        wv_cycles = cfg.get("search.wv_cycles")
    mlc_bits = refs[0].n
    dims = refs[0].values.shape[0]
    layout = BankLayout.for_workload(
        dims, len(refs), rows=cfg.get("array.rows"), cols=cfg.get("array.cols")
    )
    limit = cfg.get("machine.num_arrays")
    if limit and layout.num_arrays > limit:
        raise CapacityError(
            f"reference bank requires {layout.num_arrays} tiles but "
            f"machine.num_arrays = {limit}"
        )
    machine = MachineState(
        layout=layout,
        profile=PROFILES[cfg.get("device.kind")],
        noise=noise_params_from_config(cfg),
        mvm_cfg=MvmConfig(
            dac_bits=cfg.get("dac.bits"),
            adc_bits=cfg.get("adc.bits"),
            full_scale=cfg.get("adc.full_scale"),
            bypass=cfg.get("adc.bypass"),
        ),
        catalog=DEFAULT_CATALOG,
    )
    program: list[isa.Instruction] = []
    for i, hv in enumerate(refs):
        if hv.values.shape[0] != dims or hv.n != mlc_bits:
            raise ValueError("reference hypervector shapes differ")
        group, row = layout.locate(i)
        instr = isa.Instruction(
            "STORE_HV",
            {
                "arr_idx": group * layout.stripes,
                "col_addr": 0,
                "row_addr": row,
                "MLC_bits": mlc_bits,
                "write_cycles": wv_cycles,
                "data": hv.values.copy(),
            },
        )
        program.append(instr)
        isa.execute(instr, machine, rng)
    build_ledger = machine.ledger.copy()
    machine.ledger = CostLedger()  # query traffic accumulates separately
    return ReferenceBank(
        machine=machine,
        ref_ids=list(ref_ids),
        is_decoy=np.asarray(is_decoy, dtype=bool),
        precursor_mz=np.asarray(precursor_mz, dtype=np.float64),
        mlc_bits=mlc_bits,
        build_ledger=build_ledger,
        program=program,
    )


def search(
    query: PackedHV,
    bank: ReferenceBank,
    rng: np.random.Generator,
    query_id: str = "query",
    adc_bits: int | None = None,
    precursor_mz: float | None = None,
    precursor_window: float = 0.0,
    program: list[isa.Instruction] | None = None,
) -> SearchResult | None:
    """Compare one query against every stored reference simultaneously.

    The best reference is the argmax score (ties go to the smallest
    reference index). With a positive precursor_window, only references
    within that precursor m/z window are eligible; returns None when no
    reference qualifies.
    """
    layout = bank.layout
    if query.values.shape[0] != layout.dims_packed or query.n != bank.mlc_bits:
        raise ValueError("query does not match the reference bank dimensions")
    if adc_bits is None:
        adc_bits = bank.machine.mvm_cfg.adc_bits

    def issue(instr: isa.Instruction) -> isa.StepResult:
        if program is not None:
            program.append(instr)
        return isa.execute(instr, bank.machine, rng)

    issue(
        isa.Instruction(
            "STORE_HV",
            {
                "arr_idx": isa.BUFFER_ARRAY,
                "col_addr": 0,
                "row_addr": 0,
                "MLC_bits": bank.mlc_bits,
                "write_cycles": 0,
                "data": query.values.copy(),
            },
        )
    )
    num_rows = layout.rows if layout.row_groups > 1 else bank.size
    result = issue(
        isa.Instruction(
            "MVM_COMPUTE",
            {
                "row_addr": 0,
                "num_activated_row": num_rows,
                "ADC_bits": adc_bits,
                "MLC_bits": bank.mlc_bits,
            },
        )
    )
    scores = result.outputs[: bank.size]
    if precursor_window > 0.0:
        if precursor_mz is None:
            raise ValueError("precursor filtering needs the query precursor m/z")
        eligible = np.abs(bank.precursor_mz - precursor_mz) <= precursor_window
        if not eligible.any():
            return None
        masked = np.where(eligible, scores, -np.inf)
    else:
        masked = scores
    best = int(np.argmax(masked))  # first occurrence wins -> smallest index
    return SearchResult(
        query_id=query_id,
        ref_id=bank.ref_ids[best],
        score=float(scores[best]),
        is_decoy=bool(bank.is_decoy[best]),
    )


def fdr_filter(results: list[SearchResult], q: float) -> FdrOutcome:
    """Target-decoy FDR filtering at level q.

    Results are ranked by score descending; the running FDR after each
    score group is (#decoys so far) / max(1, #targets so far). The
    threshold is the lowest score whose prefix still satisfies FDR <= q
    (the largest accepting prefix); equal scores are admitted or rejected
    together. Accepted results are the target matches at or above the
    threshold.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    for r in results:
        r.accepted = False
    ranked = sorted(results, key=lambda r: -r.score)
    threshold: float | None = None
    targets = decoys = 0
    i = 0
    while i < len(ranked):
        j = i
        while j < len(ranked) and ranked[j].score == ranked[i].score:
            if ranked[j].is_decoy:
                decoys += 1
            else:
                targets += 1
            j += 1
        if decoys / max(1, targets) <= q:
            threshold = ranked[i].score
        i = j
    accepted: list[SearchResult] = []
    if threshold is not None:
        for r in results:
            if not r.is_decoy and r.score >= threshold:
                r.accepted = True
                accepted.append(r)
    return FdrOutcome(
        accepted=accepted, threshold=threshold, identified_count=len(accepted)
    )


@dataclass
class SearchRunResult:
    results: list[SearchResult]
    outcome: FdrOutcome
    bank: ReferenceBank
    query_ledger: CostLedger
    build_ledger: CostLedger
    skipped_queries: list[str]  # no eligible reference in the precursor window
    unique_peptides: int | None = None


def _encode_packed(
    spectra: list[Spectrum], pcfg: PreprocessConfig, im, n_pack: int, skip_zero: bool
) -> list[PackedHV]:
    return [
        pack(encode(preprocess(s, pcfg), im, skip_zero), n_pack) for s in spectra
    ]


def search_spectra(
    queries: list[Spectrum],
    refs: list[Spectrum],
    cfg: Config,
    seed: int | None = None,
    unique_peptides: bool = False,
) -> SearchRunResult:
    """End-to-end open search: encode, program the bank, run every query,
    FDR-filter the matches."""
    cfg = cfg.apply_stage_defaults(SEARCH_DEFAULTS)
    if seed is None:
        seed = cfg.get("hd.seed")
    pcfg = PreprocessConfig(
        mz_min=cfg.get("preprocess.mz_min"),
        mz_max=cfg.get("preprocess.mz_max"),
        bin_width=cfg.get("preprocess.bin_width"),
        top_k=cfg.get("preprocess.top_k"),
        intensity_transform=cfg.get("preprocess.intensity_transform"),
    )
    n_pack = cfg.get("pack.n")
    dim = pad_dimension(cfg.get("hd.dimension"), n_pack)
    im = gen_item_memory(seed, dim, pcfg.num_bins, cfg.get("hd.levels"))
    skip_zero = cfg.get("encode.skip_zero")

    ref_hvs = _encode_packed(refs, pcfg, im, n_pack, skip_zero)
    rng = make_rng(seed, 1)
    bank = build_reference_bank(
        ref_hvs,
        [r.id for r in refs],
        [r.is_decoy for r in refs],
        [r.precursor_mz for r in refs],
        cfg,
        rng,
    )

    window = cfg.get("search.precursor_window")
    results: list[SearchResult] = []
    skipped: list[str] = []
    for query_spec in queries:
        qhv = pack(encode(preprocess(query_spec, pcfg), im, skip_zero), n_pack)
        res = search(
            qhv,
            bank,
            rng,
            query_id=query_spec.id,
            precursor_mz=query_spec.precursor_mz,
            precursor_window=window,
        )
        if res is None:
            skipped.append(query_spec.id)
        else:
            results.append(res)

    outcome = fdr_filter(results, cfg.get("search.fdr_q"))
    unique = None
    if unique_peptides:
        ref_label = {r.id: (r.label if r.label is not None else r.id) for r in refs}
        unique = len({ref_label[r.ref_id] for r in outcome.accepted})
    return SearchRunResult(
        results=results,
        outcome=outcome,
        bank=bank,
        query_ledger=bank.machine.ledger,
        build_ledger=bank.build_ledger,
        skipped_queries=skipped,
        unique_peptides=unique,
    )
