"""Per-bucket complete-linkage clustering on the in-memory array.

Each bucket's hypervectors are programmed into a bank; every vector is then
read back and driven against all stored rows in one MVM to fill the
pairwise distance matrix. Agglomerative merging (complete linkage, i.e.
cluster distance = maximum member pair distance) runs in the near-memory
logic on that matrix, and every merge writes the new cluster representative
(the sign of the member sum) back to the array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import isa
from .config import Config
from .cost_model import DEFAULT_CATALOG, CostLedger
from .hdc_core import (
    ItemMemory,
    PackedHV,
    bundle,
    encode,
    gen_item_memory,
    make_rng,
    pack,
    pad_dimension,
)
from .imc_array import BankLayout, MachineState, MvmConfig
from .pcm_device import PROFILES, noise_params_from_config
from .spectra_io import PreprocessConfig, Spectrum, bucketize, preprocess


@dataclass
class DistanceMatrix:
    """Pairwise normalized distances in [0, 1]; symmetric, zero diagonal."""

    dist: np.ndarray  # (N, N) float64
    scores: np.ndarray  # raw similarity scores the distances came from

    @property
    def size(self) -> int:
        return self.dist.shape[0]


@dataclass
class ClusterAssignment:
    """Result of agglomerative merging over one distance matrix."""

    cluster_of: dict[int, int]  # point index -> cluster id (min member index)
    merge_log: list[tuple[int, int, float]] = field(default_factory=list)


@dataclass
class ClusterMetrics:
    clustered_ratio: float
    incorrect_ratio: float
    total: int
    clustered: int


def score_to_distance(scores: np.ndarray, dimension: int) -> np.ndarray:
    """Map similarity scores to [0, 1]: expected self-similarity D -> 0,
    antipodal -D -> 1. Clamped because packing and noise can push scores
    past +-D."""
    return np.clip((dimension - scores) / (2.0 * dimension), 0.0, 1.0)


def build_distance_matrix(
    hvs: list[PackedHV],
    machine: MachineState,
    rng: np.random.Generator,
    mlc_bits: int,
    wv_cycles: int,
    adc_bits: int,
    program: list[isa.Instruction] | None = None,
) -> DistanceMatrix:
    """Store all vectors, then one read + one bank-wide MVM per vector.

    All memory traffic goes through the ISA executor; when ``program`` is
    given, the issued instructions are appended to it so the run can be
    replayed verbatim.
    """
    n = len(hvs)
    if n == 0:
        raise ValueError("no hypervectors to cluster")
    layout = machine.layout
    dims = hvs[0].values.shape[0]
    if dims != layout.dims_packed:
        raise ValueError(f"HV width {dims} != bank width {layout.dims_packed}")
    if n > layout.capacity:
        raise ValueError(f"{n} HVs exceed bank capacity {layout.capacity}")

    def issue(instr: isa.Instruction) -> isa.StepResult:
        if program is not None:
            program.append(instr)
        return isa.execute(instr, machine, rng)

    for i, hv in enumerate(hvs):
        if hv.values.shape[0] != dims:
            raise ValueError("hypervector widths differ")
        group, row = layout.locate(i)
        issue(
            isa.Instruction(
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
        )

    num_rows = layout.rows if layout.row_groups > 1 else n
    scores = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        group, row = layout.locate(i)
        issue(
            isa.Instruction(
                "READ_HV",
                {
                    "data_size": dims,
                    "arr_idx": group * layout.stripes,
                    "col_addr": 0,
                    "row_addr": row,
                    "MLC_bits": mlc_bits,
                },
            )
        )
        result = issue(
            isa.Instruction(
                "MVM_COMPUTE",
                {
                    "row_addr": 0,
                    "num_activated_row": num_rows,
                    "ADC_bits": adc_bits,
                    "MLC_bits": mlc_bits,
                },
            )
        )
        scores[i] = result.outputs[:n]

    dimension = dims * mlc_bits  # padded bipolar dimension
    dist = np.zeros((n, n), dtype=np.float64)
    upper = np.triu_indices(n, k=1)
    normalized = score_to_distance(scores, dimension)
    dist[upper] = normalized[upper]  # row i's MVM supplies dist(i, j>i)
    dist = dist + dist.T
    return DistanceMatrix(dist=dist, scores=scores)


def agglomerate(dm: DistanceMatrix | np.ndarray, threshold: float) -> ClusterAssignment:
    """Complete-linkage agglomeration with a distance-threshold stop.

    Starts from singletons and repeatedly merges the active pair with the
    minimum complete-linkage distance while that minimum is <= threshold.
    Ties break on the smallest (cluster id, cluster id) pair; a merged
    cluster keeps the smaller id (its minimum member index).
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    dist = dm.dist if isinstance(dm, DistanceMatrix) else np.asarray(dm, float)
    n = dist.shape[0]
    if dist.shape != (n, n):
        raise ValueError("distance matrix must be square")

    work = dist.astype(np.float64).copy()
    np.fill_diagonal(work, np.inf)
    active = np.ones(n, dtype=bool)
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    merge_log: list[tuple[int, int, float]] = []

    masked = work.copy()
    masked[np.tril_indices(n)] = np.inf  # keep a < b; row-major argmin is
    # then lexicographic in (a, b), which implements the tie rule

    while True:
        flat = np.argmin(masked)
        a, b = divmod(int(flat), n)
        d = masked[a, b]
        if not np.isfinite(d) or d > threshold:
            break
        merge_log.append((a, b, float(d)))
        members[a].extend(members[b])
        del members[b]
        active[b] = False
        # complete linkage: distance to the merged cluster is the max of
        # the constituents' distances
        merged_row = np.maximum(work[a], work[b])
        work[a, :] = merged_row
        work[:, a] = merged_row
        work[a, a] = np.inf
        work[b, :] = np.inf
        work[:, b] = np.inf
        idx = np.nonzero(active)[0]
        smaller = idx[idx < a]
        larger = idx[idx > a]
        masked[smaller, a] = work[smaller, a]
        masked[a, larger] = work[a, larger]
        masked[b, :] = np.inf
        masked[:, b] = np.inf

    cluster_of = {i: cid for cid, mem in members.items() for i in mem}
    return ClusterAssignment(cluster_of=cluster_of, merge_log=merge_log)


def cluster_metrics(
    cluster_of: dict[str, str] | dict[int, int], labels: dict
) -> ClusterMetrics:
    """Clustered-spectra ratio and incorrect-clustering ratio.

    A spectrum is clustered when its cluster has >= 2 members; it is
    incorrect when its label differs from its cluster's majority label
    (majority ties go to the lexicographically smallest label).
    """
    clusters: dict = {}
    for sid, cid in cluster_of.items():
        clusters.setdefault(cid, []).append(sid)
    total = len(cluster_of)
    clustered = 0
    incorrect = 0
    for mem in clusters.values():
        if len(mem) < 2:
            continue
        clustered += len(mem)
        tally: dict[str, int] = {}
        for sid in mem:
            if sid not in labels or labels[sid] is None:
                raise ValueError(f"missing label for spectrum {sid!r}")
            tally[labels[sid]] = tally.get(labels[sid], 0) + 1
        majority = min(
            (label for label in tally), key=lambda L: (-tally[L], str(L))
        )
        incorrect += sum(1 for sid in mem if labels[sid] != majority)
    return ClusterMetrics(
        clustered_ratio=clustered / total if total else 0.0,
        incorrect_ratio=incorrect / clustered if clustered else 0.0,
        total=total,
        clustered=clustered,
    )


@dataclass
class BucketRun:
    """Everything one bucket produced, kept for replay comparisons."""

    key: object
    spectrum_ids: list[str]
    assignment: ClusterAssignment
    distance: DistanceMatrix
    program: list[isa.Instruction]
    layout: BankLayout
    rng_stream: int


@dataclass
class ClusterRunResult:
    cluster_of: dict[str, str]  # spectrum id -> global cluster label
    metrics: ClusterMetrics | None
    ledger: CostLedger
    buckets: list[BucketRun]
    threshold: float
    max_writes_per_cell: int


def _write_back_representatives(
    assignment: ClusterAssignment,
    bipolar: list[np.ndarray],
    layout: BankLayout,
    machine: MachineState,
    rng: np.random.Generator,
    mlc_bits: int,
    wv_cycles: int,
    program: list[isa.Instruction],
) -> None:
    """After each merge the new cluster representative (bundled members) is
    programmed to the merged cluster's row."""
    members: dict[int, list[int]] = {i: [i] for i in range(len(bipolar))}
    for a, b, _ in assignment.merge_log:
        members[a] = members[a] + members[b]
        del members[b]
        rep = bundle([bipolar[i] for i in members[a]])
        packed = pack(rep, mlc_bits)
        group, row = layout.locate(a)
        instr = isa.Instruction(
            "STORE_HV",
            {
                "arr_idx": group * layout.stripes,
                "col_addr": 0,
                "row_addr": row,
                "MLC_bits": mlc_bits,
                "write_cycles": wv_cycles,
                "data": packed.values.copy(),
            },
        )
        program.append(instr)
        isa.execute(instr, machine, rng)


def make_machine_for_bucket(
    cfg: Config, num_rows: int, dims_packed: int
) -> MachineState:
    """Bank sized to one bucket, using the configured device and noise."""
    layout = BankLayout.for_workload(
        dims_packed, num_rows, rows=cfg.get("array.rows"), cols=cfg.get("array.cols")
    )
    limit = cfg.get("machine.num_arrays")
    if limit and layout.num_arrays > limit:
        raise ValueError(
            f"workload requires {layout.num_arrays} tiles but machine.num_arrays "
            f"= {limit}"
        )
    return MachineState(
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


def cluster_spectra(
    spectra: list[Spectrum], cfg: Config, seed: int | None = None
) -> ClusterRunResult:
    """End-to-end clustering: bucketize, encode, per-bucket distance matrix
    via the array, agglomerate, write back representatives."""
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
    threshold = cfg.get("cluster.threshold")
    wv = cfg.get("noise.wv_cycles")
    adc_bits = cfg.get("adc.bits")

    by_id = {s.id: s for s in spectra}
    if len(by_id) != len(spectra):
        raise ValueError("duplicate spectrum ids in input")
    buckets = bucketize(spectra, cfg.get("bucket.window_width"))

    cluster_of: dict[str, str] = {}
    total_ledger = CostLedger()
    bucket_runs: list[BucketRun] = []
    max_writes = 0

    for ordinal, key in enumerate(sorted(buckets)):
        ids = buckets[key]
        label = f"b{ordinal}"
        if len(ids) == 1:
            cluster_of[ids[0]] = f"{label}_c0"
            continue
        bipolar = [
            encode(preprocess(by_id[sid], pcfg), im, skip_zero) for sid in ids
        ]
        packed = [pack(hv, n_pack) for hv in bipolar]
        machine = make_machine_for_bucket(cfg, len(ids), dim // n_pack)
        # independent deterministic noise stream per bucket
        rng_stream = ordinal + 1
        rng = make_rng(seed, rng_stream)
        program: list[isa.Instruction] = []
        dm = build_distance_matrix(
            packed, machine, rng, n_pack, wv, adc_bits, program
        )
        assignment = agglomerate(dm, threshold)
        _write_back_representatives(
            assignment, bipolar, machine.layout, machine, rng, n_pack, wv, program
        )
        for idx, sid in enumerate(ids):
            cluster_of[sid] = f"{label}_c{assignment.cluster_of[idx]}"
        total_ledger.merge(machine.ledger)
        max_writes = max(max_writes, machine.max_writes_per_cell())
        bucket_runs.append(
            BucketRun(
                key=key,
                spectrum_ids=list(ids),
                assignment=assignment,
                distance=dm,
                program=program,
                layout=machine.layout,
                rng_stream=rng_stream,
            )
        )

    labels = {s.id: s.label for s in spectra}
    metrics = None
    if all(lab is not None for lab in labels.values()) and labels:
        metrics = cluster_metrics(cluster_of, labels)
    return ClusterRunResult(
        cluster_of=cluster_of,
        metrics=metrics,
        ledger=total_ledger,
        buckets=bucket_runs,
        threshold=threshold,
        max_writes_per_cell=max_writes,
    )
