"""specpcm: behavioral simulator and algorithm library for a PCM-based
in-memory-computing accelerator for mass-spectrometry clustering and
database search."""

from .config import Config, ConfigError, load_config
from .cost_model import (
    CLOCK_MHZ,
    CYCLE_NS,
    MVM_CYCLES,
    PROGRAM_PULSE_NS,
    ComponentCatalog,
    CostLedger,
    DEFAULT_CATALOG,
    area_report,
    event_energy,
    report,
)
from .hdc_core import (
    ItemMemory,
    PackedHV,
    bundle,
    dot_bipolar,
    dot_packed,
    encode,
    gen_item_memory,
    make_rng,
    pack,
    pad_dimension,
    quantize_level,
)
from .imc_array import ArrayState, BankLayout, MachineState, MvmConfig, mvm, mvm_full
from .pcm_device import (
    NoiseParams,
    PROFILES,
    SBTE_GST467,
    TITE_GST467,
    apply_noise,
    bit_error_rate,
    drift_resistance,
    endurance_check,
    sigma_for,
)
from .spectra_io import (
    BucketKey,
    FeatureVector,
    PreprocessConfig,
    Spectrum,
    bucketize,
    parse_mgf,
    preprocess,
    write_mgf,
)

__version__ = "0.1.0"
