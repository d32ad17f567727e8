"""Multi-scale forecaster with learnable frequency-domain trend/seasonal filters."""
from .data import SeriesFrame, chronological_split, load_csv, synth_trend_seasonal
from .decomposition import FilterBank, decompose, fixed_decompose, frequency_grid
from .encoder import EncoderParams, encode
from .model import (LMSAutoTSF, ModelConfig, count_params, estimate_flops, load_checkpoint,
                    save_checkpoint)

__all__ = [
    "EncoderParams", "FilterBank", "LMSAutoTSF", "ModelConfig", "SeriesFrame",
    "chronological_split", "count_params", "decompose", "encode", "estimate_flops",
    "fixed_decompose", "frequency_grid", "load_checkpoint", "load_csv", "save_checkpoint",
    "synth_trend_seasonal",
]
__version__ = "0.1.0"
