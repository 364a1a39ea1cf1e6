"""Post-training INT8 quantization."""

from tinytc.quant.calibrate import CalibrationStats, calibrate
from tinytc.quant.compare import DeltaReport, compare
from tinytc.quant.fold import fold_batchnorm
from tinytc.quant.qmodel import (
    QuantModel,
    QuantParams,
    activation_qparams,
    quantize_model,
    quantized_forward,
    weight_qparams,
)

__all__ = [
    "CalibrationStats", "DeltaReport", "QuantModel", "QuantParams", "activation_qparams",
    "calibrate", "compare", "fold_batchnorm", "quantize_model", "quantized_forward", "weight_qparams",
]
