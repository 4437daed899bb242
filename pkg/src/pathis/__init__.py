"""Limited-view photoacoustic tomography: forward models, FDTD simulation,
UBP / time-reversal / model-based baselines and HIS, a Fourier-feature
coordinate network fitted through the forward operator."""
from .core import (
    BadMagicError,
    ConfigError,
    DimensionError,
    FormatError,
    GeometryError,
    Image,
    ImagingGrid,
    NumericError,
    PathisError,
    Rng,
    SensorArray,
    SensorData,
    TimeConfig,
    TruncatedError,
    default_time_config,
    make_grid,
    make_sensor_arc,
    read_image,
    read_sensor_data,
    write_image,
    write_sensor_data,
)
from .forward import ForwardOperator, adjoint, forward, operator_norm_estimate
from .kernels import BACKEND
from .metrics import MetricsReport, evaluate, psnr, ssim
from .phantoms import PhantomSpec, generate
from .recon import (
    HisConfig,
    MbConfig,
    TrainLog,
    reconstruct_his,
    reconstruct_mb,
    reconstruct_tr,
    reconstruct_ubp,
)
from .wave import FdtdConfig, fdtd_forward, time_reversal

__version__ = "0.1.0"
