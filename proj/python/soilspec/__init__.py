"""Spectral regression engine for soil property estimation."""

from ._soilspec import (  # noqa: F401
    NetSpec,
    QuantileCodec,
    SensorBand,
    SensorConfig,
    SpectralLibrary,
    SplitAssignment,
    TrainConfig,
    TrainedModel,
    __version__,
    block_fov,
    block_param_count,
    count_params,
    crop,
    default_prisma_config,
    exact_receptive_field,
    filters_for_block,
    idw_interpolate,
    load_library,
    load_sensor_config,
    load_split,
    load_trained,
    mae,
    make_mixture_library,
    mse,
    net_fov,
    num_blocks,
    pearson,
    r2,
    resample_linear,
    rmse,
    simulate_sensor,
    simulate_sensor_library,
    standardize_spectrum,
    stratified_split,
    summarize,
    train,
)
