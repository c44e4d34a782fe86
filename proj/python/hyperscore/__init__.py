import json

from ._hyperscore import (
    ArgumentError,
    ConfigError,
    DataError,
    DegenerateFeatureError,
    DimensionError,
    FeatureBundle,
    FormatError,
    HyperScoreError,
    NumericalError,
    UndefinedCorrelationError,
    baseline_cosine_score,
    crossval_split,
    gradcheck,
    krcc,
    load_bundle,
    logistic_map,
    plcc,
    run_mos,
    screen_bt500,
    srcc,
    synth_bundle,
    write_bundle,
)
from ._hyperscore import Model
from ._hyperscore import run_command as _run_command


def new_model(config=None):
    """Fresh model from checkpoint-header keys (D, D_q, L, channels, grid, ...)."""
    return Model(json.dumps(config or {}))


def model_config(model):
    return json.loads(model.config_json)


def run(command, config=None, **overrides):
    """Run a CLI subcommand in-process. Overrides use '__' for the dot, e.g. train__epochs=3.

    Returns (exit_code, log_text).
    """
    args = []
    for key, value in overrides.items():
        args += ["--" + key.replace("__", "."), value if isinstance(value, str) else json.dumps(value)]
    return _run_command(command, config or "", args)


__all__ = [name for name in dir() if not name.startswith("_") and name != "json"]
