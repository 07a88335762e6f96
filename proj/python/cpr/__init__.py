"""Conformal path reasoning: calibrated answer sets for multi-hop KGQA."""

from ._core import *  # noqa: F401,F403
from ._core import INF, RunConfig, RcvnetParams, Rng, phase_e2e


def run(config_path=None, out_dir=None, seed=None, settings=None):
    """Runs every phase and returns the metric rows as dicts.

    ``settings`` maps config-file keys (``"synth.n_queries"``, ``"alphas"``,
    ...) to values and is applied after the config file.
    """
    cfg = RunConfig.from_file(str(config_path)) if config_path else RunConfig()
    for key, value in (settings or {}).items():
        cfg.set(key, str(value))
    if out_dir is not None:
        cfg.out_dir = str(out_dir)
    if seed is not None:
        cfg.seed = int(seed)
    return phase_e2e(cfg)
