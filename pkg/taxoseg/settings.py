import importlib.util
import logging
import os
import warnings
from os import getenv

from typing import Any

log = logging.getLogger(__name__)

default_settings_dict = {
    'tile_size': 1024,
    'overlap': 128,
    'target_gsd': 0.7543,
    'beta': 0.99,
    'weight_normalization': 'mean_one',
    'threshold_step': 0.01,
    'calibration_objective': 'f1',
    'prob_sum_tolerance': 1e-4,
    'jobs': 4,
    'include_unknown_in_macro': False,
    'include_misc_in_macro': True,
}

OVERRIDE_SETTINGS_PATH = getenv('TAXOSEG_CONFIG', '/etc/taxoseg/global_default_settings.py')


def _load_module(name, path):
    # https://docs.python.org/3/library/importlib.html#importing-a-source-file-directly
    spec = importlib.util.spec_from_file_location(name, path)
    module = importlib.util.module_from_spec(spec)  # type: ignore
    spec.loader.exec_module(module)  # type: ignore
    return module


override_settings = {}
if os.path.isfile(OVERRIDE_SETTINGS_PATH):
    override_settings = _load_module('__taxoseg_override_settings__', OVERRIDE_SETTINGS_PATH)
    unknown = sorted(
        name for name in vars(override_settings)
        if not name.startswith('_') and name not in default_settings_dict
    )
    if unknown:
        warnings.warn("Unknown taxoseg settings are ignored: {}".format(', '.join(unknown)))
    log.info('Override settings for taxoseg available {}'.format(OVERRIDE_SETTINGS_PATH))
else:
    log.info('Override settings for taxoseg not available {}'.format(OVERRIDE_SETTINGS_PATH))
    log.info('Using Default settings value')


def get_settings_value(key: str) -> Any:
    """
    Fetches the value from the override file.
    If the value is not present, then falls back to the defaults above.
    """
    if hasattr(override_settings, key):
        return getattr(override_settings, key)

    if key in default_settings_dict:
        return default_settings_dict[key]

    return None
