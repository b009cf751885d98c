"""
Run configuration: a JSON file, overridden by command-line flags, backed by taxoseg.settings
"""
import glob
import json
import logging
import math
import warnings
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from pathlib import Path
from typing import Any
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Union

from taxoseg._schema import RunConfigSchema
from taxoseg._util import PathLike
from taxoseg.constants import DEFAULT_ENCODING
from taxoseg.constants import MASK_SUFFIX
from taxoseg.constants import NORMALIZATIONS
from taxoseg.constants import OBJECTIVES
from taxoseg.constants import PREDICTION_SUFFIX
from taxoseg.constants import PROB_MAP_SUFFIX
from taxoseg.constants import TTA_TRANSFORMS
from taxoseg.exceptions import ConfigError
from taxoseg.exceptions import TaxosegException
from taxoseg.settings import get_settings_value
from taxoseg.taxonomy import TaxonomyTree
from taxoseg.taxonomy import resolve_taxonomy

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

_GLOB_CHARS = frozenset('*?[')


@dataclass
class RunConfig:
    """
    Resolved settings for one command. Relative paths are relative to ``base_dir``,
    the directory of the config file (or the working directory without one).
    """
    taxonomy: str = 'species'
    prob_maps: List[str] = field(default_factory=list)
    masks: List[str] = field(default_factory=list)
    predictions: List[str] = field(default_factory=list)
    target_gsd: float = field(default_factory=lambda: get_settings_value('target_gsd'))
    source_gsd: Union[None, float, Dict[str, float]] = None
    tile_size: Optional[int] = field(default_factory=lambda: get_settings_value('tile_size'))
    overlap: int = field(default_factory=lambda: get_settings_value('overlap'))
    thresholds: Optional[str] = None
    tta: List[str] = field(default_factory=lambda: list(TTA_TRANSFORMS))
    exclude: List[str] = field(default_factory=list)
    include_unknown: bool = field(default_factory=lambda: get_settings_value('include_unknown_in_macro'))
    include_misc: bool = field(default_factory=lambda: get_settings_value('include_misc_in_macro'))
    ranks: List[str] = field(default_factory=list)
    beta: float = field(default_factory=lambda: get_settings_value('beta'))
    normalize: str = field(default_factory=lambda: get_settings_value('weight_normalization'))
    objective: str = field(default_factory=lambda: get_settings_value('calibration_objective'))
    step: float = field(default_factory=lambda: get_settings_value('threshold_step'))
    classes: Optional[int] = None
    spec: Optional[str] = None
    out: Optional[str] = None
    jobs: int = field(default_factory=lambda: get_settings_value('jobs'))
    base_dir: Path = field(default_factory=Path.cwd)

    def resolve(self, path: PathLike) -> Path:
        candidate = Path(path)
        return candidate if candidate.is_absolute() else self.base_dir / candidate

    @property
    def out_dir(self) -> Path:
        if not self.out:
            raise ConfigError("No output directory given (--out or 'out')")
        return self.resolve(self.out)

    def expand(self, patterns: Sequence[str], suffix: str, what: str) -> List[Path]:
        """
        Expands file, directory and glob entries into a sorted list of files.
        Directories contribute their files ending in `suffix`.

        :raises ConfigError: if an entry matches nothing
        """
        found = set()
        for pattern in patterns:
            if _GLOB_CHARS & set(pattern):
                matches = [Path(p) for p in glob.glob(str(self.resolve(pattern)))]
            else:
                path = self.resolve(pattern)
                if path.is_dir():
                    matches = [p for p in path.iterdir() if p.name.endswith(suffix)]
                elif path.is_file():
                    matches = [path]
                else:
                    raise ConfigError("{} input '{}' does not exist".format(what, pattern))
            matches = [p for p in matches if p.is_file()]
            if not matches:
                raise ConfigError("{} input '{}' matches no files".format(what, pattern))
            found.update(matches)
        if not found:
            raise ConfigError("No {} inputs given".format(what))
        return sorted(found)

    def prob_map_files(self) -> List[Path]:
        return self.expand(self.prob_maps, PROB_MAP_SUFFIX, 'Probability map')

    def mask_files(self) -> List[Path]:
        return self.expand(self.masks, MASK_SUFFIX, 'Mask')

    def prediction_files(self) -> List[Path]:
        return self.expand(self.predictions, PREDICTION_SUFFIX, 'Prediction')

    def load_taxonomy(self) -> TaxonomyTree:
        path = self.resolve(self.taxonomy)
        try:
            return resolve_taxonomy(path if path.is_file() else self.taxonomy)
        except TaxosegException as e:
            raise ConfigError("Cannot load taxonomy '{}': {}".format(self.taxonomy, e.msg), e) from e

    def load_thresholds(self) -> Dict[str, float]:
        """
        Reads a thresholds file: either a plain ``{leaf: threshold}`` object or the
        output of ``taxoseg calibrate``.
        """
        if self.thresholds is None:
            return {}
        path = self.resolve(self.thresholds)
        try:
            document = json.loads(path.read_text(DEFAULT_ENCODING))
        except OSError as e:
            raise ConfigError("Cannot read thresholds file '{}'".format(self.thresholds), e) from e
        except ValueError as e:
            raise ConfigError("Thresholds file '{}' is not valid JSON".format(self.thresholds), e) from e
        if isinstance(document, dict) and isinstance(document.get('thresholds'), dict):
            document = document['thresholds']
        if not isinstance(document, dict):
            raise ConfigError("Thresholds file '{}' must map leaf ids to numbers".format(self.thresholds))
        return document

    def gsd_for(self, stem: str) -> Optional[float]:
        if isinstance(self.source_gsd, dict):
            return self.source_gsd.get(stem)
        return self.source_gsd

    def check(self) -> None:
        """
        :raises ConfigError: on values no command could run with
        """
        if self.tile_size is not None:
            if self.tile_size <= 0:
                raise ConfigError("tile_size must be positive, got {}".format(self.tile_size))
            if not 0 <= self.overlap < self.tile_size:
                raise ConfigError("overlap must be in [0, tile_size), got {}".format(self.overlap))
        if not (isinstance(self.target_gsd, (int, float)) and math.isfinite(self.target_gsd) and self.target_gsd > 0):
            raise ConfigError("target_gsd must be positive, got {!r}".format(self.target_gsd))
        unknown = sorted(set(self.tta) - set(TTA_TRANSFORMS))
        if unknown:
            raise ConfigError("Unknown tta transforms: {}".format(', '.join(unknown)))
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta must be in [0, 1), got {!r}".format(self.beta))
        if not 0.0 < self.step < 1.0:
            raise ConfigError("step must be in (0, 1), got {!r}".format(self.step))
        if self.normalize not in NORMALIZATIONS:
            raise ConfigError("normalize must be one of {}, got '{}'".format(NORMALIZATIONS, self.normalize))
        if self.objective not in OBJECTIVES:
            raise ConfigError("objective must be one of {}, got '{}'".format(OBJECTIVES, self.objective))
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1, got {}".format(self.jobs))

    def echo(self) -> Dict[str, Any]:
        """
        The resolved configuration as written to ``run.json``
        """
        document = {f.name: getattr(self, f.name) for f in fields(self) if f.name != 'base_dir'}
        document['base_dir'] = str(self.base_dir)
        return document


_LIST_KEYS = ('prob_maps', 'masks', 'predictions', 'tta', 'exclude', 'ranks')


def _normalize_value(key: str, value: Any) -> Any:
    if key in _LIST_KEYS and isinstance(value, str):
        return [value]
    if key == 'normalize' and isinstance(value, str):
        return value.replace('-', '_')
    return value


def load_run_config(path: Optional[PathLike] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Reads the JSON config at `path` (if any) and applies `overrides`, ignoring ``None`` values.
    Unknown keys in the file raise a warning and are ignored.
    """
    document: RunConfigSchema = {}
    base_dir = Path.cwd()
    if path is not None:
        config_path = Path(path)
        try:
            document = json.loads(config_path.read_text(DEFAULT_ENCODING))
        except OSError as e:
            raise ConfigError("Cannot read config file '{}'".format(path), e) from e
        except ValueError as e:
            raise ConfigError("Config file '{}' is not valid JSON: {}".format(path, e), e) from e
        if not isinstance(document, dict):
            raise ConfigError("Config file '{}' must contain a JSON object".format(path))
        base_dir = config_path.resolve().parent

    known = {f.name for f in fields(RunConfig)} - {'base_dir'}
    unknown = sorted(set(document) - known)
    if unknown:
        warnings.warn("Unknown run config keys are ignored: {}".format(', '.join(unknown)))

    values = {key: _normalize_value(key, value) for key, value in document.items() if key in known}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _normalize_value(key, value)
    try:
        config = RunConfig(base_dir=base_dir, **values)
        config.check()
    except TypeError as e:
        # wrongly typed values, e.g. a string tile_size
        raise ConfigError("Invalid run config: {}".format(e), e) from e
    log.debug("Run config: %s", config)
    return config
