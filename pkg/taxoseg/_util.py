import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any
from typing import Dict
from typing import Iterable
from typing import List
from typing import Tuple
from typing import Union

from taxoseg.constants import DEFAULT_ENCODING
from taxoseg.constants import TILE_SEPARATOR
from taxoseg.constants import TTA_SEPARATOR

PathLike = Union[str, 'os.PathLike[str]']


def canonical_json(value: Any) -> str:
    """
    Serializes `value` with sorted keys and fixed separators so that equal
    values always produce equal text.
    """
    return json.dumps(value, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + '\n'


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode(DEFAULT_ENCODING)).hexdigest()


def atomic_write(path: PathLike, data: Union[bytes, str]) -> None:
    """
    Writes `data` to a temporary file next to `path` and renames it into place.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode(DEFAULT_ENCODING) if isinstance(data, str) else data
    fd, tmp_name = tempfile.mkstemp(prefix='.' + target.name + '.', dir=str(target.parent))
    try:
        with os.fdopen(fd, 'wb') as fp:
            fp.write(payload)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def file_stem(path: PathLike) -> str:
    """
    Returns the file name with every suffix removed (``a.b.npy`` -> ``a``).
    """
    name = Path(path).name
    return name.split('.', 1)[0]


def split_view_name(path: PathLike) -> Tuple[str, str]:
    """
    Splits ``<stem>@<transform>.npy`` into (stem, transform); plain files are identity views.
    """
    stem = file_stem(path)
    if TTA_SEPARATOR in stem:
        base, transform = stem.rsplit(TTA_SEPARATOR, 1)
        return base, transform
    return stem, 'identity'


def split_tile_name(stem: str) -> Tuple[str, Union[Tuple[int, int], None]]:
    """
    Splits ``<stem>__r<row>_c<col>`` into (stem, (row, col)); other stems carry no origin.
    """
    if TILE_SEPARATOR not in stem:
        return stem, None
    base, suffix = stem.rsplit(TILE_SEPARATOR, 1)
    parts = suffix.split('_')
    if len(parts) != 2 or not parts[0].startswith('r') or not parts[1].startswith('c'):
        return stem, None
    try:
        return base, (int(parts[0][1:]), int(parts[1][1:]))
    except ValueError:
        return stem, None


def pair_by_stem(left: Iterable[PathLike], right: Iterable[PathLike]) -> Tuple[
        List[Tuple[str, Path, Path]], List[str], List[str]]:
    """
    Pairs two file collections by stem.

    Returns the sorted pairs, the stems only found on the left and the stems only found on the right.
    """
    left_map: Dict[str, Path] = {file_stem(p): Path(p) for p in left}
    right_map: Dict[str, Path] = {file_stem(p): Path(p) for p in right}
    pairs = [(stem, left_map[stem], right_map[stem]) for stem in sorted(left_map.keys() & right_map.keys())]
    return pairs, sorted(left_map.keys() - right_map.keys()), sorted(right_map.keys() - left_map.keys())
