"""
Subcommand implementations. Each takes a resolved RunConfig and returns an exit status.
"""
import json
import logging
from pathlib import Path
from typing import Any
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from taxoseg import __version__
from taxoseg._util import atomic_write
from taxoseg._util import canonical_json
from taxoseg._util import pair_by_stem
from taxoseg._util import split_tile_name
from taxoseg._util import split_view_name
from taxoseg.balance import PixelCounts
from taxoseg.balance import count_pixels
from taxoseg.balance import effective_weights
from taxoseg.cli.config import RunConfig
from taxoseg.cli.runner import ItemResult
from taxoseg.cli.runner import WorkerPool
from taxoseg.cli.runner import write_error_log
from taxoseg.constants import CONFIDENCE_SUFFIX
from taxoseg.constants import CONFIDENCE_SUMMARY
from taxoseg.constants import CONFUSION_CSV
from taxoseg.constants import DEFAULT_ENCODING
from taxoseg.constants import ERROR_LOG
from taxoseg.constants import EXIT_OK
from taxoseg.constants import EXIT_PARTIAL_FAILURE
from taxoseg.constants import IDENTITY
from taxoseg.constants import PREDICTION_SUFFIX
from taxoseg.constants import REPORT_CSV
from taxoseg.constants import REPORT_JSON
from taxoseg.constants import RUN_ECHO
from taxoseg.constants import SIDECAR_SUFFIX
from taxoseg.constants import THRESHOLDS_JSON
from taxoseg.constants import TTA_CONFIDENCE_SUFFIX
from taxoseg.constants import TTA_TRANSFORMS
from taxoseg.constants import WEIGHTS_JSON
from taxoseg.exceptions import ConfigError
from taxoseg.exceptions import GridFormatError
from taxoseg.exceptions import InferenceError
from taxoseg.exceptions import MetricsError
from taxoseg.exceptions import ShapeMismatchError
from taxoseg.exceptions import TaxosegException
from taxoseg.exceptions import TtaError
from taxoseg.gridio import GsdSpec
from taxoseg.gridio import LabelMask
from taxoseg.gridio import ProbMap
from taxoseg.gridio import plan_tiles
from taxoseg.gridio import read_label_mask
from taxoseg.gridio import read_prob_map
from taxoseg.gridio import rescale_to_gsd
from taxoseg.gridio import stitch_maps
from taxoseg.gridio import store_prob_map
from taxoseg.gridio import write_label_mask
from taxoseg.gridio import write_prob_map
from taxoseg.hierinfer import TtaView
from taxoseg.hierinfer import check_thresholds
from taxoseg.hierinfer import confidence_summary
from taxoseg.hierinfer import fuse_tta
from taxoseg.hierinfer import predict
from taxoseg.hierinfer import store_prediction
from taxoseg.metrics import EvaluationReport
from taxoseg.metrics import calibrate_thresholds
from taxoseg.metrics import evaluate
from taxoseg.synthfield import generate_field
from taxoseg.synthfield import parse_field_spec
from taxoseg.taxonomy import TaxonomyTree
from taxoseg.taxonomy import resolve_taxonomy

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

Origin = Tuple[int, int]
ViewFiles = Dict[str, List[Tuple[Optional[Origin], Path]]]


def _write_run_echo(out_dir: Path, command: str, config: RunConfig, tree: TaxonomyTree) -> None:
    atomic_write(out_dir / RUN_ECHO, canonical_json({
        'command': command,
        'version': __version__,
        'config': config.echo(),
        'taxonomy': tree.name,
        'taxonomy_hash': tree.content_hash,
    }))


def _finish(out_dir: Path, failures: Sequence[Tuple[str, str]]) -> int:
    write_error_log(out_dir, failures)
    if failures:
        log.warning("%d item(s) failed, see %s", len(failures), out_dir / ERROR_LOG)
        return EXIT_PARTIAL_FAILURE
    return EXIT_OK


def _failures(results: Sequence[ItemResult[Any]]) -> List[Tuple[str, str]]:
    return [(result.stem, result.error) for result in results if result.error is not None]


def _check_node_ids(config: RunConfig, tree: TaxonomyTree) -> None:
    for rank in config.ranks:
        if rank not in tree.rank_order:
            raise ConfigError("Unknown rank '{}', the taxonomy has {}".format(rank, ', '.join(tree.rank_order)))
    for node_id in config.exclude:
        if node_id not in tree.nodes:
            raise ConfigError("Cannot exclude unknown class '{}'".format(node_id))


# infer

def group_views(paths: Sequence[Path]) -> Dict[str, ViewFiles]:
    """
    Groups ``<stem>[__r<row>_c<col>][@<transform>].npy`` files by stem, then by transform.
    """
    groups: Dict[str, ViewFiles] = {}
    for path in paths:
        view_stem, transform = split_view_name(path)
        stem, origin = split_tile_name(view_stem)
        groups.setdefault(stem, {}).setdefault(transform, []).append((origin, path))
    return groups


def _read_checked(path: Path) -> ProbMap:
    prob_map = read_prob_map(path)
    problems = prob_map.check()
    if problems:
        raise GridFormatError("{}: {}".format(path.name, problems[0]))
    return prob_map


def _load_view(stem: str, transform: str, entries: List[Tuple[Optional[Origin], Path]]) -> ProbMap:
    origins = [origin for origin, _ in entries]
    if all(origin is None for origin in origins):
        if len(entries) > 1:
            raise InferenceError("{} files share the stem '{}' for view '{}'".format(len(entries), stem, transform))
        return _read_checked(entries[0][1])
    if any(origin is None for origin in origins):
        raise InferenceError("'{}' mixes whole-image and tile files for view '{}'".format(stem, transform))

    tiles = [(origin, _read_checked(path)) for origin, path in sorted(entries)]  # type: ignore[type-var]
    height = max(origin[0] + tile.height for origin, tile in tiles)  # type: ignore[index]
    width = max(origin[1] + tile.width for origin, tile in tiles)  # type: ignore[index]
    log.debug("Stitching %d tiles of %s@%s into %dx%d", len(tiles), stem, transform, height, width)
    return stitch_maps(tiles, height, width)  # type: ignore[arg-type]


def infer_item(
    stem: str,
    views: ViewFiles,
    config: RunConfig,
    tree: TaxonomyTree,
    thresholds: Mapping[str, float],
    out_dir: Path,
) -> Dict[str, Dict[str, float]]:
    """
    Runs the full inference pipeline for one image and writes its artifacts.
    Returns the image's confidence summary.
    """
    unknown = sorted(set(views) - set(TTA_TRANSFORMS))
    if unknown:
        raise TtaError("Unknown augmentation transform '{}'".format(unknown[0]))
    for transform in sorted(set(views) - set(config.tta)):
        log.warning("%s: skipping view '%s', it is not enabled", stem, transform)
    enabled = [
        TtaView(_load_view(stem, transform, views[transform]), transform)
        for transform in sorted(set(views) & set(config.tta), key=TTA_TRANSFORMS.index)
    ]
    if not enabled:
        raise TtaError("No enabled views for '{}'".format(stem))

    tta_confidence: Optional[np.ndarray] = None
    if len(enabled) == 1 and enabled[0].transform == IDENTITY:
        prob_map = enabled[0].prob_map
    else:
        prob_map, tta_confidence = fuse_tta(enabled)

    source_gsd = config.gsd_for(stem)
    if source_gsd is not None:
        spec = GsdSpec(source_gsd, config.target_gsd)
        prob_map = rescale_to_gsd(prob_map, spec)
        if tta_confidence is not None:
            # peak of the resampled fused map, not a resampled peak
            tta_confidence = prob_map.data.max(axis=2)

    plan = None
    if config.tile_size is not None:
        tile_size = min(config.tile_size, prob_map.height, prob_map.width)
        plan = plan_tiles(prob_map.height, prob_map.width, tile_size, min(config.overlap, tile_size - 1))
    pred = predict(prob_map, tree, plan, thresholds or None)

    leaf_png, confidence, sidecar = store_prediction(pred)
    atomic_write(out_dir / (stem + PREDICTION_SUFFIX), leaf_png)
    atomic_write(out_dir / (stem + CONFIDENCE_SUFFIX), confidence)
    atomic_write(out_dir / (stem + SIDECAR_SUFFIX), sidecar)
    if tta_confidence is not None:
        atomic_write(out_dir / (stem + TTA_CONFIDENCE_SUFFIX), store_prob_map(ProbMap(tta_confidence[:, :, np.newaxis])))
    return confidence_summary(pred)


def cmd_infer(config: RunConfig) -> int:
    tree = config.load_taxonomy()
    thresholds = config.load_thresholds()
    try:
        check_thresholds(thresholds, tree)
    except TaxosegException as e:
        raise ConfigError("Invalid thresholds file '{}': {}".format(config.thresholds, e.msg), e) from e
    groups = group_views(config.prob_map_files())
    out_dir = config.out_dir

    pool: WorkerPool = WorkerPool('infer', config.jobs)
    results = pool.run_sync(
        (stem, lambda stem=stem, views=views: infer_item(stem, views, config, tree, thresholds, out_dir))  # type: ignore[misc]
        for stem, views in sorted(groups.items())
    )
    summaries = {result.stem: result.value for result in results if result.ok}
    atomic_write(out_dir / CONFIDENCE_SUMMARY, canonical_json(summaries))
    _write_run_echo(out_dir, 'infer', config, tree)
    return _finish(out_dir, _failures(results))


# evaluate

def _check_sidecar(pred_path: Path, tree: TaxonomyTree) -> None:
    sidecar = pred_path.with_name(pred_path.name[:-len(PREDICTION_SUFFIX)] + SIDECAR_SUFFIX)
    if not sidecar.is_file():
        return
    try:
        meta = json.loads(sidecar.read_text(DEFAULT_ENCODING))
    except ValueError as e:
        raise InferenceError("Unreadable prediction sidecar {}".format(sidecar), e) from e
    if isinstance(meta, dict) and meta.get('taxonomy_hash', tree.content_hash) != tree.content_hash:
        raise InferenceError("{} was predicted with a different taxonomy".format(pred_path.name))


def load_pair(pred_path: Path, mask_path: Path, tree: TaxonomyTree) -> Tuple[LabelMask, LabelMask]:
    _check_sidecar(pred_path, tree)
    pred = read_label_mask(pred_path)
    gt = read_label_mask(mask_path)
    if pred.shape != gt.shape:
        raise ShapeMismatchError("Prediction {} vs ground truth {}".format(pred.shape, gt.shape))
    problems = pred.check(tree.num_channels) + gt.check(tree.num_channels)
    if problems:
        raise MetricsError(problems[0])
    return pred, gt


def _unpaired(only_preds: Sequence[str], only_masks: Sequence[str]) -> List[Tuple[str, str]]:
    return [(stem, 'no ground truth mask') for stem in only_preds] + \
        [(stem, 'no prediction') for stem in only_masks]


def _format_score(value: Optional[float]) -> str:
    return 'n/a' if value is None else '{:.6f}'.format(value)


def print_summary(report: EvaluationReport) -> None:
    print('{:<12}{:>10}'.format('rank', 'macro_f1'))
    for rank in report.ranks:
        print('{:<12}{:>10}'.format(rank, _format_score(report.macro_f1(rank))))
    print()
    print('{:<12}{:<16}{:>10}'.format('rank', 'class', 'r2_fit'))
    for rank, rank_report in report.ranks.items():
        for class_id, fit in rank_report.regression.items():
            print('{:<12}{:<16}{:>10}'.format(rank, class_id, _format_score(fit.r2_fit)))


def cmd_evaluate(config: RunConfig) -> int:
    tree = config.load_taxonomy()
    _check_node_ids(config, tree)
    thresholds = config.load_thresholds()
    pairs, only_preds, only_masks = pair_by_stem(config.prediction_files(), config.mask_files())
    out_dir = config.out_dir

    pool: WorkerPool = WorkerPool('evaluate', config.jobs)
    results = pool.run_sync(
        (stem, lambda p=pred_path, m=mask_path: load_pair(p, m, tree))  # type: ignore[misc]
        for stem, pred_path, mask_path in pairs
    )
    failures = _unpaired(only_preds, only_masks) + _failures(results)
    items = [(result.stem, result.value[0], result.value[1]) for result in results if result.value is not None]
    if items:
        report = evaluate(
            items,
            tree,
            ranks=config.ranks or None,
            exclude=config.exclude,
            include_unknown=config.include_unknown,
            include_misc=config.include_misc,
            config={
                'exclude': sorted(config.exclude),
                'include_unknown': config.include_unknown,
                'include_misc': config.include_misc,
                'ranks': list(config.ranks or tree.rank_order),
                'thresholds': thresholds or None,
            },
        )
        atomic_write(out_dir / REPORT_JSON, report.to_json())
        atomic_write(out_dir / REPORT_CSV, report.class_csv())
        for rank in report.ranks:
            atomic_write(out_dir / CONFUSION_CSV.format(rank=rank), report.confusion_csv(rank))
        print_summary(report)
    else:
        log.error("No valid prediction / ground truth pairs to evaluate")
    _write_run_echo(out_dir, 'evaluate', config, tree)
    if not items and not failures:
        failures = [('*', 'no pairs evaluated')]
    return _finish(out_dir, failures)


# calibrate

def load_calibration_item(map_path: Path, mask_path: Path, tree: TaxonomyTree) -> Tuple[ProbMap, LabelMask]:
    prob_map = _read_checked(map_path)
    gt = read_label_mask(mask_path)
    if (prob_map.height, prob_map.width) != gt.shape:
        raise ShapeMismatchError("Probability map {} vs ground truth {}".format(prob_map.shape[:2], gt.shape))
    if prob_map.channels != tree.num_channels:
        raise InferenceError("Probability map has {} channels but the taxonomy binds {} leaves".format(
            prob_map.channels, tree.num_channels))
    return prob_map, gt


def cmd_calibrate(config: RunConfig) -> int:
    tree = config.load_taxonomy()
    if tree.misc_id is None:
        raise ConfigError("Calibration needs a taxonomy with a misc leaf")
    pairs, only_maps, only_masks = pair_by_stem(config.prob_map_files(), config.mask_files())
    out_dir = config.out_dir

    pool: WorkerPool = WorkerPool('calibrate', config.jobs)
    results = pool.run_sync(
        (stem, lambda p=map_path, m=mask_path: load_calibration_item(p, m, tree))  # type: ignore[misc]
        for stem, map_path, mask_path in pairs
    )
    failures = _unpaired(only_maps, only_masks) + _failures(results)
    items = [result.value for result in results if result.value is not None]
    if items:
        result = calibrate_thresholds(items, tree, objective=config.objective, step=config.step)
        atomic_write(out_dir / THRESHOLDS_JSON, result.to_json())
    else:
        log.error("No valid probability map / ground truth pairs to calibrate on")
        failures = failures or [('*', 'no pairs calibrated')]
    _write_run_echo(out_dir, 'calibrate', config, tree)
    return _finish(out_dir, failures)


# weights

def cmd_weights(config: RunConfig) -> int:
    tree = config.load_taxonomy()
    num_classes = config.classes if config.classes is not None else tree.num_channels
    if num_classes < 1:
        raise ConfigError("classes must be positive, got {}".format(num_classes))
    masks = config.mask_files()
    out_dir = config.out_dir

    pool: WorkerPool = WorkerPool('weights', config.jobs)
    results = pool.run_sync(
        (path.name, lambda path=path: count_pixels([read_label_mask(path)], num_classes))  # type: ignore[misc]
        for path in masks
    )
    counts = PixelCounts(counts=(0,) * num_classes)
    for result in results:
        if result.value is not None:
            counts = counts + result.value
    weights = effective_weights(counts, beta=config.beta, normalization=config.normalize)
    document = weights.to_json()
    atomic_write(out_dir / WEIGHTS_JSON, document)
    print(document, end='')
    _write_run_echo(out_dir, 'weights', config, tree)
    return _finish(out_dir, _failures(results))


# synth

def cmd_synth(config: RunConfig) -> int:
    if not config.spec:
        raise ConfigError("No field spec given (--spec or 'spec')")
    spec_path = config.resolve(config.spec)
    try:
        spec = parse_field_spec(spec_path.read_text(DEFAULT_ENCODING))
        taxonomy_path = spec_path.parent / spec.taxonomy
        tree = resolve_taxonomy(taxonomy_path if taxonomy_path.is_file() else spec.taxonomy)
        prob_map, mask = generate_field(spec, tree)
    except OSError as e:
        raise ConfigError("Cannot read field spec '{}'".format(config.spec), e) from e
    except TaxosegException as e:
        raise ConfigError("Invalid field spec '{}': {}".format(config.spec, e.msg), e) from e
    out_dir = config.out_dir

    write_prob_map(out_dir / (spec.name + '.npy'), prob_map)
    write_label_mask(out_dir / (spec.name + '.png'), mask)
    atomic_write(out_dir / (spec.name + '.field.json'), spec.to_json())
    _write_run_echo(out_dir, 'synth', config, tree)
    return _finish(out_dir, [])


COMMANDS = {
    'infer': cmd_infer,
    'evaluate': cmd_evaluate,
    'calibrate': cmd_calibrate,
    'weights': cmd_weights,
    'synth': cmd_synth,
}
