"""
Pixel-wise evaluation at every taxonomy rank: confusion matrices, F1 and Dice,
coverage regression and per-leaf threshold calibration.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import Collection
from typing import Dict
from typing import List
from typing import Mapping
from typing import NamedTuple
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np
from scipy import stats

from taxoseg._util import canonical_json
from taxoseg.constants import FLAG_NO_SUPPORT
from taxoseg.constants import FLAG_ZERO_X_VARIANCE
from taxoseg.constants import FLAG_ZERO_Y_VARIANCE
from taxoseg.constants import IGNORE_INDEX
from taxoseg.constants import OBJECTIVES
from taxoseg.constants import OBJECTIVE_DICE
from taxoseg.exceptions import MetricsError
from taxoseg.exceptions import ShapeMismatchError
from taxoseg.exceptions import ThresholdError
from taxoseg.gridio import LabelMask
from taxoseg.gridio import ProbMap
from taxoseg.hierinfer import PredictionMap
from taxoseg.hierinfer import aggregate_to_nodes
from taxoseg.hierinfer import hierarchical_argmax
from taxoseg.settings import get_settings_value
from taxoseg.taxonomy import TaxonomyTree

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

Prediction = Union[PredictionMap, LabelMask, np.ndarray]


def _leaf_grid(pred: Prediction) -> np.ndarray:
    if isinstance(pred, PredictionMap):
        return pred.chosen_leaf
    if isinstance(pred, LabelMask):
        return pred.data
    return np.asarray(pred)


def _paired(preds: Sequence[Prediction], gts: Sequence[LabelMask], tree: TaxonomyTree) -> List[
        Tuple[np.ndarray, LabelMask]]:
    if len(preds) != len(gts):
        raise MetricsError("Got {} predictions for {} ground truth masks".format(len(preds), len(gts)))
    pairs = []
    for index, (pred, gt) in enumerate(zip(preds, gts)):
        leaves = _leaf_grid(pred)
        if leaves.shape != gt.shape:
            raise ShapeMismatchError("Pair {}: prediction {} vs ground truth {}".format(index, leaves.shape, gt.shape))
        if leaves.size and int(leaves.max()) >= tree.num_channels:
            raise MetricsError("Pair {}: prediction holds channels outside the taxonomy".format(index))
        if gt.check(tree.num_channels):
            raise MetricsError("Pair {}: {}".format(index, gt.check(tree.num_channels)[0]))
        pairs.append((leaves, gt))
    return pairs


@dataclass(eq=False)
class ConfusionMatrix:
    """
    Pixel counts at one rank: rows are annotated classes, columns predicted classes.
    """
    rank: str
    class_ids: Tuple[str, ...]
    counts: np.ndarray

    def __repr__(self) -> str:
        return "ConfusionMatrix<{}: {} classes, {} pixels>".format(self.rank, len(self.class_ids), self.total)

    def __add__(self, other: 'ConfusionMatrix') -> 'ConfusionMatrix':
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        if (self.rank, self.class_ids) != (other.rank, other.class_ids):
            raise MetricsError("Cannot add confusion matrices over different classes")
        return ConfusionMatrix(self.rank, self.class_ids, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        """
        Annotated pixels per class
        """
        return self.counts.sum(axis=1)

    @property
    def predicted(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def no_support(self) -> np.ndarray:
        return self.support == 0

    @property
    def normalized(self) -> np.ndarray:
        """
        Row-normalized matrix; rows without support stay all zero.
        """
        support = self.support.astype(np.float64)
        normalized = np.zeros(self.counts.shape, dtype=np.float64)
        rows = support > 0
        normalized[rows] = self.counts[rows] / support[rows, np.newaxis]
        return normalized

    def rebin(self, tree: TaxonomyTree, rank: str) -> 'ConfusionMatrix':
        """
        Projects this matrix onto a coarser (or the same) rank.
        """
        if tree.rank_index(rank) < tree.rank_index(self.rank):
            raise MetricsError("Cannot rebin rank '{}' onto the finer rank '{}'".format(self.rank, rank))
        projection = tree.projection(rank)
        targets = tree.rank_nodes(rank)
        mapping = np.zeros((len(self.class_ids), len(targets)), dtype=np.int64)
        for index, node_id in enumerate(self.class_ids):
            channel = min(tree.channel_of(leaf) for leaf in tree.leaves_under(node_id))
            mapping[index, projection[channel]] = 1
        return ConfusionMatrix(rank, targets, mapping.T @ self.counts @ mapping)


def confusion_at_rank(
    preds: Sequence[Prediction],
    gts: Sequence[LabelMask],
    tree: TaxonomyTree,
    rank: str,
) -> ConfusionMatrix:
    """
    Tallies pooled pixel counts after projecting both prediction and annotation to `rank`.
    Ignore pixels are skipped.
    """
    tree.rank_index(rank)
    projection = tree.projection(rank)
    classes = tree.rank_nodes(rank)
    k = len(classes)
    counts = np.zeros(k * k, dtype=np.int64)
    for leaves, gt in _paired(preds, gts, tree):
        valid = gt.valid
        annotated = projection[gt.data[valid]]
        predicted = projection[leaves[valid]]
        counts += np.bincount(annotated * k + predicted, minlength=k * k)
    return ConfusionMatrix(rank, classes, counts.reshape(k, k))


@dataclass(frozen=True)
class ClassScore:
    class_id: str
    tp: int
    fp: int
    fn: int

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def precision(self) -> Optional[float]:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self) -> Optional[float]:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def f1(self) -> Optional[float]:
        """
        Harmonic mean of precision and recall; ``None`` when the class is absent from both sides.
        """
        if self.tp + self.fp + self.fn == 0:
            return None
        if self.tp == 0:
            return 0.0
        precision, recall = self.precision, self.recall
        return 2.0 * precision * recall / (precision + recall)  # type: ignore[operator]

    @property
    def dice(self) -> Optional[float]:
        denominator = 2 * self.tp + self.fp + self.fn
        return 2.0 * self.tp / denominator if denominator else None


def class_scores(matrix: ConfusionMatrix) -> List[ClassScore]:
    tp = np.diag(matrix.counts)
    fp = matrix.predicted - tp
    fn = matrix.support - tp
    return [
        ClassScore(class_id, int(tp[i]), int(fp[i]), int(fn[i]))
        for i, class_id in enumerate(matrix.class_ids)
    ]


def excluded_classes(
    tree: TaxonomyTree,
    rank: str,
    exclude: Collection[str] = (),
    include_unknown: Optional[bool] = None,
    include_misc: Optional[bool] = None,
) -> Tuple[str, ...]:
    """
    Classes at `rank` left out of macro averages: the `exclude` ids, unknown leaves
    unless `include_unknown`, and misc unless `include_misc`.
    """
    if include_unknown is None:
        include_unknown = get_settings_value('include_unknown_in_macro')
    if include_misc is None:
        include_misc = get_settings_value('include_misc_in_macro')
    dropped = set(exclude)
    if not include_unknown:
        dropped |= tree.unknown_leaf_ids
    if not include_misc and tree.misc_id is not None:
        dropped.add(tree.misc_id)
    return tuple(node_id for node_id in tree.rank_nodes(rank) if node_id in dropped)


@dataclass(frozen=True)
class ScoreSummary:
    """
    Per-class scores at one rank with their macro and support-weighted averages.

    ``averaged`` lists the classes that entered both averages.
    """
    rank: str
    metric: str
    per_class: Mapping[str, Optional[float]]
    macro: Optional[float]
    weighted: Optional[float]
    averaged: Tuple[str, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'per_class': dict(self.per_class),
            'macro': self.macro,
            'weighted': self.weighted,
            'averaged': list(self.averaged),
        }


def _summarize(matrix: ConfusionMatrix, metric: str, excluded: Collection[str]) -> ScoreSummary:
    scores = class_scores(matrix)
    per_class = {score.class_id: getattr(score, metric) for score in scores}
    kept = [s for s in scores if per_class[s.class_id] is not None and s.class_id not in excluded]
    macro = math.fsum(per_class[s.class_id] for s in kept) / len(kept) if kept else None  # type: ignore[misc]
    support = sum(s.support for s in kept)
    weighted = (
        math.fsum(s.support * per_class[s.class_id] for s in kept) / support  # type: ignore[operator]
        if support else None
    )
    return ScoreSummary(
        rank=matrix.rank,
        metric=metric,
        per_class=per_class,
        macro=macro,
        weighted=weighted,
        averaged=tuple(s.class_id for s in kept),
    )


def f1_scores(
    preds: Sequence[Prediction],
    gts: Sequence[LabelMask],
    tree: TaxonomyTree,
    rank: Optional[str] = None,
    exclude: Collection[str] = (),
    include_unknown: Optional[bool] = None,
    include_misc: Optional[bool] = None,
) -> ScoreSummary:
    """
    Pooled per-class F1 at `rank` (the leaf rank by default) and its macro average
    over the classes that are present and not excluded.
    """
    rank = rank or tree.leaf_rank
    matrix = confusion_at_rank(preds, gts, tree, rank)
    return _summarize(matrix, 'f1', excluded_classes(tree, rank, exclude, include_unknown, include_misc))


def dice_scores(
    preds: Sequence[Prediction],
    gts: Sequence[LabelMask],
    tree: TaxonomyTree,
    rank: Optional[str] = None,
    exclude: Collection[str] = (),
    include_unknown: Optional[bool] = None,
    include_misc: Optional[bool] = None,
) -> ScoreSummary:
    rank = rank or tree.leaf_rank
    matrix = confusion_at_rank(preds, gts, tree, rank)
    return _summarize(matrix, 'dice', excluded_classes(tree, rank, exclude, include_unknown, include_misc))


class Coverage(NamedTuple):
    fraction: float
    defined: bool


def image_coverage(
    grid: Union[LabelMask, PredictionMap, np.ndarray],
    class_index: int,
    valid: Optional[np.ndarray] = None,
) -> Coverage:
    """
    Fraction of the non-ignore pixels of `grid` holding `class_index`.

    `valid` further restricts the counted pixels, e.g. to a prediction's annotated area.
    With no pixel to count the fraction is reported as 0 and flagged undefined.
    """
    if isinstance(grid, LabelMask):
        values, support = grid.data, grid.valid
    elif isinstance(grid, PredictionMap):
        values, support = grid.chosen_leaf, np.ones(grid.chosen_leaf.shape, dtype=bool)
    else:
        values = np.asarray(grid)
        support = values != IGNORE_INDEX
    if valid is not None:
        support = support & valid
    counted = int(np.count_nonzero(support))
    if counted == 0:
        return Coverage(0.0, False)
    return Coverage(int(np.count_nonzero(values[support] == class_index)) / counted, True)


@dataclass(frozen=True)
class CoveragePair:
    image_id: str
    class_id: str
    annotated_fraction: float
    predicted_fraction: float


def coverage_pairs(
    image_id: str,
    pred: Prediction,
    gt: LabelMask,
    tree: TaxonomyTree,
    rank: Optional[str] = None,
) -> List[CoveragePair]:
    """
    Annotated and predicted coverage of every class at `rank` for one image, both
    measured over the image's annotated pixels. Fully ignored images yield no pairs.
    """
    rank = rank or tree.leaf_rank
    ((leaves, gt),) = _paired([pred], [gt], tree)
    projection = tree.projection(rank)
    valid = gt.valid
    if not valid.any():
        log.debug("%s has no annotated pixels, skipping coverage", image_id)
        return []
    annotated = np.where(valid, projection[np.where(valid, gt.data, 0)], IGNORE_INDEX)
    predicted = projection[leaves]
    pairs = []
    for index, class_id in enumerate(tree.rank_nodes(rank)):
        pairs.append(CoveragePair(
            image_id=image_id,
            class_id=class_id,
            annotated_fraction=image_coverage(annotated, index, valid).fraction,
            predicted_fraction=image_coverage(predicted, index, valid).fraction,
        ))
    return pairs


@dataclass(frozen=True)
class RegressionStats:
    """
    Least-squares fit of predicted coverage (y) on annotated coverage (x).

    ``r2_fit`` measures the fitted line, ``r2_identity`` and ``rmse`` the line y = x.
    """
    class_id: Optional[str]
    n: int
    slope: Optional[float]
    intercept: Optional[float]
    r2_fit: Optional[float]
    r2_identity: Optional[float]
    rmse: float
    flags: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'slope': self.slope,
            'intercept': self.intercept,
            'r2_fit': self.r2_fit,
            'r2_identity': self.r2_identity,
            'rmse': self.rmse,
            'flags': list(self.flags),
        }


def coverage_regression(pairs: Sequence[CoveragePair]) -> RegressionStats:
    """
    :raises MetricsError: with fewer than two points
    """
    if len(pairs) < 2:
        raise MetricsError("Coverage regression needs at least 2 points, got {}".format(len(pairs)))
    class_ids = {pair.class_id for pair in pairs}
    class_id = pairs[0].class_id if len(class_ids) == 1 else None
    x = np.array([pair.annotated_fraction for pair in pairs], dtype=np.float64)
    y = np.array([pair.predicted_fraction for pair in pairs], dtype=np.float64)

    flags = []
    ss_identity = float(np.sum((y - x) ** 2))
    ss_total = float(np.sum((y - y.mean()) ** 2))
    rmse = math.sqrt(ss_identity / len(pairs))
    if ss_total > 0:
        r2_identity: Optional[float] = 1.0 - ss_identity / ss_total
    else:
        flags.append(FLAG_ZERO_Y_VARIANCE)
        r2_identity = 1.0 if ss_identity == 0 else None

    slope = intercept = r2_fit = None
    if np.ptp(x) == 0:
        flags.append(FLAG_ZERO_X_VARIANCE)
    else:
        fit = stats.linregress(x, y)
        slope, intercept = float(fit.slope), float(fit.intercept)
        r2_fit = float(fit.rvalue) ** 2 if ss_total > 0 else None
    return RegressionStats(
        class_id=class_id,
        n=len(pairs),
        slope=slope,
        intercept=intercept,
        r2_fit=r2_fit,
        r2_identity=r2_identity,
        rmse=rmse,
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class CalibrationResult:
    """
    Per-leaf thresholds with the objective at threshold 0 and at the chosen threshold.
    """
    objective: str
    step: float
    thresholds: Mapping[str, float]
    baseline: Mapping[str, Optional[float]]
    best: Mapping[str, Optional[float]]
    flags: Mapping[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return canonical_json({
            'objective': self.objective,
            'step': self.step,
            'thresholds': dict(self.thresholds),
            'baseline': dict(self.baseline),
            'best': dict(self.best),
            'flags': dict(self.flags),
        })


def threshold_grid(step: float) -> np.ndarray:
    """
    ``0, step, 2 step, ...`` up to 1 inclusive, rounded to absorb float drift.
    """
    count = int(math.floor(1.0 / step + 1e-9))
    grid = np.round(np.arange(count + 1) * step, 10)
    if grid[-1] < 1.0:
        grid = np.append(grid, 1.0)
    return grid


def _objective(tp: np.ndarray, fp: np.ndarray, fn: int, objective: str) -> np.ndarray:
    tp = tp.astype(np.float64)
    fp = fp.astype(np.float64)
    if objective == OBJECTIVE_DICE:
        return 2.0 * tp / (2.0 * tp + fp + fn)
    with np.errstate(divide='ignore', invalid='ignore'):
        precision = np.where(tp > 0, tp / (tp + fp), 0.0)
        recall = tp / (tp + fn)
        f1 = np.where(tp > 0, 2.0 * precision * recall / (precision + recall), 0.0)
    return f1


def calibrate_thresholds(
    items: Sequence[Tuple[ProbMap, LabelMask]],
    tree: TaxonomyTree,
    objective: Optional[str] = None,
    step: Optional[float] = None,
) -> CalibrationResult:
    """
    Picks, for each leaf independently, the confidence threshold that maximizes the
    leaf's pooled objective when only that leaf's threshold is active.

    Pixels failing a threshold fall back to misc, so for leaf ``c`` a threshold only
    turns some of ``c``'s predictions into misc. The lowest threshold wins ties;
    leaves never annotated get 0 and a ``no support`` flag.
    """
    objective = objective or get_settings_value('calibration_objective')
    step = get_settings_value('threshold_step') if step is None else step
    if objective not in OBJECTIVES:
        raise MetricsError("Unknown calibration objective '{}', expected one of {}".format(objective, OBJECTIVES))
    if not 0.0 < step < 1.0:
        raise MetricsError("Threshold step must be in (0, 1), got {!r}".format(step))
    if not items:
        raise MetricsError("Calibration needs at least one validation image")
    if tree.misc_channel is None:
        raise ThresholdError("Confidence thresholds need a taxonomy with a misc leaf")

    channels = tree.num_channels
    hits: List[List[np.ndarray]] = [[] for _ in range(channels)]
    false_hits: List[List[np.ndarray]] = [[] for _ in range(channels)]
    support = np.zeros(channels, dtype=np.int64)
    for prob_map, gt in items:
        pred = hierarchical_argmax(aggregate_to_nodes(prob_map, tree), tree)
        ((leaves, gt),) = _paired([pred], [gt], tree)
        valid = gt.valid
        chosen = leaves[valid]
        truth = gt.data[valid]
        confidence = pred.rank_confidence[tree.leaf_rank][valid].astype(np.float64)
        support += np.bincount(truth, minlength=channels)
        for channel in np.unique(chosen):
            picked = chosen == channel
            correct = truth[picked] == channel
            hits[channel].append(confidence[picked][correct])
            false_hits[channel].append(confidence[picked][~correct])

    grid = threshold_grid(step)
    thresholds: Dict[str, float] = {}
    baseline: Dict[str, Optional[float]] = {}
    best: Dict[str, Optional[float]] = {}
    flags: Dict[str, str] = {}
    for channel, leaf_id in enumerate(tree.channel_binding):
        if channel == tree.misc_channel:
            continue
        if support[channel] == 0:
            thresholds[leaf_id] = 0.0
            baseline[leaf_id] = best[leaf_id] = None
            flags[leaf_id] = FLAG_NO_SUPPORT
            continue
        tp_conf = np.sort(np.concatenate(hits[channel] or [np.empty(0)]))
        fp_conf = np.sort(np.concatenate(false_hits[channel] or [np.empty(0)]))
        # a pixel is kept when confidence >= tau
        tp = len(tp_conf) - np.searchsorted(tp_conf, grid, side='left')
        fp = len(fp_conf) - np.searchsorted(fp_conf, grid, side='left')
        scores = _objective(tp, fp, int(support[channel]) - tp, objective)
        winner = int(np.argmax(scores))
        thresholds[leaf_id] = float(grid[winner])
        baseline[leaf_id] = float(scores[0])
        best[leaf_id] = float(scores[winner])
        log.debug("Leaf %s: threshold %.4f lifts %s from %.4f to %.4f",
                  leaf_id, grid[winner], objective, scores[0], scores[winner])
    return CalibrationResult(
        objective=objective,
        step=float(step),
        thresholds=thresholds,
        baseline=baseline,
        best=best,
        flags=flags,
    )


@dataclass(eq=False)
class RankReport:
    rank: str
    confusion: ConfusionMatrix
    f1: ScoreSummary
    dice: ScoreSummary
    coverage: List[CoveragePair]
    regression: Dict[str, RegressionStats]
    excluded: Tuple[str, ...]

    def to_dict(self) -> Dict[str, Any]:
        matrix = self.confusion
        return {
            'classes': list(matrix.class_ids),
            'excluded': list(self.excluded),
            'confusion': matrix.counts.tolist(),
            'normalized': matrix.normalized.tolist(),
            'no_support': [c for c, flag in zip(matrix.class_ids, matrix.no_support) if flag],
            'f1': self.f1.to_dict(),
            'dice': self.dice.to_dict(),
            'coverage': [
                {
                    'image': pair.image_id,
                    'class': pair.class_id,
                    'annotated': pair.annotated_fraction,
                    'predicted': pair.predicted_fraction,
                }
                for pair in self.coverage
            ],
            'regression': {class_id: fit.to_dict() for class_id, fit in self.regression.items()},
        }


_CLASS_COLUMNS = (
    'rank', 'class', 'display_name', 'support', 'predicted', 'tp', 'fp', 'fn',
    'precision', 'recall', 'f1', 'dice', 'in_macro', 'n', 'slope', 'intercept',
    'r2_fit', 'r2_identity', 'rmse',
)


@dataclass(eq=False)
class EvaluationReport:
    """
    Evaluation of a set of predictions at every requested rank, with the
    configuration that produced it.
    """
    tree: TaxonomyTree
    images: Tuple[str, ...]
    ranks: Dict[str, RankReport]
    config: Dict[str, Any] = field(default_factory=dict)

    def macro_f1(self, rank: str) -> Optional[float]:
        return self.ranks[rank].f1.macro

    def to_json(self) -> str:
        return canonical_json({
            'taxonomy': self.tree.name,
            'taxonomy_hash': self.tree.content_hash,
            'images': list(self.images),
            'config': self.config,
            'ranks': {rank: report.to_dict() for rank, report in self.ranks.items()},
        })

    def class_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for rank, report in self.ranks.items():
            for score in class_scores(report.confusion):
                regression = report.regression.get(score.class_id)
                rows.append({
                    'rank': rank,
                    'class': score.class_id,
                    'display_name': self.tree.display_name(score.class_id),
                    'support': score.support,
                    'predicted': score.tp + score.fp,
                    'tp': score.tp,
                    'fp': score.fp,
                    'fn': score.fn,
                    'precision': score.precision,
                    'recall': score.recall,
                    'f1': score.f1,
                    'dice': score.dice,
                    'in_macro': score.class_id in report.f1.averaged,
                    'n': regression.n if regression else 0,
                    'slope': regression.slope if regression else None,
                    'intercept': regression.intercept if regression else None,
                    'r2_fit': regression.r2_fit if regression else None,
                    'r2_identity': regression.r2_identity if regression else None,
                    'rmse': regression.rmse if regression else None,
                })
        return rows

    def class_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=_CLASS_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in self.class_rows():
            writer.writerow({key: _csv_value(value) for key, value in row.items()})
        return buffer.getvalue()

    def confusion_csv(self, rank: str) -> str:
        """
        Row-normalized confusion matrix, annotated classes on rows.
        """
        matrix = self.ranks[rank].confusion
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['annotated \\ predicted'] + list(matrix.class_ids))
        for class_id, row in zip(matrix.class_ids, matrix.normalized):
            writer.writerow([class_id] + ['{:.6f}'.format(value) for value in row])
        return buffer.getvalue()


def _csv_value(value: Any) -> Any:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'yes' if value else 'no'
    if isinstance(value, float):
        return '{:.6f}'.format(value)
    return value


def evaluate(
    items: Sequence[Tuple[str, Prediction, LabelMask]],
    tree: TaxonomyTree,
    ranks: Optional[Sequence[str]] = None,
    exclude: Collection[str] = (),
    include_unknown: Optional[bool] = None,
    include_misc: Optional[bool] = None,
    config: Optional[Dict[str, Any]] = None,
) -> EvaluationReport:
    """
    Builds the full report over ``(image_id, prediction, annotation)`` items.

    Items are processed in image id order, so the report does not depend on the order
    in which they were collected.
    """
    ordered = sorted(items, key=lambda item: item[0])
    preds = [pred for _, pred, _ in ordered]
    gts = [gt for _, _, gt in ordered]
    _paired(preds, gts, tree)
    ranks = list(ranks) if ranks else list(tree.rank_order)

    reports = {}
    for rank in ranks:
        matrix = confusion_at_rank(preds, gts, tree, rank)
        excluded = excluded_classes(tree, rank, exclude, include_unknown, include_misc)
        coverage = [pair for image_id, pred, gt in ordered for pair in coverage_pairs(image_id, pred, gt, tree, rank)]
        regression = {}
        for class_id in matrix.class_ids:
            class_pairs = [pair for pair in coverage if pair.class_id == class_id]
            if len(class_pairs) >= 2:
                regression[class_id] = coverage_regression(class_pairs)
        reports[rank] = RankReport(
            rank=rank,
            confusion=matrix,
            f1=_summarize(matrix, 'f1', excluded),
            dice=_summarize(matrix, 'dice', excluded),
            coverage=coverage,
            regression=regression,
            excluded=excluded,
        )
        log.debug("Rank %s: macro F1 %s over %d classes", rank, reports[rank].f1.macro, len(reports[rank].f1.averaged))
    return EvaluationReport(
        tree=tree,
        images=tuple(image_id for image_id, _, _ in ordered),
        ranks=reports,
        config=dict(config or {}),
    )
