"""
Command line interface: ``taxoseg {infer,evaluate,calibrate,weights,synth}``
"""
import argparse
import logging
import os
import sys
from typing import Any
from typing import Dict
from typing import Optional
from typing import Sequence

from taxoseg import __version__
from taxoseg.cli.commands import COMMANDS
from taxoseg.cli.config import RunConfig
from taxoseg.cli.config import load_run_config
from taxoseg.constants import EXIT_CONFIG_ERROR
from taxoseg.constants import OBJECTIVES
from taxoseg.constants import TTA_TRANSFORMS
from taxoseg.exceptions import ConfigError

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

__all__ = ['main', 'build_parser', 'RunConfig']

_PATH_KEYS = ('prob_maps', 'masks', 'predictions', 'thresholds', 'spec', 'out')
_OVERRIDE_KEYS = (
    'taxonomy', 'prob_maps', 'masks', 'predictions', 'target_gsd', 'source_gsd', 'tile_size', 'overlap',
    'thresholds', 'tta', 'exclude', 'include_unknown', 'include_misc', 'ranks', 'beta', 'normalize',
    'objective', 'step', 'classes', 'spec', 'out', 'jobs',
)


def _add_global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # on subcommands the flags default to SUPPRESS so they do not clobber values given before the subcommand
    default: Dict[str, Any] = {'default': argparse.SUPPRESS} if suppress else {}
    parser.add_argument('--config', metavar='PATH', help="run configuration JSON file", **default)
    parser.add_argument('--jobs', metavar='N', type=int, help="number of parallel workers", **default)
    parser.add_argument('--out', metavar='DIR', help="output directory", **default)
    parser.add_argument('--verbose', '-v', action='store_true', help="log at DEBUG level", **default)


def _add_taxonomy_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--taxonomy', help="taxonomy file or bundled name (species, damage, vegetation)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='taxoseg', description=__doc__.strip())
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    _add_global_flags(parser, suppress=False)
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True

    infer = subparsers.add_parser('infer', help="hierarchical inference over probability maps")
    _add_global_flags(infer, suppress=True)
    _add_taxonomy_flag(infer)
    infer.add_argument('--prob-maps', nargs='+', metavar='GLOB', help="probability map files, directories or globs")
    infer.add_argument('--thresholds', metavar='PATH', help="per-leaf confidence thresholds JSON")
    infer.add_argument('--target-gsd', type=float, metavar='MM', help="target ground sample distance, mm/px")
    infer.add_argument('--source-gsd', type=float, metavar='MM', help="ground sample distance of every input")
    infer.add_argument('--tile-size', type=int, metavar='PX')
    infer.add_argument('--overlap', type=int, metavar='PX')
    infer.add_argument('--tta', nargs='+', choices=TTA_TRANSFORMS, help="augmentation views to fuse")

    evaluate = subparsers.add_parser('evaluate', help="score predictions against ground truth at every rank")
    _add_global_flags(evaluate, suppress=True)
    _add_taxonomy_flag(evaluate)
    evaluate.add_argument('--predictions', nargs='+', metavar='GLOB', help="prediction PNG files, directories or globs")
    evaluate.add_argument('--masks', nargs='+', metavar='GLOB', help="ground truth PNG files, directories or globs")
    evaluate.add_argument('--ranks', nargs='+', metavar='RANK', help="ranks to evaluate (default: all)")
    evaluate.add_argument('--exclude', nargs='+', metavar='CLASS', help="classes left out of macro averages")
    evaluate.add_argument('--include-unknown', action='store_const', const=True,
                          help="count unknown leaves in macro averages")
    evaluate.add_argument('--exclude-misc', dest='include_misc', action='store_const', const=False,
                          help="leave misc out of macro averages")
    evaluate.add_argument('--thresholds', metavar='PATH', help="thresholds used for the predictions, echoed in the report")

    calibrate = subparsers.add_parser('calibrate', help="sweep per-leaf confidence thresholds")
    _add_global_flags(calibrate, suppress=True)
    _add_taxonomy_flag(calibrate)
    calibrate.add_argument('--prob-maps', nargs='+', metavar='GLOB', help="validation probability maps")
    calibrate.add_argument('--masks', nargs='+', metavar='GLOB', help="validation ground truth masks")
    calibrate.add_argument('--objective', choices=OBJECTIVES)
    calibrate.add_argument('--step', type=float, help="threshold grid step")

    weights = subparsers.add_parser('weights', help="class weights from pixel counts")
    _add_global_flags(weights, suppress=True)
    _add_taxonomy_flag(weights)
    weights.add_argument('--masks', nargs='+', metavar='GLOB', help="training masks")
    weights.add_argument('--classes', type=int, metavar='N', help="number of classes (default: taxonomy channels)")
    weights.add_argument('--beta', type=float)
    weights.add_argument('--normalize', choices=('none', 'mean-one', 'mean_one'))

    synth = subparsers.add_parser('synth', help="generate a synthetic field fixture")
    _add_global_flags(synth, suppress=True)
    synth.add_argument('--spec', metavar='PATH', help="field spec JSON")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """
    Flags that override the config file. Paths given on the command line are
    relative to the working directory, not to the config file.
    """
    overrides = {key: getattr(args, key) for key in _OVERRIDE_KEYS if getattr(args, key, None) is not None}
    for key in _PATH_KEYS:
        value = overrides.get(key)
        if isinstance(value, list):
            overrides[key] = [os.path.abspath(v) for v in value]
        elif value is not None:
            overrides[key] = os.path.abspath(value)
    taxonomy = overrides.get('taxonomy')
    if taxonomy is not None and os.path.exists(taxonomy):
        overrides['taxonomy'] = os.path.abspath(taxonomy)
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        config = load_run_config(args.config, _overrides(args))
        return COMMANDS[args.command](config)
    except ConfigError as e:
        log.error("%s: %s", args.command, e.msg)
        print("taxoseg {}: {}".format(args.command, e.msg), file=sys.stderr)
        return EXIT_CONFIG_ERROR
