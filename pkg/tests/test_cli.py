import json
from pathlib import Path

import numpy as np
import pytest

from taxoseg.cli import build_parser
from taxoseg.cli import main
from taxoseg.cli.commands import group_views
from taxoseg.cli.config import RunConfig
from taxoseg.cli.config import load_run_config
from taxoseg.cli.runner import WorkerPool
from taxoseg.cli.runner import write_error_log
from taxoseg.exceptions import ConfigError
from taxoseg.exceptions import InferenceError
from taxoseg.gridio import GsdSpec
from taxoseg.gridio import ProbMap
from taxoseg.gridio import cut_tiles
from taxoseg.gridio import plan_tiles
from taxoseg.gridio import read_label_mask
from taxoseg.gridio import read_prob_map
from taxoseg.gridio import rescale_to_gsd
from taxoseg.gridio import write_prob_map
from taxoseg.hierinfer import TtaView
from taxoseg.hierinfer import apply_tta_transform
from taxoseg.hierinfer import fuse_tta

from .data import FIELD_SPEC
from .data import MISC_TAXONOMY


class TestParser:
    def test_global_flags_on_either_side(self):
        parser = build_parser()
        before = parser.parse_args(['--jobs', '2', '--out', 'x', 'infer'])
        after = parser.parse_args(['infer', '--jobs', '3', '-v'])
        assert (before.jobs, before.out, before.verbose) == (2, 'x', False)
        assert (after.jobs, after.verbose) == (3, True)

    def test_evaluate_switches(self):
        args = build_parser().parse_args(['evaluate', '--include-unknown', '--exclude-misc', '--ranks', 'genus', 'leaf'])
        assert args.include_unknown is True
        assert args.include_misc is False
        assert args.ranks == ['genus', 'leaf']

    def test_switches_default_to_config(self):
        args = build_parser().parse_args(['evaluate'])
        assert args.include_unknown is None
        assert args.include_misc is None

    def test_bad_choice(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['infer', '--tta', 'shear'])

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestRunConfig:
    def test_defaults(self):
        config = load_run_config()
        assert config.tile_size == 1024
        assert config.overlap == 128
        assert config.beta == 0.99
        assert config.tta == ['identity', 'hflip', 'vflip', 'rot90', 'rot180', 'rot270']
        assert config.base_dir == Path.cwd()

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / 'run.json'
        path.write_text(json.dumps({'masks': 'gt/', 'beta': 0.9, 'normalize': 'mean-one', 'out': 'o'}))
        config = load_run_config(path, {'beta': 0.5, 'jobs': None})
        assert config.masks == ['gt/']
        assert config.beta == 0.5
        assert config.normalize == 'mean_one'
        assert config.jobs == 4
        assert config.out_dir == tmp_path.resolve() / 'o'

    def test_unknown_keys_warn(self, tmp_path):
        path = tmp_path / 'run.json'
        path.write_text(json.dumps({'tile': 5}))
        with pytest.warns(UserWarning, match='tile'):
            load_run_config(path)

    @pytest.mark.parametrize('text', ['{"beta": ', '[1]', '{"beta": 1.0}', '{"tile_size": "big"}',
                                      '{"overlap": 1024}', '{"tta": ["shear"]}', '{"step": 0}',
                                      '{"objective": "iou"}', '{"jobs": 0}', '{"target_gsd": -1}'])
    def test_invalid(self, tmp_path, text):
        path = tmp_path / 'run.json'
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / 'nope.json')

    def test_tiling_off(self):
        assert load_run_config(overrides={'tile_size': None}).tile_size == 1024
        assert RunConfig(tile_size=None, overlap=5000).tile_size is None

    def test_out_required(self):
        with pytest.raises(ConfigError):
            RunConfig().out_dir

    def test_expand(self, tmp_path):
        (tmp_path / 'a.npy').write_bytes(b'')
        (tmp_path / 'b.npy').write_bytes(b'')
        (tmp_path / 'c.png').write_bytes(b'')
        config = RunConfig(base_dir=tmp_path)
        assert config.expand(['.'], '.npy', 'x') == [tmp_path / 'a.npy', tmp_path / 'b.npy']
        assert config.expand(['*.png', 'a.npy'], '.npy', 'x') == [tmp_path / 'a.npy', tmp_path / 'c.png']
        with pytest.raises(ConfigError):
            config.expand(['missing.npy'], '.npy', 'x')
        with pytest.raises(ConfigError):
            config.expand(['*.tif'], '.npy', 'x')
        with pytest.raises(ConfigError):
            config.expand([], '.npy', 'x')

    def test_thresholds_file_shapes(self, tmp_path):
        (tmp_path / 'plain.json').write_text('{"a1": 0.5}')
        (tmp_path / 'calibrated.json').write_text('{"objective": "f1", "thresholds": {"a1": 0.25}}')
        (tmp_path / 'list.json').write_text('[0.5]')
        assert RunConfig(base_dir=tmp_path, thresholds='plain.json').load_thresholds() == {'a1': 0.5}
        assert RunConfig(base_dir=tmp_path, thresholds='calibrated.json').load_thresholds() == {'a1': 0.25}
        assert RunConfig().load_thresholds() == {}
        with pytest.raises(ConfigError):
            RunConfig(base_dir=tmp_path, thresholds='list.json').load_thresholds()

    def test_gsd_per_stem(self):
        assert RunConfig(source_gsd={'a': 0.5}).gsd_for('a') == 0.5
        assert RunConfig(source_gsd={'a': 0.5}).gsd_for('b') is None
        assert RunConfig(source_gsd=0.3).gsd_for('b') == 0.3

    def test_unknown_taxonomy(self):
        with pytest.raises(ConfigError):
            RunConfig(taxonomy='fungi').load_taxonomy()


class TestWorkerPool:
    @pytest.mark.asyncio
    async def test_results_keep_order(self):
        def fail():
            raise InferenceError("bad map")

        pool = WorkerPool('infer', 2)
        results = await pool.run([('a', lambda: 1), ('b', fail), ('c', lambda: 3)])
        assert [r.stem for r in results] == ['a', 'b', 'c']
        assert [r.value for r in results] == [1, None, 3]
        assert results[1].error == 'InferenceError: bad map'
        assert not results[1].ok

    @pytest.mark.asyncio
    async def test_bugs_propagate(self):
        def broken():
            raise KeyError('x')

        with pytest.raises(KeyError):
            await WorkerPool('infer', 1).run([('a', broken)])

    def test_run_sync(self):
        assert [r.value for r in WorkerPool('weights', 3).run_sync([('a', lambda: 'x')])] == ['x']

    def test_jobs(self):
        with pytest.raises(ValueError):
            WorkerPool('infer', 0)

    def test_error_log(self, tmp_path):
        write_error_log(tmp_path, [('b', 'late'), ('a', 'early')])
        assert (tmp_path / 'errors.log').read_text() == 'a: early\nb: late\n'
        write_error_log(tmp_path, [])
        assert not (tmp_path / 'errors.log').exists()


def test_group_views():
    groups = group_views([Path('x.npy'), Path('y__r0_c0@hflip.npy'), Path('y__r0_c8@hflip.npy'), Path('y@rot90.npy')])
    assert groups['x'] == {'identity': [(None, Path('x.npy'))]}
    assert groups['y']['hflip'] == [((0, 0), Path('y__r0_c0@hflip.npy')), ((0, 8), Path('y__r0_c8@hflip.npy'))]
    assert groups['y']['rot90'] == [(None, Path('y@rot90.npy'))]


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def field(tmp_path):
    spec_path = tmp_path / 'field_spec.json'
    spec_path.write_text(json.dumps(FIELD_SPEC))
    data = tmp_path / 'data'
    assert _run('synth', '--spec', spec_path, '--out', data) == 0
    return data


def _artifacts(directory):
    return {p.name: p.read_bytes() for p in sorted(Path(directory).iterdir()) if p.name != 'run.json'}


class TestCommands:
    def test_synth(self, field):
        assert sorted(p.name for p in field.iterdir()) == ['field.field.json', 'field.npy', 'field.png', 'run.json']
        assert read_prob_map(field / 'field.npy').shape == (48, 64, 18)
        echo = json.loads((field / 'run.json').read_text())
        assert echo['command'] == 'synth'
        assert echo['taxonomy'] == 'species'

    def test_missing_taxonomy_writes_nothing(self, tmp_path, capsys):
        out = tmp_path / 'out'
        assert _run('infer', '--taxonomy', tmp_path / 'nope.json', '--prob-maps', tmp_path, '--out', out) == 1
        assert not out.exists()
        assert 'taxoseg infer' in capsys.readouterr().err

    def test_infer_evaluate(self, field, tmp_path, capsys):
        pred = tmp_path / 'pred'
        assert _run('infer', '--prob-maps', field / 'field.npy', '--tile-size', 32, '--overlap', 8, '--out', pred) == 0
        assert (pred / 'field.png').is_file()
        assert (pred / 'field.confidence.npy').is_file()
        assert json.loads((pred / 'field.json').read_text())['height'] == 48
        assert 'field' in json.loads((pred / 'confidence_summary.json').read_text())
        np.testing.assert_array_equal(read_label_mask(pred / 'field.png').data, read_label_mask(field / 'field.png').data)

        report_dir = tmp_path / 'report'
        assert _run('evaluate', '--predictions', pred, '--masks', field / 'field.png', '--out', report_dir) == 0
        report = json.loads((report_dir / 'report.json').read_text())
        assert report['ranks']['leaf']['f1']['macro'] == 1.0
        assert report['config']['ranks'] == ['leaf', 'genus', 'family', 'order', 'group', 'root']
        assert (report_dir / 'confusion_genus.csv').is_file()
        assert (report_dir / 'report_classes.csv').is_file()
        assert 'macro_f1' in capsys.readouterr().out

    def test_infer_is_idempotent(self, field, tmp_path):
        first, second = tmp_path / 'first', tmp_path / 'second'
        assert _run('infer', '--prob-maps', field / 'field.npy', '--out', first) == 0
        assert _run('infer', '--prob-maps', field / 'field.npy', '--out', second, '--jobs', 1) == 0
        assert _artifacts(first) == _artifacts(second)

    def test_tiles_match_whole_image(self, field, tmp_path):
        prob_map = read_prob_map(field / 'field.npy')
        tiles = tmp_path / 'tiles'
        for (row, col), tile in cut_tiles(prob_map, plan_tiles(48, 64, 32, 8)):
            write_prob_map(tiles / 'field__r{}_c{}.npy'.format(row, col), tile)
        whole, stitched = tmp_path / 'whole', tmp_path / 'stitched'
        assert _run('infer', '--prob-maps', field / 'field.npy', '--out', whole) == 0
        assert _run('infer', '--prob-maps', tiles, '--out', stitched) == 0
        assert (whole / 'field.png').read_bytes() == (stitched / 'field.png').read_bytes()

    def test_tta_views(self, field, tmp_path):
        prob_map = read_prob_map(field / 'field.npy')
        views = tmp_path / 'views'
        write_prob_map(views / 'field.npy', prob_map)
        for transform in ('hflip', 'rot90'):
            write_prob_map(views / 'field@{}.npy'.format(transform), ProbMap(apply_tta_transform(prob_map.data, transform)))
        fused, identity_only = tmp_path / 'fused', tmp_path / 'identity'
        assert _run('infer', '--prob-maps', views, '--out', fused) == 0
        assert _run('infer', '--prob-maps', views, '--tta', 'identity', '--out', identity_only) == 0
        assert (fused / 'field.png').read_bytes() == (identity_only / 'field.png').read_bytes()
        assert read_prob_map(fused / 'field.tta_confidence.npy').shape == (48, 64, 1)
        assert not (identity_only / 'field.tta_confidence.npy').exists()

    def test_gsd_rescale(self, field, tmp_path):
        out = tmp_path / 'out'
        assert _run('infer', '--prob-maps', field / 'field.npy', '--source-gsd', 0.5, '--target-gsd', 1.0,
                    '--out', out) == 0
        assert read_label_mask(out / 'field.png').shape == (24, 32)

    def test_tta_confidence_follows_rescaled_map(self, field, tmp_path):
        prob_map = read_prob_map(field / 'field.npy')
        views = tmp_path / 'views'
        write_prob_map(views / 'field.npy', prob_map)
        write_prob_map(views / 'field@rot90.npy', ProbMap(apply_tta_transform(prob_map.data, 'rot90')))
        out = tmp_path / 'out'
        assert _run('infer', '--prob-maps', views, '--source-gsd', 0.5, '--target-gsd', 1.0, '--out', out) == 0
        fused, _ = fuse_tta([
            TtaView(read_prob_map(views / 'field.npy')),
            TtaView(read_prob_map(views / 'field@rot90.npy'), 'rot90'),
        ])
        expected = rescale_to_gsd(fused, GsdSpec(0.5, 1.0)).data.max(axis=2)
        confidence = read_prob_map(out / 'field.tta_confidence.npy').data
        assert confidence.shape == (24, 32, 1)
        np.testing.assert_allclose(confidence[:, :, 0], expected, atol=1e-6, rtol=0)

    def test_bad_view_fails_the_item(self, field, tmp_path):
        views = tmp_path / 'views'
        write_prob_map(views / 'field.npy', read_prob_map(field / 'field.npy'))
        write_prob_map(views / 'other@shear.npy', read_prob_map(field / 'field.npy'))
        out = tmp_path / 'out'
        assert _run('infer', '--prob-maps', views, '--out', out) == 2
        assert (out / 'field.png').is_file()
        assert (out / 'errors.log').read_text().startswith('other: TtaError')

    def test_unnormalized_map_fails_the_item(self, field, tmp_path):
        maps = tmp_path / 'maps'
        prob_map = read_prob_map(field / 'field.npy')
        write_prob_map(maps / 'field.npy', prob_map)
        write_prob_map(maps / 'halved.npy', ProbMap(prob_map.data * 0.5))
        out = tmp_path / 'out'
        assert _run('infer', '--prob-maps', maps, '--out', out) == 2
        assert (out / 'field.png').is_file()
        assert not (out / 'halved.png').exists()
        assert (out / 'errors.log').read_text().startswith('halved: GridFormatError')

    def test_evaluate_missing_mask(self, field, tmp_path):
        pred = tmp_path / 'pred'
        assert _run('infer', '--prob-maps', field / 'field.npy', '--out', pred) == 0
        (pred / 'extra.png').write_bytes((pred / 'field.png').read_bytes())
        out = tmp_path / 'report'
        assert _run('evaluate', '--predictions', pred, '--masks', field / 'field.png', '--out', out) == 2
        assert (out / 'errors.log').read_text() == 'extra: no ground truth mask\n'
        assert json.loads((out / 'report.json').read_text())['images'] == ['field']

    def test_evaluate_unknown_rank(self, field, tmp_path):
        out = tmp_path / 'report'
        assert _run('evaluate', '--predictions', field / 'field.png', '--masks', field / 'field.png',
                    '--ranks', 'kingdom', '--out', out) == 1
        assert not out.exists()

    def test_calibrate_then_infer(self, field, tmp_path):
        calibration = tmp_path / 'calibration'
        assert _run('calibrate', '--prob-maps', field / 'field.npy', '--masks', field / 'field.png',
                    '--step', 0.1, '--out', calibration) == 0
        document = json.loads((calibration / 'thresholds.json').read_text())
        assert 'misc' not in document['thresholds']
        assert document['flags']['ECHCO'] == 'no support'
        out = tmp_path / 'pred'
        assert _run('infer', '--prob-maps', field / 'field.npy', '--thresholds', calibration / 'thresholds.json',
                    '--out', out) == 0

    def test_misc_threshold_is_a_config_error(self, field, tmp_path):
        thresholds = tmp_path / 'thresholds.json'
        thresholds.write_text('{"misc": 0.5}')
        out = tmp_path / 'out'
        assert _run('infer', '--prob-maps', field / 'field.npy', '--thresholds', thresholds, '--out', out) == 1
        assert not out.exists()

    def test_weights(self, field, tmp_path, capsys):
        out = tmp_path / 'weights'
        assert _run('weights', '--masks', field / 'field.png', '--beta', 0.999, '--normalize', 'none', '--out', out) == 0
        document = json.loads((out / 'weights.json').read_text())
        assert sum(document['counts']) == 48 * 64
        assert len(document['weights']) == 18
        assert json.loads(capsys.readouterr().out) == document

    def test_config_file_paths_are_relative_to_it(self, field, tmp_path, monkeypatch):
        config = tmp_path / 'configs' / 'run.json'
        config.parent.mkdir()
        config.write_text(json.dumps({'masks': ['../data/field.png'], 'out': '../weights', 'classes': 18}))
        monkeypatch.chdir(field)
        assert _run('weights', '--config', config) == 0
        assert (tmp_path / 'weights' / 'weights.json').is_file()

    def test_custom_taxonomy_file(self, tmp_path):
        taxonomy = tmp_path / 'tree.json'
        taxonomy.write_text(json.dumps(MISC_TAXONOMY))
        spec = tmp_path / 'spec.json'
        spec.write_text(json.dumps({'seed': 1, 'height': 8, 'width': 8, 'taxonomy': 'tree.json',
                                    'blobs': [{'leaf': 'a1', 'center': [4, 4], 'radius': 2}]}))
        data = tmp_path / 'data'
        assert _run('synth', '--spec', spec, '--out', data) == 0
        assert read_prob_map(data / 'field.npy').channels == 6
        out = tmp_path / 'pred'
        assert _run('infer', '--taxonomy', taxonomy, '--prob-maps', data / 'field.npy', '--tile-size', 4,
                    '--overlap', 1, '--out', out) == 0
        assert read_label_mask(out / 'field.png').data[4, 4] == 1
