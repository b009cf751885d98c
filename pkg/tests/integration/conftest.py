import json
import os

import pytest

from taxoseg.cli import main


@pytest.fixture(scope='session')
def update_golden():
    """
    Set TAXOSEG_UPDATE_GOLDEN=1 to (re)write golden files instead of comparing against them.
    """
    return os.getenv('TAXOSEG_UPDATE_GOLDEN') == '1'


@pytest.fixture
def run_cli():
    def run(*argv):
        return main([str(a) for a in argv])
    return run


@pytest.fixture
def synth_field(tmp_path, run_cli):
    """
    Writes a field spec and renders it with ``taxoseg synth``; returns the data directory.
    """
    def synth(spec, directory='data'):
        spec_path = tmp_path / '{}.spec.json'.format(spec['name'])
        spec_path.write_text(json.dumps(spec))
        out = tmp_path / directory
        assert run_cli('synth', '--spec', spec_path, '--out', out) == 0
        return out
    return synth
