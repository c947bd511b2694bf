# Tests for the command-line front end
import csv
import json

import pytest

from config import EXAMPLE_STATES
from main import EXIT_ERROR, EXIT_OK, EXIT_WARNINGS, main


def _run(*argv):
    return main([str(a) for a in argv])


class TestStateCommand:
    def test_coherent(self, tmp_path, capsys):
        out = tmp_path / 'state.json'
        assert _run('state', '--state', 'horizontal', '--out', out) == EXIT_OK
        assert 'Stokes means' in capsys.readouterr().out
        assert json.loads(out.read_text())['summary']['S'] == pytest.approx([1, 1, 0, 0], abs=1e-10)

    def test_fock_spec_file(self, tmp_path):
        spec = tmp_path / 'fock.json'
        spec.write_text(json.dumps({'state': {'kind': 'fock', 'n1': 1, 'n2': 1, 'cutoff': 6}}))
        out = tmp_path / 'state.json'
        assert _run('state', '--state', spec, '--out', out) == EXIT_OK
        assert json.loads(out.read_text())['summary']['S'] == pytest.approx([2, 0, 0, 0], abs=1e-12)

    def test_wrapped_spec_with_stray_key(self, tmp_path, capsys):
        spec = tmp_path / 'wrapped.json'
        spec.write_text(json.dumps({'state': {'kind': 'fock', 'n1': 1, 'cutoff': 6}, 'comment': 'x'}))
        assert _run('state', '--state', spec) == EXIT_ERROR
        assert 'comment' in capsys.readouterr().err

    def test_csv_row(self, tmp_path):
        path = tmp_path / 'summary.csv'
        assert _run('state', '--state', 'horizontal', '--csv', path) == EXIT_OK
        with open(path, newline='') as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 1
        assert float(rows[0]['S1']) == pytest.approx(1.0, abs=1e-10)
        assert float(rows[0]['V11']) == pytest.approx(1.0, abs=1e-10)

    def test_truncation_warning_status(self, tmp_path, capsys):
        spec = tmp_path / 'wide.json'
        spec.write_text(json.dumps({'kind': 'squeezed_coherent', 'zeta': [1.5, 0.0], 'cutoff': 8}))
        assert _run('state', '--state', spec) == EXIT_WARNINGS
        assert 'TruncationWarning' in capsys.readouterr().err

    def test_malformed_spec(self, tmp_path, capsys):
        spec = tmp_path / 'bad.json'
        spec.write_text(json.dumps({'kind': 'coherent', 'alpha': [1, 0]}))
        assert _run('state', '--state', spec) == EXIT_ERROR
        assert 'alpha' in capsys.readouterr().err

    def test_unknown_state_name(self):
        assert _run('state', '--state', 'not-a-state') == EXIT_ERROR

    def test_missing_state(self):
        assert _run('state') == EXIT_ERROR


class TestMeasureCommand:
    def test_exact_default_plan(self, tmp_path):
        out = tmp_path / 'records.json'
        assert _run('measure', '--state', 'elliptic', '--out', out) == EXIT_OK
        assert len(json.loads(out.read_text())) == 13

    def test_identity_settings(self, tmp_path):
        out = tmp_path / 'records.json'
        assert _run('measure', '--state', 'elliptic', '--verify-identities', '--out', out) == EXIT_OK
        assert len(json.loads(out.read_text())) == 17

    def test_sampled_is_byte_identical(self, tmp_path):
        paths = [tmp_path / 'a.json', tmp_path / 'b.json']
        for path in paths:
            assert _run('measure', '--state', 'squeezed', '--mode', 'sampled',
                        '--shots', 10000, '--seed', 7, '--out', path) == EXIT_OK
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_csv(self, tmp_path):
        csv_path = tmp_path / 'records.csv'
        assert _run('measure', '--state', 'twin_photons', '--out', tmp_path / 'r.json', '--csv', csv_path) == EXIT_OK
        assert len(csv_path.read_text().splitlines()) == 14

    def test_repeated_theta(self, tmp_path, capsys):
        assert _run('measure', '--state', 'elliptic', '--theta-set', 'phi_half=0.2,0.2,0.9',
                    '--out', tmp_path / 'r.json') == EXIT_ERROR
        assert 'repeated theta' in capsys.readouterr().err

    def test_bad_theta_flag(self, tmp_path):
        assert _run('measure', '--state', 'elliptic', '--theta-set', 'psi=1,2',
                    '--out', tmp_path / 'r.json') == EXIT_ERROR

    def test_config_file(self, tmp_path):
        config_path = tmp_path / 'run.json'
        config_path.write_text(json.dumps({
            'state': {'kind': 'coherent', 'alpha1': [0.5, 0.0], 'cutoff': 15},
            'realization': 'qqh_gadget',
        }))
        out = tmp_path / 'r.json'
        assert _run('measure', '--config', config_path, '--out', out) == EXIT_OK
        records = json.loads(out.read_text())
        assert all(r['setting']['realization'] == 'qqh_gadget' for r in records)

    def test_config_unknown_key(self, tmp_path):
        config_path = tmp_path / 'run.json'
        config_path.write_text(json.dumps({'dark_counts': 3}))
        assert _run('measure', '--config', config_path) == EXIT_ERROR


class TestReconstructCommand:
    @pytest.fixture
    def horizontal_records(self, tmp_path):
        path = tmp_path / 'records.json'
        assert _run('measure', '--state', 'horizontal', '--verify-identities', '--out', path) == EXIT_OK
        return path

    def test_report(self, tmp_path, horizontal_records, capsys):
        out = tmp_path / 'report.json'
        assert _run('reconstruct', horizontal_records, '--out', out) == EXIT_OK
        report = json.loads(out.read_text())
        assert report['summary']['V'][1][1] == pytest.approx(1.0, abs=1e-8)
        assert 'Variance matrix' in capsys.readouterr().out

    def test_oracle_and_identities(self, horizontal_records, capsys):
        code = _run('reconstruct', horizontal_records, '--state', 'horizontal',
                    '--oracle-check', '--verify-identities')
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert 'Max |reconstructed - oracle|' in out
        assert 'Identity checks' in out

    def test_truncated_file(self, tmp_path, horizontal_records):
        broken = tmp_path / 'broken.json'
        broken.write_text(horizontal_records.read_text()[:300])
        assert _run('reconstruct', broken) == EXIT_ERROR

    def test_oracle_check_needs_state(self, horizontal_records):
        assert _run('reconstruct', horizontal_records, '--oracle-check') == EXIT_ERROR

    def test_sampled_report_is_deterministic(self, tmp_path):
        records = tmp_path / 'records.json'
        assert _run('measure', '--state', 'elliptic', '--mode', 'sampled', '--shots', 20000,
                    '--seed', 3, '--out', records) == EXIT_OK
        reports = [tmp_path / 'a.json', tmp_path / 'b.json']
        for report in reports:
            assert _run('reconstruct', records, '--bootstrap', 40, '--seed', 3, '--out', report) == EXIT_OK
        assert reports[0].read_bytes() == reports[1].read_bytes()

    @pytest.mark.parametrize('name', sorted(EXAMPLE_STATES))
    def test_pipeline(self, tmp_path, name):
        records = tmp_path / 'records.json'
        assert _run('measure', '--state', name, '--out', records) == EXIT_OK
        assert _run('reconstruct', records, '--state', name, '--oracle-check') == EXIT_OK


class TestGadgetCommand:
    def test_phi_zero(self, capsys):
        assert _run('gadget', 0.6, 0) == EXIT_OK
        out = capsys.readouterr().out
        assert 'q1' in out and 'Projective residual' in out

    def test_unsupported(self, capsys):
        assert _run('gadget', 0.3, 0.1) == EXIT_ERROR
        assert 'supported' in capsys.readouterr().err


class TestVerifyCommand:
    def test_single_example(self, capsys):
        assert _run('verify', '--example', 'twin_photons') == EXIT_OK
        assert 'PASS' in capsys.readouterr().out

    @pytest.mark.slow
    def test_all_examples(self, capsys):
        assert _run('verify') == EXIT_OK
        assert 'FAIL' not in capsys.readouterr().out
