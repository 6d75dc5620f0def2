import json

import pytest
import torch

from wce.config import (FourierTerm, RunConfig, build_coefficients, build_initial, build_run, fourier_field,
                        from_dict, load_config, packaged_configs)
from wce.errors import ConfigError
from wce.multiindex import ZERO
from wce.spectral import divergence_max, grid
from wce.utils import Mode, TimeBasis


def test_defaults_are_valid():
    cfg = from_dict({})
    assert cfg == RunConfig()
    assert cfg.d == 2


@pytest.mark.parametrize('data', [
    {'bogus': 1},
    {'basis': {'time_basis': 'haar', 'levels': 3}},
    {'noise': {'g': [[{'component': 0, 'wavenumber': [1, 0], 'amplitude': 1.0, 'scale': 2.0}]]}},
])
def test_unknown_keys_rejected(data):
    with pytest.raises(ConfigError, match='unknown keys'):
        from_dict(data)


@pytest.mark.parametrize('data', [
    {'N': 30},
    {'nu': 0.0},
    {'dt': -1e-3},
    {'mode': 'wick'},
    {'basis': {'time_basis': 'legendre'}},
    {'truncation': {'K': 9}, 'basis': {'n_time': 4, 'm_noise': 2}},
    {'outputs': {'p': 2.0}},
    {'model': 'burgers1d', 'initial': {'kind': 'taylor_green'}},
    {'initial': {'kind': 'modes', 'terms': [{'component': 0, 'wavenumber': [1], 'amplitude': 1.0}]}},
    {'initial': {'kind': 'modes', 'terms': [{'component': 2, 'wavenumber': [1, 0], 'amplitude': 1.0}]}},
    {'outputs': {'probes': [[0, 32]]}},
    {'noise': {'g': {'component': 0}}},
])
def test_inconsistent_values_rejected(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_nested_blocks_become_tuples():
    cfg = from_dict({
        'model': 'burgers1d', 'N': 16, 'initial': {'kind': 'zero'},
        'noise': {'g': [[{'component': 0, 'wavenumber': [2], 'amplitude': 0.5}]], 'drift': [1.0]},
        'outputs': {'probes': [[0], [3]]},
    })
    assert cfg.noise.g == ((FourierTerm(0, (2,), 0.5, 0.0),),)
    assert cfg.noise.drift == (1.0,)
    assert cfg.outputs.probes == ((0,), (3,))
    hash(cfg)


def test_packaged_configs_load():
    names = packaged_configs()
    assert 'burgers1d_linear.json' in names
    for name in names:
        cfg = load_config(name)
        assert cfg == load_config(name[:-len('.json')])


def test_load_from_file(tmp_path):
    path = tmp_path / 'small.json'
    path.write_text(json.dumps({'model': 'burgers1d', 'N': 16, 'initial': {'kind': 'zero'}}))
    cfg = load_config(str(path))
    assert cfg.N == 16 and cfg.d == 1


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match='no config file'):
        load_config('no_such_config')
    with pytest.raises(ConfigError, match='no config file'):
        load_config(str(tmp_path / 'absent.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text('{"N": 16,')
    with pytest.raises(ConfigError, match='not valid JSON'):
        load_config(str(broken))


def test_digest_is_stable_and_tracks_changes():
    cfg = load_config('burgers1d_linear')
    assert cfg.digest() == load_config('burgers1d_linear').digest()
    halved = cfg.replace(dt=cfg.dt / 2.0)
    assert halved.digest() != cfg.digest()
    assert cfg.dt == 0.001
    with pytest.raises(ConfigError):
        cfg.replace(N=12)


def test_fourier_field_values():
    terms = (FourierTerm(0, (2,), 0.5, 0.0), FourierTerm(0, (1,), 1.0, 0.7))
    field = fourier_field(1, 16, terms, 1)
    x = grid(1, 16)[0]
    expected = 0.5 * torch.cos(2.0 * x) + torch.cos(x + 0.7)
    assert torch.allclose(field.values[0], expected, atol=1e-14)


def test_build_run_from_linear_config():
    cfg = load_config('burgers1d_linear')
    coeffs = build_coefficients(cfg)
    assert not coeffs.convection
    assert coeffs.sigma == [] and len(coeffs.g) == 1
    assert build_initial(cfg).sup_norm() == 0.0

    run = build_run(cfg)
    assert run.mode == Mode.UNBIASED_WICK
    assert run.basis.time_basis == TimeBasis.HAAR
    assert run.basis.size == 8
    assert run.truncation.M == 1 and run.truncation.K == 8
    assert list(run.initial.coeffs) == [ZERO]
    assert run.serial


def test_build_run_reports_invalid_overrides():
    cfg = load_config('burgers1d_linear')
    with pytest.raises(ConfigError, match='valid run'):
        build_run(cfg, dt=-1.0)


def test_ns2d_initial_modes_are_projected():
    gradient = {'component': 0, 'wavenumber': [1, 0], 'amplitude': 1.0}
    shear = {'component': 0, 'wavenumber': [0, 1], 'amplitude': 0.5}
    raw = fourier_field(2, 16, (FourierTerm(0, (1, 0), 1.0), FourierTerm(0, (0, 1), 0.5)), 2)
    assert divergence_max(raw) > 0.4

    u0 = build_initial(from_dict({'N': 16, 'initial': {'kind': 'modes', 'terms': [gradient, shear]}}))
    assert u0.solenoidal
    assert divergence_max(u0) <= 1e-12
    x, y = grid(2, 16)
    assert torch.allclose(u0.values[0], 0.5 * torch.cos(y), atol=1e-12)
    assert torch.allclose(u0.values[1], torch.zeros_like(y), atol=1e-12)
