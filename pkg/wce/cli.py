"""
Command line entry point.

    wce algebra-check [--max-degree 4] [--basis-size 3]
    wce solve --config burgers1d [--serial] [--seed 0] [--out-dir runs/x]
    wce study --kind {catalan,rescaling,mc-compare,restart,causality} --config ...

Exit status: 0 when every check passes, 1 on a failed check or a solver error,
2 on a configuration error. Every run writes manifest.json into the output
directory before any field data and rewrites it with the verdict at the end.
"""
import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from wce import chaos
from wce.basis import BasisSpec, approximate_h
from wce.chaos import ChaosScalar, TimeChaosVector
from wce.config import RunConfig, build_run, load_config
from wce.errors import ConfigError, SolverError, WCEError
from wce.metrics import within_band
from wce.multiindex import ZERO, MultiIndex, enumerate_multiindices, ordered
from wce.propagator import (PropagatorResult, causality_check, coefficient_norms, level_energies, restart,
                            sweep)
from wce.scaling import (catalan_bound_check, gamma_rescale_wick_identity_check, kondratiev_table,
                         second_quantize, select_q, square_integrability_check, write_table_csv)
from wce.spectral import dump_field, l2_error, sample_points, taylor_green
from wce.stats import (MCEstimate, MCSampler, chaos_moments, chaos_variance, duhamel_coefficients,
                       duhamel_variance, estimate_csv, euler_maruyama_oracle, ito_skorokhod_check, moments_csv,
                       rescaling_convergence_study)
from wce.utils import Model, StudyKind, TimeBasis, describe_runtime

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

ALGEBRA_TOLERANCE = {'wick_hermite': 1e-12, 'product_formula': 1e-10, 'wick_leading_term': 1e-12,
                     'gaussian_moments': 1e-9, 'malliavin_leibniz': 1e-10, 'expectation_rule': 1e-12,
                     'skorokhod_deterministic': 1e-12}


class Manifest(object):
    """Index of a run directory; written first, updated as artifacts appear."""

    def __init__(self, out_dir: str, command: str, cfg: Optional[RunConfig] = None, **extra):
        self.out_dir = out_dir
        self.path = os.path.join(out_dir, 'manifest.json')
        self.data = {'command': command, 'status': 'running', 'runtime': describe_runtime(), 'artifacts': []}
        if cfg is not None:
            self.data['config'] = cfg.to_dict()
            self.data['config_digest'] = cfg.digest()
        self.data.update(extra)
        os.makedirs(out_dir, exist_ok=True)
        self.write()

    def artifact(self, name: str) -> str:
        self.data['artifacts'].append(name)
        path = os.path.join(self.out_dir, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path

    def write(self):
        with open(self.path, 'w') as json_file:
            json.dump(self.data, json_file, indent=2, sort_keys=True, default=_jsonable)
            json_file.write('\n')

    def finish(self, status: str, **fields) -> str:
        self.data['status'] = status
        self.data.update(fields)
        self.write()
        return self.path


def _jsonable(value):
    if isinstance(value, MultiIndex):
        return str(value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError("cannot serialize {}".format(type(value).__name__))


def _check(report: Dict, name: str, error: float, tolerance: Optional[float] = None, passed: Optional[bool] = None):
    tolerance = ALGEBRA_TOLERANCE[name] if tolerance is None else tolerance
    passed = (error <= tolerance) if passed is None else passed
    report[name] = {'max_error': error, 'tolerance': tolerance, 'passed': bool(passed)}
    level = logging.INFO if passed else logging.ERROR
    logger.log(level, "%-24s max error %.3e (tolerance %.1e) %s", name, error, tolerance,
               'ok' if passed else 'FAILED')


def algebra_suite(max_degree: int = 4, basis_size: int = 3, seed: int = 0, samples: int = 100000) -> Dict:
    """Wick, product, Malliavin and Skorokhod identities on basis elements."""
    if max_degree < 0 or basis_size < 1:
        raise ConfigError("algebra-check needs max_degree >= 0 and basis_size >= 1, got {} and {}".format(
            max_degree, basis_size))
    report = {}
    alphas = enumerate_multiindices(max_degree, basis_size)
    xi = {alpha: ChaosScalar.basis_element(alpha) for alpha in alphas}

    error = 0.0
    for k, n in itertools.product(range(9), repeat=2):
        product = chaos.wick_product_scalar(chaos.hermite_expansion(k), chaos.hermite_expansion(n))
        error = max(error, product.max_abs_diff(chaos.hermite_expansion(k + n)))
    _check(report, 'wick_hermite', error)

    error, leading = 0.0, 0.0
    for theta, kappa in itertools.combinations_with_replacement(alphas, 2):
        ordinary = chaos.ordinary_product(xi[theta], xi[kappa])
        via = chaos.product_via_wick_malliavin(xi[theta], xi[kappa], max_degree)
        error = max(error, via.max_abs_diff(ordinary))
        first = chaos.product_via_wick_malliavin(xi[theta], xi[kappa], 0)
        leading = max(leading, first.max_abs_diff(chaos.wick_product_scalar(xi[theta], xi[kappa])))
    _check(report, 'product_formula', error)
    _check(report, 'wick_leading_term', leading)

    error = 0.0
    low = [alpha for alpha in alphas if alpha.degree <= 3]
    for a, b, c in itertools.combinations_with_replacement(low, 3):
        moment = chaos.expectation(chaos.ordinary_product(chaos.ordinary_product(xi[a], xi[b]), xi[c]))
        error = max(error, abs(moment - chaos.gauss_hermite_moment([a, b, c])))
    _check(report, 'gaussian_moments', error)

    error, expectation_error = 0.0, 0.0
    rng = np.random.RandomState(seed)
    for theta, kappa in itertools.combinations_with_replacement(alphas, 2):
        wick = chaos.wick_product_scalar(xi[theta], xi[kappa])
        for k in range(1, basis_size + 1):
            left = chaos.malliavin_component(wick, k)
            right = (chaos.wick_product_scalar(chaos.malliavin_component(xi[theta], k), xi[kappa])
                     + chaos.wick_product_scalar(xi[theta], chaos.malliavin_component(xi[kappa], k)))
            error = max(error, left.max_abs_diff(right))
    for _ in range(10):
        u = ChaosScalar({alpha: rng.randn() for alpha in alphas})
        v = ChaosScalar({alpha: rng.randn() for alpha in alphas})
        product = chaos.wick_product_scalar(u, v)
        expectation_error = max(expectation_error,
                                abs(chaos.expectation(product) - chaos.expectation(u) * chaos.expectation(v)))
    _check(report, 'malliavin_leibniz', error)
    _check(report, 'expectation_rule', expectation_error)

    report.update(_skorokhod_checks(seed, samples))
    report['passed'] = all(entry['passed'] for entry in report.values() if isinstance(entry, dict))
    return report


def _skorokhod_checks(seed: int, samples: int) -> Dict:
    report = {}
    trig = BasisSpec(1.0, TimeBasis.TRIG, 4, 2)
    h = lambda s: np.stack([np.exp(-s), np.sin(3.0 * s) + s ** 2], axis=1)
    delta = chaos.skorokhod_coeffs(TimeChaosVector.deterministic(2, h), trig.horizon, trig)
    projection = approximate_h(h, trig, trig.size)
    error = max(abs(delta.get(MultiIndex.unit(k)) - projection.z[k]) for k in range(1, trig.size + 1))
    if any(alpha.degree != 1 for alpha in delta.coeffs):
        error = float('inf')
    _check(report, 'skorokhod_deterministic', error)

    # W(e_1) e_2(s) is adapted: e_2 lives after the support of e_1
    haar = BasisSpec(1.0, TimeBasis.HAAR, 2, 1, haar_root_level=1)
    e1, e2 = MultiIndex.unit(1), MultiIndex.unit(2)
    v = TimeChaosVector(1, {e1: lambda s: haar.e_values(2, s)})
    alphas = [ZERO, e1, e2, e1 + e2, MultiIndex.unit(1, 2)]
    check = ito_skorokhod_check(v, alphas, haar, MCSampler(seed, samples))
    _check(report, 'skorokhod_ito', check.max_sigma, tolerance=check.n_sigma, passed=check.passed)
    return report


def cmd_algebra_check(args) -> int:
    out_dir = args.out_dir or os.path.join('runs', 'algebra-check')
    manifest = Manifest(out_dir, 'algebra-check', max_degree=args.max_degree, basis_size=args.basis_size,
                        seed=args.seed)
    report = algebra_suite(args.max_degree, args.basis_size, args.seed)
    with open(manifest.artifact('algebra_report.json'), 'w') as json_file:
        json.dump(report, json_file, indent=2, sort_keys=True)
    manifest.finish('passed' if report['passed'] else 'failed', verdict=report['passed'])
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK if report['passed'] else EXIT_FAILURE


def _points(cfg: RunConfig) -> List[tuple]:
    return [tuple(p) for p in cfg.outputs.probes] or [(0,) * cfg.d]


def _dump_snapshots(manifest: Manifest, result: PropagatorResult):
    members = result.run.truncation.enumerate()
    manifest.data['coefficients'] = [str(alpha) for alpha in members]
    for state in result.snapshots:
        for position, alpha in enumerate(members):
            if alpha in state.coeffs:
                path = manifest.artifact(os.path.join('fields', 'step_{:06d}'.format(state.step),
                                                      'coef_{:04d}.bin'.format(position)))
                dump_field(path, state.coeffs[alpha], state.time)


def _write_levels(path: str, result: PropagatorResult):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['step', 'time', 'degree', 'energy'])
        for state in result.snapshots:
            for degree, energy in enumerate(level_energies(state)):
                writer.writerow([state.step, '{:.12g}'.format(state.time), degree, '{:.17g}'.format(energy)])


def _solve(cfg: RunConfig, manifest: Manifest, serial: bool, verbose: bool) -> PropagatorResult:
    run = build_run(cfg, serial=serial, verbose=verbose)
    manifest.data['basis'] = run.basis.describe()
    manifest.data['truncation_size'] = run.truncation.size()
    manifest.write()
    result = sweep(run)
    result.write_norms_csv(manifest.artifact('norms.csv'))
    _write_levels(manifest.artifact('levels.csv'), result)
    manifest.data.update(unbiased_deviation=result.unbiased_deviation, dropped_terms=result.dropped_terms,
                         leakage=result.leakage())
    return result


def cmd_solve(cfg: RunConfig, args) -> int:
    manifest = Manifest(args.out_dir or cfg.outputs.directory, 'solve', cfg, seed=args.seed, serial=args.serial)
    try:
        result = _solve(cfg, manifest, args.serial, args.verbose)
    except SolverError as e:
        logger.error("Solve failed with error: %s", e)
        manifest.finish('failed', error=str(e))
        return EXIT_FAILURE
    except ConfigError as e:
        manifest.finish('config-error', error=str(e))
        raise
    _dump_snapshots(manifest, result)
    points = _points(cfg)
    pairs = [(p, p) for p in points] + [(points[0], p) for p in points[1:]]
    moments_csv(manifest.artifact('moments.csv'), chaos_moments(result.final, pairs))

    verdict = True
    taylor_green_case = (Model(cfg.model) == Model.NS2D and cfg.initial.kind == 'taylor_green'
                         and not cfg.noise.g and not cfg.noise.sigma and not cfg.noise.forcing
                         and cfg.noise.drift is None)
    if taylor_green_case:
        error = l2_error(result.final.mean, taylor_green(cfg.N, result.final.time, cfg.nu))
        manifest.data['taylor_green_error'] = error
        verdict = error <= 1e-6
        logger.info("zero mode against the Taylor-Green vortex: L2 error %.3e", error)
    if result.unbiased_deviation > 1e-12:
        verdict = False
    manifest.finish('passed' if verdict else 'failed', verdict=verdict)
    return EXIT_OK if verdict else EXIT_FAILURE


def _study_catalan(cfg: RunConfig, manifest: Manifest, args) -> bool:
    result = _solve(cfg, manifest, args.serial, args.verbose)
    norms = coefficient_norms(result.snapshots, cfg.outputs.p)
    fit = catalan_bound_check(norms)
    selection = select_q(result.final, cfg.scaling.q_scan, cfg.scaling.rho)
    write_table_csv(manifest.artifact('catalan.csv'),
                    kondratiev_table(result.final, cfg.scaling.rho, selection.q, slack=fit.slack))
    half = build_run(cfg.replace(dt=cfg.dt / 2.0), serial=args.serial, verbose=args.verbose)
    fit_half = catalan_bound_check(coefficient_norms(sweep(half).snapshots, cfg.outputs.p))
    ratio = fit_half.b0 / fit.b0 if fit.b0 > 0 else float('nan')
    stable = fit.b0 == fit_half.b0 or 0.8 <= ratio <= 1.2
    manifest.data.update(q=selection.q, q_decaying=selection.decaying, b0=fit.b0, K=fit.K, b0_half_step=fit_half.b0,
                         b0_ratio=ratio, b0_stable=stable)
    return math.isfinite(fit.b0) and fit.all_passed and stable


def _study_rescaling(cfg: RunConfig, manifest: Manifest, args) -> bool:
    result = _solve(cfg, manifest, args.serial, args.verbose)
    final = result.final
    selection = select_q(final, cfg.scaling.q_scan, cfg.scaling.rho)
    study = rescaling_convergence_study(result.snapshots, cfg.scaling.eps_list, selection.q)
    with open(manifest.artifact('rescaling.csv'), 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['eps', 'distance'])
        for eps, distance in zip(study.eps, study.distance):
            writer.writerow(['{:.12g}'.format(eps), '{:.17g}'.format(distance)])
    integrability = square_integrability_check(second_quantize(final, min(cfg.scaling.eps_list)))

    points = _points(cfg)
    u = ChaosScalar({alpha: float(sample_points(value, [points[0]])[0, 0]) for alpha, value in final.items()})
    v = ChaosScalar({alpha: float(sample_points(value, [points[-1]])[0, -1]) for alpha, value in final.items()})
    lam = {k: 2.0 ** (-max(cfg.scaling.eps_list) * k) for k in range(1, cfg.truncation.K + 1)}
    scale = max([1.0] + [abs(c) for c in list(u.coeffs.values()) + list(v.coeffs.values())]) ** 2
    gamma_error = gamma_rescale_wick_identity_check(u, v, lam)

    manifest.data.update(q=selection.q, q_rates=selection.rates, distance_ratio=study.ratio,
                         mode_bound_ratio=study.bound_ratio, monotone=study.monotone, tenfold=study.tenfold,
                         integrability_rate=integrability.rate, integrability_total=integrability.total,
                         gamma_wick_error=gamma_error)
    return study.passed and integrability.passed and gamma_error <= 1e-12 * scale


def _study_mc_compare(cfg: RunConfig, manifest: Manifest, args) -> bool:
    if cfg.noise.convection:
        raise ConfigError("mc-compare runs the linear equation; set noise.convection to false")
    result = _solve(cfg, manifest, args.serial, args.verbose)
    run, final = result.run, result.final
    points = _points(cfg)
    mean = sample_points(final.mean, points)
    variance = sample_points(chaos_variance(final), points)
    zeros = np.zeros_like(mean)
    reference = MCEstimate(mean, zeros, variance + mean ** 2, zeros, 0)

    sampler = MCSampler(args.seed, cfg.mc.samples, cfg.mc.batch_size)
    em = euler_maruyama_oracle(run.coeffs, run.basis, sampler, cfg.mc.dt or cfg.dt, run.initial.mean, cfg.T_end,
                               points, linear_only=True, verbose=args.verbose)
    estimates = {'chaos': reference, 'euler_maruyama': em}
    n_sigma = cfg.study.n_sigma
    verdict = (within_band(em.mean, reference.mean, em.mean_se, n_sigma)
               and within_band(em.second, reference.second, em.second_se, n_sigma))

    if not any(s is not None for s in run.coeffs.sigma) and run.coeffs.g:
        d, n = cfg.d, cfg.N
        duhamel = np.zeros_like(variance)
        for k in range(1, run.truncation.max_basis_index + 1):
            duhamel += sample_points(duhamel_coefficients(run.coeffs, run.basis, k, cfg.T_end, d, n), points) ** 2
        duhamel_error = float(np.abs(duhamel - variance).max())
        full = sample_points(duhamel_variance(run.coeffs, cfg.T_end, d, n), points)
        estimates['duhamel'] = MCEstimate(mean, zeros, duhamel + mean ** 2, zeros, 0)
        manifest.data.update(duhamel_error=duhamel_error, full_noise_variance=full)
        verdict = verdict and duhamel_error <= 1e-6
    estimate_csv(manifest.artifact('mc_compare.csv'), points, estimates)
    manifest.data.update(mc_samples=em.samples, n_sigma=n_sigma)
    return verdict


def _study_restart(cfg: RunConfig, manifest: Manifest, args) -> bool:
    run = build_run(cfg, serial=args.serial, verbose=args.verbose)
    r_prime = cfg.study.r_prime if cfg.study.r_prime is not None else cfg.T_end / 2.0
    report = restart(run, r_prime, cfg.scaling.eps_list)
    with open(manifest.artifact('restart.csv'), 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['alpha', 'degree', 'discrepancy'])
        for alpha in ordered(report.discrepancy):
            writer.writerow([str(alpha), alpha.degree, '{:.17g}'.format(report.discrepancy[alpha])])
    manifest.data.update(r_prime=r_prime, max_discrepancy=report.max_discrepancy,
                         rescaled_discrepancy={str(k): v for k, v in report.rescaled_discrepancy.items()})
    return report.max_discrepancy <= 1e-10 and all(v <= 1e-10 for v in report.rescaled_discrepancy.values())


def _study_causality(cfg: RunConfig, manifest: Manifest, args) -> bool:
    run = build_run(cfg, serial=args.serial, verbose=args.verbose)
    t_star = cfg.study.t_star if cfg.study.t_star is not None else cfg.T_end / 2.0
    try:
        report = causality_check(run, t_star)
    except SolverError:
        raise
    except WCEError as e:
        raise ConfigError(str(e)) from e
    manifest.data.update(t_star=t_star, forbidden=[str(a) for a in report.forbidden], before=report.before,
                         after=report.after, nondegenerate=report.nondegenerate)
    return report.passed and report.nondegenerate


STUDIES = {
    StudyKind.CATALAN: _study_catalan,
    StudyKind.RESCALING: _study_rescaling,
    StudyKind.MC_COMPARE: _study_mc_compare,
    StudyKind.RESTART: _study_restart,
    StudyKind.CAUSALITY: _study_causality,
}


def cmd_study(kind: StudyKind, cfg: RunConfig, args) -> int:
    out_dir = args.out_dir or os.path.join(cfg.outputs.directory, kind.value)
    manifest = Manifest(out_dir, 'study', cfg, kind=kind.value, seed=args.seed, serial=args.serial)
    try:
        verdict = STUDIES[kind](cfg, manifest, args)
    except SolverError as e:
        logger.error("Study %s failed with error: %s", kind.value, e)
        manifest.finish('failed', error=str(e))
        return EXIT_FAILURE
    except ConfigError as e:
        manifest.finish('config-error', error=str(e))
        raise
    manifest.finish('passed' if verdict else 'failed', verdict=bool(verdict))
    logger.info("study %s: %s", kind.value, 'passed' if verdict else 'FAILED')
    return EXIT_OK if verdict else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='wce', description="Wiener chaos propagators for stochastic Burgers "
                                                             "and Navier-Stokes equations")
    parser.add_argument('-v', '--verbose', action='store_true', help="debug logging and progress bars")
    sub = parser.add_subparsers(dest='command', required=True)

    algebra = sub.add_parser('algebra-check', help="Wick, product, Malliavin and Skorokhod identities")
    algebra.add_argument('--max-degree', type=int, default=4)
    algebra.add_argument('--basis-size', type=int, default=3)

    solve = sub.add_parser('solve', help="run the configured propagator sweep")
    study = sub.add_parser('study', help="run one of the studies on a config")
    study.add_argument('--kind', required=True, choices=[kind.value for kind in StudyKind])

    for command in (algebra, solve, study):
        command.add_argument('--seed', type=int, default=None, help="overrides the config seed")
        command.add_argument('--out-dir', default=None, help="defaults to outputs.directory of the config")
        command.add_argument('--serial', action='store_true', help="bit-exact serial sweeps")
    for command in (solve, study):
        command.add_argument('--config', required=True, help="config file or packaged config name")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        if args.command == 'algebra-check':
            args.seed = 0 if args.seed is None else args.seed
            return cmd_algebra_check(args)
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = cfg.seed
        if args.command == 'solve':
            return cmd_solve(cfg, args)
        return cmd_study(StudyKind(args.kind), cfg, args)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
