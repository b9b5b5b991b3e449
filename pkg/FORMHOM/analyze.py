'''

This is the experiment runner for FORMHOM. The user describes a run with an
ExperimentConfig (a key = value file, command line flags, or both) and run(config) forks
on the command, calls the matching handle_<command> to do the numerics and
write_<command> to put the results on disk.

Every run writes results.json and results.csv into the output directory. Some commands
write more:

    sample-env     env.csv, env.json
    dirichlet      cochain.csv, solves.jsonl
    diagnostics    solves.jsonl
    two-scale      two_scale.csv

For example

    formhom estimate-ahom --d 2 --r 1 --ensemble checkerboard2:1,4 --m 5 --nsamples 100 --seed 7

estimates the homogenized energy matrix of the planar checkerboard from 100 samples on a
cube of side 3^5.

Exit codes: 0 on success, 2 for an invalid config, 3 when a solver fails, 4 on I/O errors.

'''

import os

#one BLAS thread per worker; sample-level threads are the parallelism
for _var in ('OPENBLAS_NUM_THREADS', 'OMP_NUM_THREADS', 'MKL_NUM_THREADS'):
    os.environ.setdefault(_var, '1')

import sys
import logging
import argparse

import numpy as np

from .forms.complex import potential, write_cochain_csv, cube_mean
from .homog import env as envs
from .homog import solver
from .homog import homogenize as hom
from .homog import dirichlet as bvp
from .util.observer import ExperimentConfig, CONFIG_KEYS
from .util.parallel import ordered_map
from .util.records import ResultTable, write_results, write_solve_records, load_samples
from .runInfo import RunInfo


logger = logging.getLogger("FORMHOM.analyze")

EXIT_OK          = 0
EXIT_CONFIG      = 2
EXIT_SOLVER      = 3
EXIT_IO          = 4

#O_s calibration needs this many samples per level
MIN_OS_SAMPLES = 10

#D_n below this multiple of rtol counts as zero in rate fits
RATE_ZERO_FACTOR = 100.0

#C_n 3^(n alpha) has to stay within this factor across levels
OS_SPREAD_FACTOR = 3.0


####################################################################
################# Shared output ####################################
####################################################################

def write_common(run, results, table):
    #results.json and results.csv

    json_path = run.output_path('results.json')
    csv_path  = run.output_path('results.csv')

    write_results(json_path, run.config_body(), run.hash, run.version, results, run.metadata())
    table.write(csv_path)

    print("Results written to {} and {}".format(json_path, csv_path))


def dump_env(run, env, sample_index=0):

    sidecar = {'ensemble': run.spec.to_string(), 'seed': run.seed, 'sample_index': sample_index,
               'config_hash': run.hash}
    csv_path, json_path = envs.write_env(env, run.outdir, sidecar)
    print("Environment written to {}".format(csv_path))


def _maybe_dump_env(run, m):

    if run.get('dump_env'):
        dump_env(run, envs.sample(run.spec, m, run.seed, 0))


####################################################################
################# Handlers #########################################
####################################################################

def handle_sample_env(run):

    m = run.get('m')
    env = envs.sample(run.spec, m, run.seed, 0)
    lo, hi = env.spectrum_bounds()

    table = ResultTable('sample-env')
    table.add(m, 'spectrum_min', lo)
    table.add(m, 'spectrum_max', hi)

    return env, {'m': m, 'ncells': env.get_grid().num_cells(), 'spectrum': [lo, hi]}, table


def write_sample_env(out_data, run):

    env, results, table = out_data
    dump_env(run, env)
    write_common(run, results, table)


def handle_estimate_ahom(run):

    m = run.get('m')
    est = hom.estimate_ahom(run.spec, m, run.get('nsamples'), run.seed, threads=run.threads, rtol=run.rtol,
                            verbose=run.verbose)

    results = est.to_dict()
    results['spectrum_ok'] = est.spectrum_ok()

    table = ResultTable('estimate-ahom')
    table.add_matrix(m, 'ahom', est.matrix, est.stderr)

    exact = run.spec.exact_ahom()
    if exact is not None:
        deviation = float(np.linalg.norm(est.matrix - exact.get_matrix(), 2))
        results['exact'] = exact.get_matrix()
        results['exact_deviation'] = deviation
        table.add(m, 'exact_deviation', deviation)

    _maybe_dump_env(run, m)
    return results, table


def handle_sequences(run):

    seq = hom.compute_sequences(run.spec, run.get('m_max'), run.get('nsamples'), run.seed, threads=run.threads,
                                rtol=run.rtol, m_min=run.get('m_min'), verbose=run.verbose)

    table = ResultTable(run.command)
    results = {'levels': seq.levels, 'D': seq.D, 'D_stderr': seq.D_stderr, 'tau': seq.tau,
               'tau_stderr': seq.tau_stderr, 'ahom': seq.ahom, 'ahom_stderr': seq.ahom_stderr,
               'nu_means': seq.nu_means, 'nustar_means': seq.nustar_means, 'os': {}}

    for k, n in enumerate(seq.levels):
        table.add(n, 'D', seq.D[k], seq.D_stderr[k])
        if k < len(seq.tau):
            table.add(n, 'tau', seq.tau[k], seq.tau_stderr[k])
        table.add_matrix(n, 'ahom', seq.ahom[k], seq.ahom_stderr[k])
        for i, value in enumerate(seq.nu_means[k]):
            table.add(n, 'nu[{}]'.format(i), value)
        for j, value in enumerate(seq.nustar_means[k]):
            table.add(n, 'nustar[{}]'.format(j), value)

        if len(seq.J_samples[k]) >= MIN_OS_SAMPLES:
            cal = hom.os_calibrate(seq.J_samples[k], run.get('s'))
            results['os'][str(n)] = cal.C
            table.add(n, 'os_C', cal.C)

    return seq, results, table


def handle_rate(run):

    seq, results, table = handle_sequences(run)
    fit = hom.fit_rate(seq.D, levels=seq.levels, zero_tol=max(1e-12, RATE_ZERO_FACTOR * run.rtol))

    results['rate'] = {'alpha': fit.alpha, 'intercept': fit.intercept, 'r_squared': fit.r_squared,
                       'n_range': fit.n_range, 'all_zero': fit.all_zero}
    results['alpha'] = fit.alpha

    scaled, spread = hom.os_rate_spread({int(n): C for n, C in results['os'].items()}, fit.alpha)
    results['os_scaled'] = {str(n): value for n, value in scaled.items()}
    results['os_spread'] = spread
    results['os_within_factor'] = bool(spread < OS_SPREAD_FACTOR) if np.isfinite(spread) else None
    if np.isfinite(spread):
        table.add(seq.levels[-1], 'os_spread', spread)
    table.add(seq.levels[-1], 'alpha', fit.alpha)
    table.add(seq.levels[-1], 'r_squared', fit.r_squared)

    return results, table


def handle_duality(run):

    m = run.get('m')
    report = hom.verify_duality(run.spec, m, run.get('nsamples'), run.seed, threads=run.threads, rtol=run.rtol,
                                verbose=run.verbose)

    table = ResultTable('duality')
    table.add(m, 'duality_deviation', report.deviation)
    table.add(m, 'exchange_residual', report.exchange_residual, report.exchange_stderr)
    table.add_matrix(m, 'ahom', report.primal.matrix, report.primal.stderr)
    table.add_matrix(m, 'inv_ahom', report.dual.matrix, report.dual.stderr)

    results = {'duality_deviation': report.deviation, 'exchange_residual': report.exchange_residual,
               'exchange_stderr': report.exchange_stderr, 'ahom': report.primal.to_dict(),
               'inv_ahom': report.dual.to_dict()}

    return results, table


def handle_dykhne(run):

    m = run.get('m')
    report = hom.dykhne_check(run.spec, m, run.get('nsamples'), run.seed, threads=run.threads, rtol=run.rtol,
                              verbose=run.verbose)

    table = ResultTable('dykhne')
    table.add(m, 'dykhne_deviation', report.deviation)
    table.add_matrix(m, 'ahom', report.estimate.matrix, report.estimate.stderr)

    results = {'dykhne_deviation': report.deviation, 'expected': report.expected,
               'ahom': report.estimate.to_dict()}

    return results, table


def handle_flatness(run):

    nsamples = run.get('nsamples')
    ahom = run.spec.exact_ahom()
    source = 'exact'
    if ahom is None:
        source = 'estimate'
        ahom = hom.estimate_ahom(run.spec, run.get('ref_m'), run.get('ref_nsamples'), run.seed,
                                 threads=run.threads, rtol=run.rtol, sample_offset=nsamples)

    p, q = run.config.get_p(), run.config.get_q()

    table = ResultTable('flatness')
    results = {'levels': [], 'flatness': [], 'stderr': [], 'ahom_source': source}
    for m in range(run.get('m_min'), run.get('m') + 1):
        run.vprint("Flatness: level {}".format(m))
        report = hom.flatness_check(run.spec, m, p, q, nsamples, run.seed, ahom=ahom, threads=run.threads,
                                    rtol=run.rtol)
        results['levels'].append(m)
        results['flatness'].append(report.value)
        results['stderr'].append(report.stderr)
        table.add(m, 'flatness', report.value, report.stderr)

    return results, table


def handle_dirichlet(run):

    m = run.get('m')
    env = envs.sample(run.spec, m, run.seed, 0)
    p = run.config.get_p()

    problem = bvp.DirichletProblem(env, potential(p), rtol=run.rtol)
    system = solver.EnergySystem(env, run.rtol)
    report = bvp.solve_dirichlet(problem, report=True, system=system)

    mean_du = cube_mean(system.cell_gradient(report.maximizer), env.get_grid(), run.spec.degree)

    table = ResultTable('dirichlet')
    table.add(m, 'energy', report.value)
    for i, value in enumerate(mean_du.coeffs):
        table.add(m, 'mean_du[{}]'.format(i), value)

    results = {'energy': report.value, 'mean_du': mean_du.coeffs, 'iterations': report.iterations,
               'residual': report.relative_residual}

    _maybe_dump_env(run, m)
    return report, results, table


def write_dirichlet(out_data, run):

    report, results, table = out_data

    path = write_cochain_csv(report.maximizer, run.output_path('cochain.csv'))
    print("Solution written to {}".format(path))

    write_solve_records(run.output_path('solves.jsonl'), [report.to_record(run.seed, run.hash)])
    write_common(run, results, table)


def handle_two_scale(run):

    p = run.config.get_p()
    report = bvp.two_scale_error(run.spec, run.config.get_eps_list(), potential(p), run.seed,
                                 ref_m=run.get('ref_m'), ref_nsamples=run.get('ref_nsamples'),
                                 nsamples=run.get('nsamples'), threads=run.threads, rtol=run.rtol,
                                 verbose=run.verbose)

    table = ResultTable('two-scale')
    for k, eps in enumerate(report.eps_list):
        table.add(eps, 'l2_error', report.l2_errors[k], report.l2_stderr[k])
        table.add(eps, 'hminus1_error', report.hminus1_errors[k], report.hminus1_stderr[k])
        table.add(eps, 'expansion_error', report.expansion_errors[k], report.expansion_stderr[k])

    results = {'eps': report.eps_list, 'l2_errors': report.l2_errors, 'hminus1_errors': report.hminus1_errors,
               'expansion_errors': report.expansion_errors, 'l2_stderr': report.l2_stderr,
               'hminus1_stderr': report.hminus1_stderr, 'expansion_stderr': report.expansion_stderr,
               'nsamples': report.nsamples, 'fitted_rate': report.fitted_rate,
               'two_scale': report.metadata}

    return report, results, table


def write_two_scale(out_data, run):

    report, results, table = out_data

    path = run.output_path('two_scale.csv')
    report.to_frame().to_csv(path, index=False)
    print("Two-scale errors written to {}".format(path))

    write_common(run, results, table)


def _diagnose_sample(run, index):
    #structural checks of J on one sample

    m = run.get('m')
    env = envs.sample(run.spec, m, run.seed, index)
    system = solver.EnergySystem(env, run.rtol)
    p, q = run.config.get_p(), run.config.get_q()
    nprobes = run.get('nprobes')

    nu = solver.solve_nu(system, p)
    nustar = solver.solve_nustar(system, q)
    bundle = solver.solve_J(system, p, q, nprobes=nprobes, seed=run.seed, sample_index=index)
    quads = solver.solve_quadratics(system)

    gen = envs.make_generator(run.seed, index, envs.RESPONSE_STREAM)
    lower_ok, upper_ok, middle = solver.quadratic_response(system, p, q, system.random_solution(gen))

    out = {'sample_index': index,
           'J': bundle.J,
           'decomposition_residual': bundle.decomposition_residual(),
           'first_variation_residual': bundle.first_variation_residual,
           'quadratic_form_residual': abs(quads.J(p, q) - bundle.J),
           'quadratic_scaling_residual': abs(quads.J(p*2.0, q*2.0) - 4.0*quads.J(p, q)),
           'bounds': solver.quadratic_bounds(quads),
           'convexity': solver.uniform_convexity(quads, p, -p, q, -q),
           'response_lower_ok': lower_ok,
           'response_upper_ok': upper_ok,
           'response_middle': middle,
           'kernel_invariance': solver.kernel_invariance(system, p, q, seed=run.seed, sample_index=index)}

    if m >= 1:
        out['subadditivity_margin'] = solver.check_subadditivity(system, p, q, run.rtol)
        control = solver.optimizer_control(system, p, q)
        out['optimizer_control'] = {'gap': control.gap, 'margin': control.margin, 'ratio': control.ratio}
        if nprobes > 0:
            cacc = bvp.caccioppoli_diag(system, run.get('fraction'), nprobes, run.seed, sample_index=index)
            out['caccioppoli'] = cacc.summary()

    records = [nu.to_record(run.seed, run.hash), nustar.to_record(run.seed, run.hash)]
    return out, records


def handle_diagnostics(run):

    nsamples = run.get('nsamples')
    outputs = ordered_map(lambda i: _diagnose_sample(run, i), range(nsamples), run.threads)

    table = ResultTable('diagnostics')
    samples, records = [], []
    for out, recs in outputs:
        samples.append(out)
        records += recs
        for key in ('J', 'decomposition_residual', 'first_variation_residual', 'quadratic_form_residual',
                    'quadratic_scaling_residual', 'response_middle', 'kernel_invariance', 'subadditivity_margin'):
            if key in out:
                table.add(out['sample_index'], key, out[key])
        if 'optimizer_control' in out:
            table.add(out['sample_index'], 'optimizer_control_ratio', out['optimizer_control']['ratio'])
        if 'caccioppoli' in out:
            table.add(out['sample_index'], 'caccioppoli_max', out['caccioppoli']['max'])

    worst = {'decomposition_residual': max(s['decomposition_residual'] for s in samples),
             'kernel_invariance': max(s['kernel_invariance'] for s in samples),
             'response_ok': all(s['response_lower_ok'] and s['response_upper_ok'] for s in samples)}
    if run.get('m') >= 1:
        worst['subadditivity_margin'] = min(s['subadditivity_margin'] for s in samples)

    return records, {'samples': samples, 'summary': worst}, table


def write_diagnostics(out_data, run):

    records, results, table = out_data
    write_solve_records(run.output_path('solves.jsonl'), records)
    write_common(run, results, table)


def handle_os_calibrate(run):

    samples = load_samples(run.get('samples_file'))
    cal = hom.os_calibrate(samples, run.get('s'))

    table = ResultTable('os-calibrate')
    table.add(0, 'os_C', cal.C)

    return {'C': cal.C, 's': cal.s, 'nsamples': cal.nsamples, 'all_zero': cal.all_zero}, table


def _write_plain(out_data, run):

    results, table = out_data
    write_common(run, results, table)


def _write_sequences(out_data, run):

    seq, results, table = out_data
    write_common(run, results, table)


#command: (handle, write)
COMMANDS = {
    'sample-env':    (handle_sample_env, write_sample_env),
    'estimate-ahom': (handle_estimate_ahom, _write_plain),
    'sequences':     (handle_sequences, _write_sequences),
    'rate':          (handle_rate, _write_plain),
    'duality':       (handle_duality, _write_plain),
    'dykhne':        (handle_dykhne, _write_plain),
    'flatness':      (handle_flatness, _write_plain),
    'dirichlet':     (handle_dirichlet, write_dirichlet),
    'two-scale':     (handle_two_scale, write_two_scale),
    'diagnostics':   (handle_diagnostics, write_diagnostics),
    'os-calibrate':  (handle_os_calibrate, _write_plain),
}


####################################################################
################# Entry points #####################################
####################################################################

def run(config, threads=None):
    #run one experiment, returning the exit code

    try:
        info = RunInfo(config, threads)
        handle, write = COMMANDS[info.command]

        out_data = handle(info)
        write(out_data, info)

    except (ValueError, KeyError) as err:
        print("Invalid configuration: {}".format(err), file=sys.stderr)
        return EXIT_CONFIG

    except RuntimeError as err:
        print("Solver failure: {}".format(err), file=sys.stderr)
        return EXIT_SOLVER

    except OSError as err:
        print("I/O failure: {}".format(err), file=sys.stderr)
        return EXIT_IO

    return EXIT_OK


def build_parser():

    parser = argparse.ArgumentParser(prog='formhom', description='Stochastic homogenization of differential forms')
    parser.add_argument('command', nargs='?', default=None, help='experiment to run')
    parser.add_argument('--config', default=None, help='key = value config file')
    parser.add_argument('--debug', action='store_true', help='log solver details')

    for key, (default, parser_fn) in CONFIG_KEYS.items():
        if key == 'command':
            continue
        flag = '--' + key.replace('_', '-')
        if default is False:
            parser.add_argument(flag, dest=key, action='store_const', const=True, default=None)
        else:
            parser.add_argument(flag, dest=key, default=None)

    return parser


def main(argv=None):

    args = vars(build_parser().parse_args(argv))

    level = logging.WARNING
    if args.pop('debug'):
        level = logging.DEBUG
    elif args.get('verbose'):
        level = logging.INFO
    logging.basicConfig(level=level, format="%(name)s %(levelname)s: %(message)s")

    config_file = args.pop('config')
    command = args.pop('command')

    try:
        config = ExperimentConfig.from_file(config_file) if config_file else ExperimentConfig()
        config.update(args)
        if command is not None:
            config.set_command(command)
    except (ValueError, KeyError) as err:
        print("Invalid configuration: {}".format(err), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print("I/O failure: {}".format(err), file=sys.stderr)
        return EXIT_IO

    return run(config)


if __name__ == "__main__":

    sys.exit(main())
