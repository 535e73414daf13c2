import argparse

from diagnet.commands.command import Command
from diagnet.core.neck import grad_check
from diagnet.utilities.command_line import parse_argument_count, parse_argument_dims, parse_argument_output
from diagnet.utilities.output import RunManifest


class GradCheck(Command):
    NAME = 'gradcheck'
    DESCRIPTION = 'Compare analytic neck gradients with central finite differences for every loss and target mode.'

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument('--seed', metavar='<seed>', type=int, default=0, help='Instance seed')
        parser.add_argument('--trials', metavar='<n>', type=int, default=5, help='Random instances per combination')
        parser.add_argument('--dims', metavar='<N,L,L\'>', type=str, default='16,8,4', help='Node count, features, embedding width')
        parser.add_argument('--tolerance', metavar='<rel>', type=float, default=1e-4, help='Maximum relative error')
        parser.add_argument('--corrupt', action='store_true', help='Perturb the analytic gradient (the check must fail)')
        parser.add_argument('--out', metavar='<filename>', type=str, help='Also write the error report to <filename>')
        parser.add_argument('--force', action='store_true', help='Overwrite an existing report')

    def run(self, args: argparse.Namespace, manifest: RunManifest):
        trials = parse_argument_count('trials', args.trials)
        dims = parse_argument_dims(args.dims)
        out = parse_argument_output(args.out, args.force) if args.out else None

        report = grad_check(args.seed, trials, dims, tolerance=args.tolerance, corrupt=args.corrupt)

        results = {'dims': ','.join(str(d) for d in dims)}
        for combination, error in report.combinations.items():
            results[f'max_rel_error.{combination}'] = f'{error:.3e}'
        results['max_rel_error'] = f'{report.max_rel_error:.3e}'
        results['pass'] = 'true' if report.passed else 'false'
        manifest.add_results(results)

        if out:
            with open(out, 'w') as f:
                f.write(''.join(f'{k}={v}\n' for k, v in results.items()))
            manifest.add_output('report', out)
        manifest.exit_code = 0 if report.passed else 1
