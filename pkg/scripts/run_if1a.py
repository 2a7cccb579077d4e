"""Rank agreement between each measure and the naive classifier's per-class error.

Runs on the long-tail set (IR 50) and on the equal-cardinality semantic set.
"""

import os

from _common import out_dir, parser

from classunc import presets
from classunc.analysis import run_if1a


def main():
    args = parser(__doc__.splitlines()[0], "if1a").parse_args()
    setup = presets.setup(args.jobs, args.epochs)
    for name, data in (("long_tail", presets.long_tail_data()), ("semantic", presets.semantic_data())):
        report = run_if1a(data, setup, args.seeds)
        report.write(out_dir(os.path.join(args.out, name)))
        rc, ru = report.summary["rho_c"], report.summary["rho_u"]
        print(f"{name:10s} rho(mu_C): median {rc['median']}  rho(mu_U): median {ru['median']}")


if __name__ == "__main__":
    main()
