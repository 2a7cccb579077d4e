"""Equal-cardinality classes of unequal hardness: measures and mitigation methods."""

import os

from _common import out_dir, parser

from classunc import presets
from classunc.analysis import default_methods, format_table, run_if1a, run_mitigation_compare


def main():
    args = parser(__doc__.splitlines()[0], "semantic").parse_args()
    setup = presets.setup(args.jobs, args.epochs)
    data = presets.semantic_data()
    if1a = run_if1a(data, setup, args.seeds)
    if1a.write(out_dir(os.path.join(args.out, "if1a")))
    print("rho(mu_C):", if1a.summary["rho_c"])
    print("rho(mu_U):", if1a.summary["rho_u"])
    compare = run_mitigation_compare(default_methods(args.epochs), data, setup, args.seeds)
    compare.write(out_dir(os.path.join(args.out, "compare")))
    print(format_table(compare))


if __name__ == "__main__":
    main()
