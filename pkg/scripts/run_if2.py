"""Measure drift under literal duplication of tail examples."""

from _common import out_dir, parser

from classunc import presets
from classunc.analysis import run_if2


def main():
    p = parser(__doc__.splitlines()[0], "if2")
    p.add_argument("--lambdas", type=float, nargs="+", default=list(presets.LAMBDA_LIST))
    args = p.parse_args()
    spec = presets.long_tail_data().spec
    report = run_if2(presets.LONG_TAIL_FAMILY, spec, args.lambdas,
                     presets.setup(args.jobs, args.epochs), args.seeds)
    report.write(out_dir(args.out))
    s = report.tables["if2_summary"]
    print(f"{'lambda':>6} {'drift mu_C':>11} {'drift mu_U':>11}")
    for lam, c, u in zip(s["lambda"], s["drift_c_median"], s["drift_u_median"]):
        print(f"{lam:6g} {c:11.4f} {u:11.4f}")


if __name__ == "__main__":
    main()
