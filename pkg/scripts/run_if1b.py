"""Tail-class measures as the imbalance ratio grows."""

from _common import out_dir, parser

from classunc import presets
from classunc.analysis import run_if1b


def main():
    p = parser(__doc__.splitlines()[0], "if1b")
    p.add_argument("--ir", type=float, nargs="+", default=list(presets.IR_LIST))
    args = p.parse_args()
    report = run_if1b(presets.LONG_TAIL_FAMILY, presets.LONG_TAIL_N_BAR, args.ir,
                      presets.setup(args.jobs, args.epochs), args.seeds)
    report.write(out_dir(args.out))
    tail = report.tables["if1b_tail"]
    print(f"{'IR':>6} {'tail mu_C':>10} {'tail mu_U':>10}")
    for ir, c, u in zip(tail["ir"], tail["tail_mu_c"], tail["tail_mu_u_median"]):
        print(f"{ir:6g} {c:10.4f} {u:10.4f}")


if __name__ == "__main__":
    main()
