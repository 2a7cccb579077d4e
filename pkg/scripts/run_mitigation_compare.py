"""Top-1 error of every mitigation method on the long-tail set."""

from _common import out_dir, parser

from classunc import presets
from classunc.analysis import default_methods, format_table, run_mitigation_compare


def main():
    p = parser(__doc__.splitlines()[0], "compare")
    p.add_argument("--ir", type=float, default=presets.LONG_TAIL_IR)
    args = p.parse_args()
    report = run_mitigation_compare(default_methods(args.epochs), presets.long_tail_data(args.ir),
                                    presets.setup(args.jobs, args.epochs), args.seeds)
    report.write(out_dir(args.out))
    print(format_table(report))


if __name__ == "__main__":
    main()
