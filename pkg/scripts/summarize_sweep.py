"""Print BER crossings and algorithm ordering from a sweep CSV.

    python3 scripts/summarize_sweep.py results/narrowband_ber/sweep.csv [--target 1e-2]
"""

import argparse
import math

from mmsehbf.harness import ber_crossing, lookup, read_records


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("csv")
    p.add_argument("--target", type=float, default=1e-2)
    args = p.parse_args(argv)
    recs = read_records(args.csv)
    algs = list(dict.fromkeys(r.algorithm for r in recs))
    print(f"{'algorithm':<14}{'SNR at BER ' + format(args.target, 'g'):>20}")
    for alg in algs:
        rows = lookup(recs, alg, "ber")
        x = ber_crossing([r.snr_db for r in rows], [r.value for r in rows], args.target)
        print(f"{alg:<14}{'n/a' if math.isnan(x) else format(x, '.2f') + ' dB':>20}")
    print()
    for snr in dict.fromkeys(r.snr_db for r in recs):
        ranked = sorted(algs, key=lambda a: lookup(recs, a, "ber", snr)[0].value)
        print(f"{snr:>6g} dB: " + " <= ".join(ranked))


if __name__ == "__main__":
    main()
