"""Profile the classifier architecture for every published row and print the gaps.

Accuracy is not reproduced here (it needs the real datasets); the resource
columns come from the static estimators and the default device profile.
"""
import argparse

from tinysweep.footprint import DeviceProfile, profile_spec
from tinysweep.nn import ModelSpec
from tinysweep.reference import ANOMALOUS_ROWS, REPORTED


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", choices=sorted(REPORTED), action="append")
    args = ap.parse_args()
    dp = DeviceProfile()
    cols = ("flash_kb", "ram_kb", "macs_k", "latency_ms", "energy_uj")
    for ds in args.dataset or REPORTED:
        print(f"{ds}")
        print(f"  {'r%':>3} {'shape':>9}  " + "  ".join(f"{c:>20}" for c in cols))
        for r in REPORTED[ds]:
            rep = profile_spec(ModelSpec.sepconv_classifier(r.input_len, r.channels, r.classes), dp)
            got = {"flash_kb": rep.flash_bytes / 1024, "ram_kb": rep.ram_bytes / 1024,
                   "macs_k": rep.macs_total / 1000, "latency_ms": rep.latency_ms,
                   "energy_uj": rep.energy_uj}
            cells = []
            for c in cols:
                want = getattr(r, c)
                cells.append(f"{got[c]:8.2f}/{want:<7g}{(got[c] - want) / want:+6.1%}")
            flag = "  (anomalous row)" if (ds, r.reduction_pct) in ANOMALOUS_ROWS else ""
            print(f"  {r.reduction_pct:>3} {r.input_len:>4}x{r.channels:<4} " + "  ".join(cells)
                  + flag)


if __name__ == "__main__":
    main()
