"""Run the full reduction sweep on the synthetic sine/square dataset."""
import argparse
from pathlib import Path

from tinysweep.nn import TrainConfig
from tinysweep.report import report_render
from tinysweep.sweeplab import SweepConfig, run_sweep
from tinysweep.synthetic import synthetic_manifest, wave_recording


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/synthetic_sweep")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    m = synthetic_manifest()
    cfg = SweepConfig(m, (0, 25, 50, 75), TrainConfig(epochs=args.epochs, seed=args.seed),
                      output_dir=args.out)
    run_sweep(cfg, wave_recording(m))
    md = report_render([Path(args.out)])
    (Path(args.out) / "report.md").write_text(md)
    print(md)


if __name__ == "__main__":
    main()
