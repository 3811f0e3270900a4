"""Window-length sweep on a synthetic world, written as a metrics table.

    python scripts/window_sweep.py --windows 50,100,150,200 -o sweep.csv
"""
import argparse
import sys

from deepspace import encode, evaluation as ev, ingest, synth
from deepspace.nn import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--windows", default="50,100,150,200")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--users", type=int, default=3)
    ap.add_argument("--records-per-day", type=int, default=60)
    ap.add_argument("--regularity", type=float, default=0.9)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--lr", type=float, default=0.1)
    ap.add_argument("-o", "--output", default="-")
    args = ap.parse_args()

    world = synth.generate_world(4, 10, seed=args.seed)
    records = []
    for u in range(args.users):
        persona = synth.make_persona(world, args.regularity, args.records_per_day, seed=1000 * args.seed + u)
        records += synth.generate_trajectory(world, persona, 23, args.records_per_day,
                                             seed=1000 * args.seed + u, user=str(7000 + u))
    trajs = ingest.clean_pipeline(records)
    index = encode.build_station_index(trajs)
    Ws = [int(w) for w in args.windows.split(",")]
    cfg = TrainConfig(learning_rate=args.lr, seed=args.seed, W=max(Ws), iterations=args.steps)
    rows = ev.sweep_windows(trajs, index, Ws, cfg, schedule="steps")
    out = sys.stdout if args.output == "-" else open(args.output, "w", newline="")
    with out:
        ev.write_metrics_csv([ev.metrics_row(r.W, r.metrics, r.flat_acc) for r in rows], out)


if __name__ == "__main__":
    main()
