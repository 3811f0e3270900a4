"""Inject switching jumps into synthetic trajectories and measure how many the cleaner repairs.

    python scripts/anomaly_recovery.py --rates 0.01,0.05,0.1,0.2
"""
import argparse

from deepspace import ingest, synth


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rates", default="0.01,0.05,0.1,0.2")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--vmax", type=float, default=150.0)
    args = ap.parse_args()

    cfg = ingest.CleanConfig(v_max_kmh=args.vmax)
    print("rate,seed,injected,kind_a,kind_b,recovery")
    for rate in (float(r) for r in args.rates.split(",")):
        for seed in range(args.seeds):
            world = synth.generate_world(4, 10, seed=seed)
            persona = synth.make_persona(world, 0.9, 40, seed=seed)
            records = synth.generate_trajectory(world, persona, 25, seed=seed)
            dirty, truth = synth.inject_anomalies(records, rate, seed=seed, cfg=cfg)
            cleaned = ingest.flatten(ingest.clean_pipeline(dirty, cfg))
            kinds = [t.kind for t in truth]
            print(f"{rate},{seed},{len(truth)},{kinds.count('a')},{kinds.count('b')},"
                  f"{synth.recovery_rate(cleaned, truth):.4f}")


if __name__ == "__main__":
    main()
