"""Run every pipeline stage for one config file.

    python scripts/run_pipeline.py configs/synthetic.cfg
    python scripts/run_pipeline.py configs/best10_2layer_pairs3.cfg --skip synth --jobs 4

Stops at the first stage that fails and exits with its status.
"""

import argparse
import sys
import time

from yieldcast.cli import main

STAGES = ("synth", "ingest", "featurize", "select", "search", "predict", "evaluate")


def run(config: str, skip: set[str], jobs: int, extra: list[str]) -> int:
    for stage in STAGES:
        if stage in skip:
            continue
        argv = [stage, "--config", config, *extra]
        if stage == "search":
            argv += ["--jobs", str(jobs)]
        start = time.perf_counter()
        print(f"== {stage}", flush=True)
        code = main(argv)
        print(f"   {stage} finished in {time.perf_counter() - start:.1f} s (exit {code})", flush=True)
        if code:
            return code
    return 0


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--skip", action="append", default=[], choices=STAGES,
                   help="stage to skip; real-data configs should skip synth")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    a = p.parse_args()
    sys.exit(run(a.config, set(a.skip), a.jobs, [x for kv in a.set for x in ("--set", kv)]))
