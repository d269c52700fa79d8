"""Gradient check over many seeds and layouts; prints the error distribution per layout.

    python scripts/gradcheck_sweep.py --seeds 20
"""

import argparse

import numpy as np

from yieldcast.lstm import ModelLayout
from yieldcast.train import grad_check

LAYOUTS = {
    "lstm 3-4": ModelLayout(3, (4,)),
    "lstm 3-4-4": ModelLayout(3, (4, 4)),
    "lstm 3-4-4 dropout": ModelLayout(3, (4, 4), 0.3),
    "rnn 3-4": ModelLayout(3, (4,), 0.0, "rnn"),
    "rnn 3-4-4": ModelLayout(3, (4, 4), 0.0, "rnn"),
}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--time-len", type=int, default=5)
    a = p.parse_args()
    print(f"{'layout':20s} {'median':>9s} {'worst':>9s}  worst block")
    for name, layout in LAYOUTS.items():
        reports = [grad_check(layout, seed=s, eps=a.eps, time_len=a.time_len) for s in range(a.seeds)]
        errs = np.array([r.max_rel_error for r in reports])
        worst = reports[int(errs.argmax())]
        print(f"{name:20s} {np.median(errs):9.2e} {errs.max():9.2e}  {worst.worst_block}", flush=True)


if __name__ == "__main__":
    main()
