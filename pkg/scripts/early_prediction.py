"""Test error when the season is cut off early (end of July, August, September, October).

Trains one model per cut-off length and seed from an already featurised run
directory and prints the test MSE in de-trended bu/ac^2:

    yieldcast synth --config configs/synthetic.cfg
    yieldcast featurize --config configs/synthetic.cfg
    python scripts/early_prediction.py --config configs/synthetic.cfg --seeds 3
"""

import argparse

import numpy as np

from yieldcast import persist
from yieldcast.config import load_config
from yieldcast.core import MONTH_TO_T
from yieldcast.lstm import predict
from yieldcast.train import DataSplit, mse, split_samples, stack, train_model


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--out", help="run directory, if not the config's output_dir")
    a = p.parse_args()
    cfg = load_config(a.config, {"output_dir": a.out} if a.out else None)
    out = cfg.output_dir
    train_samples, _, _ = persist.load_samples(f"{out}/samples_train.ylds")
    test_samples, _, _ = persist.load_samples(f"{out}/samples_test.ylds")
    X_test, y_test = stack(test_samples)
    print(f"variance baseline {np.var(y_test):.2f}")
    print("month  days  " + "  ".join(f"seed{s}" for s in range(a.seeds)) + "   mean")
    for month, T in sorted(MONTH_TO_T.items(), key=lambda kv: kv[1]):
        scores = []
        for seed in range(a.seeds):
            fit, val = split_samples(train_samples, cfg.val_fraction, seed)
            (X, y), (Xv, yv) = stack(fit), stack(val)
            split = DataSplit(np.ascontiguousarray(X[:, :, :T]), y, np.ascontiguousarray(Xv[:, :, :T]), yv)
            hp = cfg.with_overrides({"seed": str(seed)}).hyperparams()
            model = train_model(split, hp).model
            scores.append(mse(predict(model, np.ascontiguousarray(X_test[:, :, :T])), y_test))
        cells = "  ".join(f"{s:5.1f}" for s in scores)
        print(f"{month:6s} {T:4d}  {cells}  {np.mean(scores):6.1f}", flush=True)


if __name__ == "__main__":
    main()
