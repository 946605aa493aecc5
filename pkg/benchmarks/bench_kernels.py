"""Compare the compiled GBDT kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--rows 1000] [--width 20] [--repeat 3]

Times training (point and quantile), batch prediction and single-vector
prediction on a synthetic meta-vector matrix, and checks that both backends
give bit-identical predictions.
"""

import argparse
import time

import numpy as np

from mlaqp.gbdt import GbdtConfig, Loss, _backend, _pykernels, fit


def data(rows, width, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1e8, size=(rows, width))
    X[rng.random(X.shape) < 0.8] = np.nan
    y = np.nan_to_num(X[:, 0], nan=5e7) * 0.01 + np.where(np.isnan(X[:, 3]), 1e5, 0) + rng.normal(0, 1e4, rows)
    return X, y


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(kern, name, X, y, repeat):
    _backend.kernels, _backend.BACKEND = kern, name
    point_cfg = GbdtConfig.point(rounds=300, early_stopping_rounds=None)
    quant_cfg = GbdtConfig.quantile(rounds=300)
    t_point, pm = best_of(lambda: fit(X, y, point_cfg), repeat)
    t_quant, qm = best_of(lambda: fit(X, y, quant_cfg, Loss.pinball(0.95)), repeat)
    t_batch, pred = best_of(lambda: pm.predict_batch(X), repeat)
    n_one = min(2000, len(X))
    t_one, _ = best_of(lambda: [pm.predict(x) for x in X[:n_one]], repeat)
    return {
        "fit point (s)": t_point,
        "fit quantile (s)": t_quant,
        "predict batch (ms)": 1e3 * t_batch,
        "predict one (us)": 1e6 * t_one / n_one,
    }, np.concatenate([pred, qm.predict_batch(X)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=1000)
    ap.add_argument("--width", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    X, y = data(args.rows, args.width)
    backends = [("python", _pykernels)]
    try:
        from mlaqp.gbdt import _ckernels
    except ImportError:
        print("compiled kernels not built; timing the NumPy fallback only")
    else:
        backends.insert(0, ("cython", _ckernels))
    saved = _backend.kernels, _backend.BACKEND
    results, preds = {}, {}
    try:
        for name, kern in backends:
            results[name], preds[name] = run(kern, name, X, y, args.repeat)
    finally:
        _backend.kernels, _backend.BACKEND = saved
    names = list(results)
    print(f"{args.rows} rows x {args.width} slots, best of {args.repeat}")
    print(f"{'':22}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    for metric in results[names[0]]:
        vals = [results[n][metric] for n in names]
        line = f"{metric:22}" + "".join(f"{v:>12.3f}" for v in vals)
        if len(vals) == 2:
            line += f"{vals[1] / vals[0]:>11.1f}x"
        print(line)
    if len(names) == 2:
        same = np.array_equal(preds["cython"], preds["python"])
        print(f"predictions bit-identical: {same}")


if __name__ == "__main__":
    main()
