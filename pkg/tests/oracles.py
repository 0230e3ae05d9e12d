"""Reference computations shared by the unit tests and the acceptance suite."""

import numpy as np

from dpdpseg.aernn import AernnConfig, AernnModel


def gradient_check(preset: str, n_params: int = 50, n_symbols: int = 5, seed: int = 0,
                   batch=((1, 2, 3, 4), (5, 3, 1))) -> float:
    """Worst relative error between backprop and central differences (h = 1e-4).

    Analytic gradients come from a float64 model; the finite differences are
    taken on an extended-precision copy so that roundoff stays far below the
    truncation error of the difference quotient.
    """
    model = AernnModel(AernnConfig.preset(preset, n_symbols), seed=seed, dtype=np.float64)
    wide = model.astype(np.longdouble)
    batch = [list(s) for s in batch]
    _, grads = model.loss_and_grads(batch)
    rng = np.random.default_rng(seed + 1)
    names = sorted(model.params)
    h = np.longdouble(1e-4)
    worst = 0.0
    for i in range(n_params):
        name = names[i % len(names)]
        p = wide.params[name]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        old = p[idx]
        p[idx] = old + h
        up = wide.loss(batch)
        p[idx] = old - h
        down = wide.loss(batch)
        p[idx] = old
        fd = float((up - down) / (2 * h))
        an = float(grads[name][idx])
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
    return worst
