import numpy as np


def empirical_cdf(values) -> list[tuple[float, float]]:
    """Right-continuous step CDF as sorted ``(value, fraction <= value)`` pairs."""
    x = np.asarray(list(values), dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empirical_cdf needs at least one value")
    uniq, counts = np.unique(x, return_counts=True)
    frac = np.cumsum(counts) / x.size
    frac[-1] = 1.0
    return [(float(v), float(f)) for v, f in zip(uniq, frac)]
