"""Independent reference implementations used to freeze expected values.

These follow the textbook definitions literally and share no code with the
package under test.
"""

import math

import numpy as np


def bruteforce_ratio(az, cn0, step=0.01, eps=1.0, r_max=100.0):
    """Sweep the bisector over a fixed grid, with the half-sky sets written out
    as in the definition: A1 = {b <= a < b+180 or 0 <= a < b-180}.

    Angles are handled as integer multiples of ``step`` so grid comparisons
    are exact; azimuths must lie on that grid.
    """
    az = np.asarray(az, dtype=float)
    c = np.asarray(cn0, dtype=float)
    if az.size == 0:
        return 1.0
    units = 1.0 / step
    a = np.rint(az * units).astype(np.int32)
    if not np.allclose(a / units, az, atol=1e-9):
        raise ValueError("azimuths must lie on the sweep grid")
    half = int(round(180 * units))
    b = np.arange(int(round(360 * units)), dtype=np.int32)[:, None]
    in_a1 = ((b <= a) & (a < b + half)) | (a < b - half)
    s1 = in_a1 @ c
    s2 = c.sum() - s1
    r = s1 / np.maximum(s2, eps)
    return float(min(max(r.max(), 1.0), r_max))


def _quantile(sorted_vals, q):
    n = len(sorted_vals)
    pos = (n - 1) * q
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return sorted_vals[lo] + (sorted_vals[hi] - sorted_vals[lo]) * frac


def reference_stats(values):
    """Dict of num,sum,mean,std,max,min,range,skewness,kurtosis,median,iqr."""
    v = [float(x) for x in values]
    n = len(v)
    keys = ("num", "sum", "mean", "std", "max", "min", "range", "skewness", "kurtosis", "median", "iqr")
    if n == 0:
        return dict.fromkeys(keys, 0.0)
    total = math.fsum(v)
    mean = total / n
    m2 = math.fsum((x - mean) ** 2 for x in v) / n
    m3 = math.fsum((x - mean) ** 3 for x in v) / n
    m4 = math.fsum((x - mean) ** 4 for x in v) / n
    s = sorted(v)
    if s[0] == s[-1] or m2 == 0.0:
        skew = kurt = 0.0
    else:
        skew = m3 / m2 ** 1.5
        kurt = m4 / (m2 * m2) - 3.0
    return {
        "num": float(n), "sum": total, "mean": mean, "std": math.sqrt(m2),
        "max": s[-1], "min": s[0], "range": s[-1] - s[0],
        "skewness": skew, "kurtosis": kurt, "median": _quantile(s, 0.5),
        "iqr": _quantile(s, 0.75) - _quantile(s, 0.25),
    }


def numerical_gradient(loss_fn, arr, index, step=1e-4):
    """Central difference of ``loss_fn()`` w.r.t. ``arr.flat[index]`` (restored afterwards)."""
    flat = arr.reshape(-1)
    orig = flat[index]
    flat[index] = orig + step
    up = loss_fn()
    flat[index] = orig - step
    down = loss_fn()
    flat[index] = orig
    return (up - down) / (2.0 * step)
