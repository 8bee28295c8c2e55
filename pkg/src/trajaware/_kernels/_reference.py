"""Pure numpy kernels.

Every arithmetic expression here mirrors ``_ckernels.pyx`` operation by
operation (same operands, same order, no reductions), so both backends
produce bitwise-identical floats. Keep them in sync.
"""
import numpy as np


def kf_predict(means, covs, controls, dt, q):
    means = np.asarray(means, dtype=np.float64)
    covs = np.asarray(covs, dtype=np.float64)
    controls = np.asarray(controls, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n = means.shape[0]
    out_m = np.empty((n, 4))
    out_m[:, 0] = means[:, 0] + controls[:, 0] * dt
    out_m[:, 1] = means[:, 1] + controls[:, 1] * dt
    out_m[:, 2] = controls[:, 0]
    out_m[:, 3] = controls[:, 1]
    out_c = np.empty((n, 4, 4))
    out_c[:] = q
    out_c[:, :2, :2] = covs[:, :2, :2] + q[:2, :2]
    return out_m, out_c


def kf_update(means, covs, z, r):
    """Kalman update with ``H = [I 0]`` for a batch of beliefs.

    Returns ``(means, covs, innov, s, det, maha2)`` where ``s`` packs the
    innovation covariance as ``[s00, s01, s11]``.
    """
    m = np.asarray(means, dtype=np.float64)
    P = np.asarray(covs, dtype=np.float64)
    z0, z1 = float(z[0]), float(z[1])
    r00, r01, r11 = float(r[0][0]), float(r[0][1]), float(r[1][1])

    e0 = z0 - m[:, 0]
    e1 = z1 - m[:, 1]
    s00 = P[:, 0, 0] + r00
    s01 = P[:, 0, 1] + r01
    s11 = P[:, 1, 1] + r11
    det = s00 * s11 - s01 * s01
    with np.errstate(divide="ignore", invalid="ignore"):
        i00 = s11 / det
        i01 = -s01 / det
        i11 = s00 / det
        k0 = P[:, :, 0] * i00[:, None] + P[:, :, 1] * i01[:, None]
        k1 = P[:, :, 0] * i01[:, None] + P[:, :, 1] * i11[:, None]
        out_m = m + (k0 * e0[:, None] + k1 * e1[:, None])
        c = P - (k0[:, :, None] * P[:, None, 0, :] + k1[:, :, None] * P[:, None, 1, :])
        out_c = 0.5 * (c + c.transpose(0, 2, 1))
        maha2 = e0 * (i00 * e0 + i01 * e1) + e1 * (i01 * e0 + i11 * e1)
    innov = np.stack([e0, e1], axis=1)
    s = np.stack([s00, s01, s11], axis=1)
    return out_m, out_c, innov, s, det, maha2


def nearest(points, centroids, wpos, wvel):
    """Index of and squared weighted distance to the nearest centroid (ties -> lowest)."""
    p = np.asarray(points, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    d = c[None, :, :] - p[:, None, :]
    d2 = (wpos * d[..., 0] * d[..., 0] + wpos * d[..., 1] * d[..., 1]
          + wvel * d[..., 2] * d[..., 2] + wvel * d[..., 3] * d[..., 3])
    idx = np.argmin(d2, axis=1)
    return idx.astype(np.int64), d2[np.arange(p.shape[0]), idx]


def som_epoch(neurons, samples, order, coef, wpos, wvel):
    """One sequential SOM pass, updating ``neurons`` in place.

    ``coef[b, j]`` is learning rate times neighbourhood between BMU ``b``
    and neuron ``j`` for this epoch.
    """
    for k in order:
        x = samples[k]
        d = neurons - x
        d2 = wpos * d[:, 0] * d[:, 0] + wpos * d[:, 1] * d[:, 1] + wvel * d[:, 2] * d[:, 2] + wvel * d[:, 3] * d[:, 3]
        b = int(np.argmin(d2))
        neurons += coef[b][:, None] * (x - neurons)


def systematic_resample(weights, u0):
    w = np.asarray(weights, dtype=np.float64)
    n = w.shape[0]
    cum = np.cumsum(w)
    pos = (np.arange(n) + u0) / n
    idx = np.searchsorted(cum, pos, side="right")
    return np.minimum(idx, n - 1).astype(np.int64)
