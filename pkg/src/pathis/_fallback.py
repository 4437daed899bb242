"""Pure-numpy versions of the hot loops. Same signatures as ``_ext``."""
import numpy as np

BACKEND = "numpy"


def _bins(sensor, px, py, inv_cdt):
    dx = px - sensor[0]
    dy = py - sensor[1]
    u = np.sqrt(dx * dx + dy * dy) * inv_cdt
    m0 = np.floor(u)
    return m0.astype(np.int64), u - m0


def splat(x, sensors, px, py, inv_cdt, m_samples, threads=1):
    """q[i, m] = sum_j linear-interp weight of pixel j at bin m for sensor i."""
    k = sensors.shape[0]
    q = np.zeros((k, m_samples))
    for i in range(k):
        m0, w = _bins(sensors[i], px, py, inv_cdt)
        ok = m0 + 1 < m_samples
        m0, w, xv = m0[ok], w[ok], x[ok]
        q[i] += np.bincount(m0, weights=(1.0 - w) * xv, minlength=m_samples)[:m_samples]
        q[i] += np.bincount(m0 + 1, weights=w * xv, minlength=m_samples)[:m_samples]
    return q


def gather(z, sensors, px, py, inv_cdt, threads=1):
    """Transpose of ``splat``: x[j] = sum_i (1-w) z[i, m0] + w z[i, m0+1]."""
    k, m_samples = z.shape
    x = np.zeros(px.shape[0])
    for i in range(k):
        m0, w = _bins(sensors[i], px, py, inv_cdt)
        ok = m0 + 1 < m_samples
        lo = np.where(ok, m0, 0)
        x += np.where(ok, (1.0 - w) * z[i, lo] + w * z[i, lo + 1], 0.0)
    return x


def _laplacian(p):
    out = -4.0 * p
    out[1:, :] += p[:-1, :]
    out[:-1, :] += p[1:, :]
    out[:, 1:] += p[:, :-1]
    out[:, :-1] += p[:, 1:]
    return out


def laplacian(p):
    return _laplacian(np.asarray(p, dtype=np.float64))


def leapfrog(p_prev, p_cur, coef, taper, nsteps, rec_nodes, src_nodes=None, src_values=None):
    """Advance ``nsteps`` leapfrog updates in place.

    Returns (records, p_prev, p_cur); ``records[s]`` holds the field at
    ``rec_nodes`` (flat indices) after update ``s``. When ``src_nodes`` is
    given, ``src_values[s]`` is imposed there after update ``s``.
    """
    p_prev = np.array(p_prev, dtype=np.float64)
    p_cur = np.array(p_cur, dtype=np.float64)
    rec = np.zeros((nsteps, len(rec_nodes)))
    for s in range(nsteps):
        p_next = 2.0 * p_cur - p_prev + coef * _laplacian(p_cur)
        p_next *= taper
        p_cur *= taper
        if src_nodes is not None:
            p_next.flat[src_nodes] = src_values[s]
        rec[s] = p_next.flat[rec_nodes]
        p_prev, p_cur = p_cur, p_next
    return rec, p_prev, p_cur
