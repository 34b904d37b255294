"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy version. The public wrappers pick one through
:func:`tandemqbd._accel.use_numba`; both must return identical results up
to floating-point reassociation (bitwise for the simulator).
"""

import numpy as np

from ._accel import njit, use_numba

_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny

# ---------------------------------------------------------------------------
# Sturm sequences for symmetric tridiagonal matrices
# ---------------------------------------------------------------------------


@njit(cache=True)
def _sturm_count_nb(d, e2, x, pivmin):
    n = d.shape[0]
    count = 0
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0.0:
        count += 1
    for i in range(1, n):
        q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


def _sturm_count_np(d, e2, x, pivmin):
    # x may be a vector of shifts; counts returned per shift
    x = np.atleast_1d(np.asarray(x, dtype=float))
    q = d[0] - x
    q = np.where(np.abs(q) < pivmin, -pivmin, q)
    count = (q < 0.0).astype(np.int64)
    for i in range(1, d.shape[0]):
        q = d[i] - x - e2[i - 1] / q
        q = np.where(np.abs(q) < pivmin, -pivmin, q)
        count += q < 0.0
    return count


def _gershgorin(d, e):
    n = d.shape[0]
    r = np.zeros(n)
    if n > 1:
        ae = np.abs(e)
        r[:-1] += ae
        r[1:] += ae
    lo = float(np.min(d - r))
    hi = float(np.max(d + r))
    width = max(hi - lo, abs(lo), abs(hi), 1.0)
    return lo - 4 * _EPS * width, hi + 4 * _EPS * width


def _pivmin(d, e):
    scale = max(float(np.max(np.abs(d))), float(np.max(np.abs(e))) if e.size else 0.0, 1.0)
    return _TINY * 1e4 * scale


@njit(cache=True)
def _bisect_eigs_nb(d, e2, lo0, hi0, pivmin, maxiter):
    n = d.shape[0]
    out = np.empty(n)
    for k in range(n):
        lo = lo0
        hi = hi0
        for _ in range(maxiter):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _sturm_count_nb(d, e2, mid, pivmin) > k:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 2.0 * 2.220446049250313e-16 * max(abs(lo), abs(hi)) + pivmin:
                break
        out[k] = 0.5 * (lo + hi)
    return out


def _bisect_eigs_np(d, e2, lo0, hi0, pivmin, maxiter):
    n = d.shape[0]
    k = np.arange(n)
    lo = np.full(n, lo0)
    hi = np.full(n, hi0)
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi) & (hi - lo > 2.0 * _EPS * np.maximum(np.abs(lo), np.abs(hi)) + pivmin)
        if not active.any():
            break
        above = _sturm_count_np(d, e2, mid, pivmin) > k
        hi = np.where(active & above, mid, hi)
        lo = np.where(active & ~above, mid, lo)
    return 0.5 * (lo + hi)


def tridiag_eigvalsh(d, e, backend=None, maxiter=200):
    """Eigenvalues of a symmetric tridiagonal matrix by Sturm bisection.

    Parameters
    ----------
    d : (n,) array_like
        Diagonal.
    e : (n-1,) array_like
        Off-diagonal.
    backend : {"numba", "numpy"}, optional
        Overrides the process-wide choice.

    Returns
    -------
    (n,) ndarray
        Eigenvalues in ascending order, each bracketed to a few ulps.
    """
    d = np.ascontiguousarray(d, dtype=float)
    e = np.ascontiguousarray(e, dtype=float)
    if e.shape[0] != max(d.shape[0] - 1, 0):
        raise ValueError("off-diagonal must have length n - 1")
    e2 = e * e
    lo, hi = _gershgorin(d, e)
    pivmin = _pivmin(d, e)
    if use_numba(backend):
        return _bisect_eigs_nb(d, e2, lo, hi, pivmin, maxiter)
    return _bisect_eigs_np(d, e2, lo, hi, pivmin, maxiter)


def tridiag_count_below(d, e, x, backend=None):
    """Number of eigenvalues strictly below ``x`` (Sturm count)."""
    d = np.ascontiguousarray(d, dtype=float)
    e = np.ascontiguousarray(e, dtype=float)
    e2 = e * e
    pivmin = _pivmin(d, e)
    if use_numba(backend):
        return int(_sturm_count_nb(d, e2, float(x), pivmin))
    return int(_sturm_count_np(d, e2, float(x), pivmin)[0])


# ---------------------------------------------------------------------------
# Three-term recurrence with magnitude rescaling
# ---------------------------------------------------------------------------

_BIG = 1e150
_SMALL = 1e-150


@njit(cache=True)
def _recurrence_nb(x, n, alpha1, alpha, b2, b, g):
    m = x.shape[0]
    mant = np.empty((n + 1, m))
    logs = np.zeros((n + 1, m))
    for t in range(m):
        prev = 1.0
        mant[0, t] = 1.0
        if n == 0:
            continue
        cur = (x[t] + alpha1) * g
        mant[1, t] = cur
        lg = 0.0
        for k in range(2, n + 1):
            bk = b2 if k == 2 else b
            nxt = ((x[t] + alpha) * cur - bk * prev) * g
            prev = cur
            cur = nxt
            a = abs(cur)
            if a > 1e150 or (a < 1e-150 and a > 0.0):
                prev /= a
                cur /= a
                lg += np.log(a)
            mant[k, t] = cur
            logs[k, t] = lg
    return mant, logs


def _recurrence_np(x, n, alpha1, alpha, b2, b, g):
    m = x.shape[0]
    mant = np.empty((n + 1, m))
    logs = np.zeros((n + 1, m))
    mant[0] = 1.0
    if n == 0:
        return mant, logs
    prev = np.ones(m)
    cur = (x + alpha1) * g
    mant[1] = cur
    lg = np.zeros(m)
    for k in range(2, n + 1):
        bk = b2 if k == 2 else b
        nxt = ((x + alpha) * cur - bk * prev) * g
        prev, cur = cur, nxt
        a = np.abs(cur)
        hit = (a > _BIG) | ((a < _SMALL) & (a > 0.0))
        if hit.any():
            s = np.where(hit, a, 1.0)
            prev = prev / s
            cur = cur / s
            lg = lg + np.log(s)
        mant[k] = cur
        logs[k] = lg
    return mant, logs


def scaled_recurrence(x, n, alpha1, alpha, b2, b, g, backend=None):
    """Run ``p_k = ((x + alpha) p_{k-1} - b_k p_{k-2}) * g`` from ``p_0 = 1``.

    ``p_1 = (x + alpha1) * g`` and ``b_2`` may differ from the steady
    coefficient ``b``. Values are returned as ``mant * exp(logs)`` so that
    degrees in the hundreds neither overflow nor underflow.
    """
    x = np.ascontiguousarray(np.atleast_1d(x), dtype=float)
    if use_numba(backend):
        return _recurrence_nb(x, int(n), float(alpha1), float(alpha), float(b2), float(b), float(g))
    return _recurrence_np(x, int(n), float(alpha1), float(alpha), float(b2), float(b), float(g))


# ---------------------------------------------------------------------------
# GTH state reduction on a banded generator
# ---------------------------------------------------------------------------


@njit(cache=True)
def _gth_banded_nb(band, b):
    n = band.shape[0]
    s = np.zeros(n)
    for k in range(n - 1, 0, -1):
        j0 = max(0, k - b)
        tot = 0.0
        for j in range(j0, k):
            tot += band[k, b + j - k]
        if tot <= 0.0:
            return np.full(n, np.nan)
        s[k] = tot
        for i in range(j0, k):
            aik = band[i, b + k - i]
            if aik == 0.0:
                continue
            f = aik / tot
            for j in range(j0, k):
                if j != i:
                    band[i, b + j - i] += f * band[k, b + j - k]
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        acc = 0.0
        for i in range(max(0, k - b), k):
            acc += pi[i] * band[i, b + k - i]
        pi[k] = acc / s[k]
    return pi / pi.sum()


def _gth_banded_np(band, b):
    n = band.shape[0]
    s = np.zeros(n)
    for k in range(n - 1, 0, -1):
        j0 = max(0, k - b)
        idx = np.arange(j0, k)
        tot = band[k, b + idx - k].sum()
        if tot <= 0.0:
            return np.full(n, np.nan)
        s[k] = tot
        col = band[idx, b + k - idx]
        nz = col != 0.0
        if not nz.any():
            continue
        rows = idx[nz]
        f = col[nz] / tot
        row_k = band[k, b + idx - k]
        ii = rows[:, None]
        jj = idx[None, :]
        upd = f[:, None] * row_k[None, :]
        upd[ii == jj] = 0.0
        band[ii, b + jj - ii] += upd
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        idx = np.arange(max(0, k - b), k)
        pi[k] = np.dot(pi[idx], band[idx, b + k - idx]) / s[k]
    return pi / pi.sum()


def gth_banded(band, b, backend=None):
    """Stationary vector of a generator stored in band form.

    ``band[i, b + (j - i)]`` holds the off-diagonal rate ``Q[i, j]`` for
    ``|i - j| <= b``; the diagonal column is ignored. Only additions of
    nonnegative numbers occur, so small probabilities keep full relative
    accuracy. ``band`` is overwritten.

    Raises
    ------
    ValueError
        If a state cannot reach any lower-indexed state after reduction,
        which means the chain is reducible.
    """
    band = np.ascontiguousarray(band, dtype=float)
    if use_numba(backend):
        pi = _gth_banded_nb(band, int(b))
    else:
        pi = _gth_banded_np(band, int(b))
    if np.isnan(pi[0]):
        raise ValueError("generator is reducible: GTH pivot vanished")
    return pi


# ---------------------------------------------------------------------------
# Counter-based uniforms and the embedded jump-chain simulator
# ---------------------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix_nb(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _mix_np(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _simulate_nb(dlevel, dest, cum, nmoves, start_level, start_phase, top, reps, seed):
    nphase = cum.shape[0]
    hits = np.zeros(nphase, dtype=np.int64)
    key0 = _mix_nb(np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15))
    for r in range(reps):
        key = _mix_nb(key0 ^ _mix_nb(np.uint64(r) + np.uint64(0x9E3779B97F4A7C15)))
        level = start_level
        phase = start_phase
        step = np.uint64(0)
        while level > 0 and level < top:
            step += np.uint64(1)
            bits = _mix_nb(key + step * np.uint64(0x9E3779B97F4A7C15))
            u = np.float64(bits >> np.uint64(11)) * (1.0 / 9007199254740992.0)
            m = 0
            last = nmoves[phase] - 1
            while m < last and u >= cum[phase, m]:
                m += 1
            level += dlevel[phase, m]
            phase = dest[phase, m]
        if level == top:
            hits[phase] += 1
    return hits


def _simulate_np(dlevel, dest, cum, nmoves, start_level, start_phase, top, reps, seed):
    nphase = cum.shape[0]
    hits = np.zeros(nphase, dtype=np.int64)
    with np.errstate(over="ignore"):
        key0 = _mix_np(np.uint64(seed) + _GOLDEN)
        keys = _mix_np(key0 ^ _mix_np(np.arange(reps, dtype=np.uint64) + _GOLDEN))
        level = np.full(reps, start_level, dtype=np.int64)
        phase = np.full(reps, start_phase, dtype=np.int64)
        steps = np.zeros(reps, dtype=np.uint64)
        active = np.nonzero((level > 0) & (level < top))[0]
        while active.size:
            steps[active] += np.uint64(1)
            bits = _mix_np(keys[active] + steps[active] * _GOLDEN)
            u = (bits >> _S11).astype(np.float64) * _INV53
            ph = phase[active]
            c = cum[ph]
            m = (u[:, None] >= c).sum(axis=1)
            m = np.minimum(m, nmoves[ph] - 1)
            level[active] += dlevel[ph, m]
            phase[active] = dest[ph, m]
            keep = (level[active] > 0) & (level[active] < top)
            active = active[keep]
    done = level == top
    np.add.at(hits, phase[done], 1)
    return hits


def simulate_level_hits(dlevel, dest, cum, nmoves, start_level, start_phase, top, reps, seed, backend=None):
    """Count first exits through level ``top`` (before level 0), by phase.

    The move tables describe the embedded jump chain at interior levels:
    from phase ``i`` move ``m`` changes the level by ``dlevel[i, m]`` and
    the phase to ``dest[i, m]``; ``cum[i, m]`` is the cumulative jump
    probability. Replication ``r`` draws its uniforms from a hash of
    ``(seed, r, step)`` so results do not depend on the backend or on
    how replications are scheduled.
    """
    args = (
        np.ascontiguousarray(dlevel, dtype=np.int64),
        np.ascontiguousarray(dest, dtype=np.int64),
        np.ascontiguousarray(cum, dtype=float),
        np.ascontiguousarray(nmoves, dtype=np.int64),
        int(start_level),
        int(start_phase),
        int(top),
        int(reps),
        int(seed) & 0xFFFFFFFFFFFFFFFF,
    )
    if use_numba(backend):
        return _simulate_nb(*args)
    return _simulate_np(*args)
