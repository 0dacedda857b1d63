"""Compiled inner loops for atom lists stored as flat segmented arrays.

A segmented array is ``(ptr, x, w)``: segment ``s`` holds the atoms
``x[ptr[s]:ptr[s+1]]`` (sorted, strictly increasing) with weights ``w[...]``.

W-norm reduction used here.  For a signed atom list with net mass ``M`` the
dual of the norm is a transport problem on the line where mass may also be
created or destroyed at unit cost.  Since the fibre has diameter 1, an optimal
plan destroys exactly ``|M|`` of mass, all of the sign of ``M``; what is left
is the bounded L1 isotonic regression

    min  sum_k d_k |S_k - G_k|   over   0 <= G_1 <= ... <= G_{m-1} <= |M|,

with ``S_k`` the partial sums (sign-normalised so ``M >= 0``) and ``d_k`` the
atom gaps.  It is solved by a weighted max-heap of breakpoints of the
(non-increasing, convex) prefix-minimised cost.
"""

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _heap_push(hp, hw, size, p, w):
    j = size
    hp[j] = p
    hw[j] = w
    while j > 0:
        parent = (j - 1) // 2
        if hp[parent] >= hp[j]:
            break
        hp[parent], hp[j] = hp[j], hp[parent]
        hw[parent], hw[j] = hw[j], hw[parent]
        j = parent
    return size + 1


@njit(cache=True)
def _heap_pop(hp, hw, size):
    size -= 1
    hp[0] = hp[size]
    hw[0] = hw[size]
    j = 0
    while True:
        a = 2 * j + 1
        if a >= size:
            break
        b = a + 1
        c = a
        if b < size and hp[b] > hp[a]:
            c = b
        if hp[j] >= hp[c]:
            break
        hp[c], hp[j] = hp[j], hp[c]
        hw[c], hw[j] = hw[j], hw[c]
        j = c
    return size


@njit(cache=True)
def wnorm_sorted(x, w):
    m = x.shape[0]
    if m == 0:
        return 0.0
    mass = 0.0
    for k in range(m):
        mass += w[k]
    sgn = 1.0 if mass >= 0.0 else -1.0
    top = abs(mass)
    hp = np.empty(m + 2)
    hw = np.empty(m + 2)
    size = _heap_push(hp, hw, 0, 0.0, np.inf)  # wall: G >= 0
    value = 0.0
    s = 0.0
    for k in range(1, m):
        s += sgn * w[k - 1]
        d = x[k] - x[k - 1]
        if d <= 0.0:
            continue
        size = _heap_push(hp, hw, size, s, 2.0 * d)
        rem = d
        while rem > 0.0:
            p = hp[0]
            om = hw[0]
            if rem >= om:
                value += om * (p - s)
                rem -= om
                size = _heap_pop(hp, hw, size)
            else:
                value += rem * (p - s)
                hw[0] = om - rem
                rem = 0.0
    for j in range(size):
        if hp[j] > top:
            value += hw[j] * (hp[j] - top)
    return top + value


@njit(cache=True)
def wnorm_segments(ptr, x, w):
    n = ptr.shape[0] - 1
    out = np.empty(n)
    for s in range(n):
        a = ptr[s]
        b = ptr[s + 1]
        if b - a == 0:
            out[s] = 0.0
            continue
        pos = True
        neg = True
        tot = 0.0
        for k in range(a, b):
            tot += w[k]
            if w[k] < 0.0:
                pos = False
            if w[k] > 0.0:
                neg = False
        if pos or neg:
            out[s] = abs(tot)
        else:
            out[s] = wnorm_sorted(x[a:b], w[a:b])
    return out


@njit(cache=True)
def merge_segments(ptr, x, w, eps):
    """Greedy left-to-right clustering inside each segment.

    A cluster starts at its first atom and absorbs atoms within ``eps`` of
    it.  Its atom sits at the ``|w|``-weighted mean (the ordinary weighted
    mean whenever signs agree), which always lies inside the cluster, so each
    atom moves by at most ``eps``.  Exactly-cancelling clusters are dropped.
    """
    n = ptr.shape[0] - 1
    ox = np.empty(x.shape[0])
    ow = np.empty(x.shape[0])
    optr = np.empty(n + 1, dtype=np.int64)
    optr[0] = 0
    o = 0
    for s in range(n):
        i = ptr[s]
        b = ptr[s + 1]
        while i < b:
            anchor = x[i]
            j = i
            sw = 0.0
            sa = 0.0
            sax = 0.0
            sx = 0.0
            while j < b and x[j] - anchor <= eps:
                sw += w[j]
                sa += abs(w[j])
                sax += abs(w[j]) * x[j]
                sx += x[j]
                j += 1
            if j - i == 1:
                ox[o] = x[i]
                ow[o] = w[i]
                o += 1
            elif sw != 0.0:
                if sa > 0.0:
                    p = sax / sa
                else:
                    p = sx / (j - i)
                # guard against rounding outside the cluster span
                if p < anchor:
                    p = anchor
                if p > x[j - 1]:
                    p = x[j - 1]
                ox[o] = p
                ow[o] = sw
                o += 1
            i = j
        optr[s + 1] = o
    return optr, ox[:o], ow[:o]


@njit(cache=True)
def cap_segments(ptr, x, w, eps, cap):
    """Re-merge segments longer than ``cap`` at doubling tolerances.

    Returns the new arrays and, per segment, the tolerance finally used
    (0 where no extra merge was needed).
    """
    n = ptr.shape[0] - 1
    used = np.zeros(n)
    ox = np.empty(x.shape[0])
    ow = np.empty(x.shape[0])
    optr = np.empty(n + 1, dtype=np.int64)
    optr[0] = 0
    o = 0
    one = np.zeros(2, dtype=np.int64)
    for s in range(n):
        a = ptr[s]
        b = ptr[s + 1]
        sx = x[a:b].copy()
        sw = w[a:b].copy()
        e = eps
        while sx.shape[0] > cap:
            e = 2.0 * e if e > 0.0 else 1e-9
            one[1] = sx.shape[0]
            _, sx, sw = merge_segments(one, sx, sw, e)
            used[s] = e
        k = sx.shape[0]
        ox[o:o + k] = sx
        ow[o:o + k] = sw
        o += k
        optr[s + 1] = o
    return optr, ox[:o], ow[:o], used
