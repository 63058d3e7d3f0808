"""Compiled inner loops for the transfer matrix."""

import math

import numba
import numpy as np

_LOG_HALF = math.log(0.5)


@numba.njit(cache=True)
def advance_linear(rows, cur, e, i0, i1, h, log_scale, top):
    """Advance through rows ``i0 <= i < i1`` in linear form.

    ``rows`` is a ``(2, n+1)`` ping-pong buffer; ``rows[cur]`` holds the
    previous row ``r`` whose true values are ``r * exp(log_scale)`` and whose
    maximum is ``top``.  ``e`` holds ``exp(beta * omega)`` for the new rows in
    cone order.  Returns ``(cur, log_scale, top)``; ``top == 0`` means every
    state died, which only a restriction ``h > 0`` can cause.
    """
    pos = 0
    for i in range(i0, i1):
        old = rows[cur]
        new = rows[1 - cur]
        c = 0.5 / top
        log_scale += math.log(top)
        new[0] = e[pos] * c * old[0]
        for j in range(1, i):
            new[j] = e[pos + j] * c * (old[j - 1] + old[j])
        new[i] = e[pos + i] * c * old[i - 1]
        if h > 0:
            for j in range(i + 1):
                if abs(2 * j - i) >= h:
                    new[j] = 0.0
        top = 0.0
        for j in range(i + 1):
            top = max(top, new[j])
        cur = 1 - cur
        if top == 0.0:
            return cur, log_scale, top
        pos += i + 1
    return cur, log_scale, top


@numba.njit(cache=True)
def _log_add(x, y):
    m = max(x, y)
    if m == -np.inf:
        return m
    return m + math.log1p(math.exp(-abs(x - y)))


@numba.njit(cache=True)
def advance_log(rows, cur, a, i0, i1, h):
    """Log-domain counterpart of ``advance_linear``: ``rows[cur]`` holds ``log Z_{i-1}``.

    Returns ``(cur, alive)``.
    """
    pos = 0
    for i in range(i0, i1):
        old = rows[cur]
        new = rows[1 - cur]
        alive = False
        for j in range(i + 1):
            left = old[j - 1] if j >= 1 else -np.inf
            right = old[j] if j < i else -np.inf
            t = a[pos + j] + _LOG_HALF + _log_add(left, right)
            if h > 0 and abs(2 * j - i) >= h:
                t = -np.inf
            new[j] = t
            alive = alive or t > -np.inf
        cur = 1 - cur
        if not alive:
            return cur, False
        pos += i + 1
    return cur, True
