"""Assembly of the transition matrix on a full tape window.

Window configurations are numbered by mixed radix::

    index = ((halt * Q + q) * P + pos) * A**C + code

with ``P = C = 2W + 1`` head positions / tape cells and ``code`` the tape
read as a base-``A`` numeral, cell ``-W`` least significant.  Symbols are
stored as digits ``(s - blank) mod A`` so that blank is 0.

Two implementations produce identical COO triplets: a numba kernel and a
vectorised numpy fallback.  Set ``QTMHALT_DISABLE_NUMBA=1`` to force the
fallback.
"""
from __future__ import annotations

import os

import numpy as np

DISABLE_NUMBA = os.environ.get("QTMHALT_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if DISABLE_NUMBA:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


def rule_tables(spec):
    """Flatten the rule table into arrays indexed by ``(q * 2 + halt) * A + digit``."""
    A, blank = spec.alphabet_size, spec.blank
    nkeys = spec.state_count * 2 * A
    counts = np.zeros(nkeys, dtype=np.int64)
    rows = []
    for (p, n0, s), branches in spec.rules.items():
        k = (p * 2 + n0) * A + (s - blank) % A
        counts[k] = len(branches)
        rows.append((k, branches))
    start = np.zeros(nkeys + 1, dtype=np.int64)
    start[1:] = np.cumsum(counts)
    nb = int(start[-1])
    tau = np.zeros(nb, dtype=np.int64)
    halt = np.zeros(nb, dtype=np.int64)
    q = np.zeros(nb, dtype=np.int64)
    d = np.zeros(nb, dtype=np.int64)
    amp = np.zeros(nb, dtype=np.complex128)
    for k, branches in rows:
        for i, b in enumerate(branches):
            j = start[k] + i
            tau[j], halt[j], q[j], d[j], amp[j] = (b.tau - blank) % A, b.halt, b.q, b.d, b.amp
    return start, tau, halt, q, d, amp


def _window_numpy(Q, A, W, start, tau, bhalt, bq, bd, amp):
    P = 2 * W + 1
    AC = A ** P
    n = 2 * Q * P * AC
    idx = np.arange(n, dtype=np.int64)
    code = idx % AC
    rest = idx // AC
    pos = rest % P
    rest //= P
    q = rest % Q
    halt = rest // Q
    weight = A ** pos
    digit = (code // weight) % A
    key = (q * 2 + halt) * A + digit
    lo, hi = start[key], start[key + 1]
    nbr = hi - lo

    rows, cols, vals = [], [], []
    exact = np.ones(n, dtype=np.bool_)
    for slot in range(int(nbr.max(initial=0))):
        sel = np.nonzero(nbr > slot)[0]
        b = lo[sel] + slot
        npos = pos[sel] + bd[b]
        inside = (npos >= 0) & (npos < P)
        exact[sel[~inside]] = False
        sel, b, npos = sel[inside], b[inside], npos[inside]
        ncode = code[sel] + (tau[b] - digit[sel]) * weight[sel]
        nidx = ((bhalt[b] * Q + bq[b]) * P + npos) * AC + ncode
        rows.append(nidx)
        cols.append(sel)
        vals.append(amp[b])
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
        order = np.lexsort((rows, cols))
        rows, cols, vals = rows[order], cols[order], vals[order]
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0, dtype=np.complex128)
    missing = nbr == 0
    return rows, cols, vals, exact, missing


def _window_loops(Q, A, W, start, tau, bhalt, bq, bd, amp):
    P = 2 * W + 1
    AC = 1
    for _ in range(P):
        AC *= A
    n = 2 * Q * P * AC
    nnz = 0
    for c in range(n):
        code = c % AC
        rest = c // AC
        pos = rest % P
        rest //= P
        q = rest % Q
        halt = rest // Q
        weight = 1
        for _ in range(pos):
            weight *= A
        digit = (code // weight) % A
        key = (q * 2 + halt) * A + digit
        nnz += start[key + 1] - start[key]
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.complex128)
    exact = np.ones(n, dtype=np.bool_)
    missing = np.zeros(n, dtype=np.bool_)
    m = 0
    for c in range(n):
        code = c % AC
        rest = c // AC
        pos = rest % P
        rest //= P
        q = rest % Q
        halt = rest // Q
        weight = 1
        for _ in range(pos):
            weight *= A
        digit = (code // weight) % A
        key = (q * 2 + halt) * A + digit
        lo, hi = start[key], start[key + 1]
        if lo == hi:
            missing[c] = True
        # branch targets are distinct, so per-column row order follows branch order
        for b in range(lo, hi):
            npos = pos + bd[b]
            if npos < 0 or npos >= P:
                exact[c] = False
                continue
            ncode = code + (tau[b] - digit) * weight
            rows[m] = ((bhalt[b] * Q + bq[b]) * P + npos) * AC + ncode
            cols[m] = c
            vals[m] = amp[b]
            m += 1
    rows, cols, vals = rows[:m], cols[:m], vals[:m]
    return rows, cols, vals, exact, missing


if HAVE_NUMBA:
    _window_numba = njit(cache=False)(_window_loops)

    def _window_jit(Q, A, W, start, tau, bhalt, bq, bd, amp):
        rows, cols, vals, exact, missing = _window_numba(Q, A, W, start, tau, bhalt, bq, bd, amp)
        order = np.lexsort((rows, cols))
        return rows[order], cols[order], vals[order], exact, missing
else:  # pragma: no cover
    _window_jit = None


def window_triplets(spec, radius: int, backend: str | None = None):
    """COO triplets of ``U`` on the window, plus per-column exactness and missing-rule flags.

    ``backend`` is ``"numba"``, ``"numpy"`` or ``None`` (numba when available).
    """
    tables = rule_tables(spec)
    args = (spec.state_count, spec.alphabet_size, radius) + tables
    if backend is None:
        backend = "numba" if HAVE_NUMBA else "numpy"
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        return _window_jit(*args)
    if backend == "numpy":
        return _window_numpy(*args)
    raise ValueError(f"unknown backend {backend!r}")
