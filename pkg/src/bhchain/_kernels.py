"""Compiled inner loops for integrating a block of positive-P trajectories.

State arrays have shape (wells, n); noise has shape (steps, 2*wells, n)
with row 2j driving alpha_j and row 2j+1 driving alpha_j^+. These loops
must agree with :func:`bhchain.sde.step`, which is their reference.
"""

import numpy as np
from numba import njit

# fast-math without the no-nan/no-inf assumptions the divergence check relies on
_FAST = {"contract", "reassoc", "nsz", "arcp"}

EM = 0
MIDPOINT = 1


@njit(cache=True, fastmath=_FAST)
def _drift(a, ap, J, chi, da, dap):
    m = a.shape[0]
    for j in range(m):
        hop = 0j
        hop_p = 0j
        if j > 0:
            hop += a[j - 1]
            hop_p += ap[j - 1]
        if j < m - 1:
            hop += a[j + 1]
            hop_p += ap[j + 1]
        da[j] = -2j * chi * ap[j] * a[j] * a[j] - 1j * J * hop
        dap[j] = 2j * chi * ap[j] * ap[j] * a[j] + 1j * J * hop_p


@njit(cache=True, fastmath=_FAST, inline="always")
def _principal(w):
    if w.real < 0.0 or (w.real == 0.0 and w.imag < 0.0):
        return -w
    return w


@njit(cache=True, fastmath=_FAST)
def advance_block(alpha, alpha_plus, alive, J, chi, dt, noise, n_steps, threshold, scheme, iters):
    """Advance every live trajectory by ``n_steps`` steps in place.

    ``noise`` may have a zero-length first axis when chi == 0, in which case
    the stochastic terms are skipped. A trajectory whose state becomes
    non-finite, or whose |alpha_j||alpha_j^+| exceeds ``threshold`` for
    some well, is marked dead and zeroed.
    """
    m, n = alpha.shape
    noisy = noise.shape[0] > 0
    sq = np.sqrt(dt)
    thr2 = threshold * threshold
    # sqrt(c z^2) = +-sqrt(c) z; _principal picks the principal sign
    ka = np.sqrt(-2j * chi + 0j) * sq
    kap = np.sqrt(2j * chi + 0j) * sq
    a = np.empty(m, dtype=np.complex128)
    ap = np.empty(m, dtype=np.complex128)
    a0 = np.empty(m, dtype=np.complex128)
    ap0 = np.empty(m, dtype=np.complex128)
    da = np.empty(m, dtype=np.complex128)
    dap = np.empty(m, dtype=np.complex128)
    na = np.zeros(m, dtype=np.complex128)
    nap = np.zeros(m, dtype=np.complex128)
    for b in range(n):
        if not alive[b]:
            continue
        for j in range(m):
            a[j] = alpha[j, b]
            ap[j] = alpha_plus[j, b]
        dead = False
        for s in range(n_steps):
            if noisy:
                for j in range(m):
                    na[j] = _principal(ka * a[j]) * noise[s, 2 * j, b]
                    nap[j] = _principal(kap * ap[j]) * noise[s, 2 * j + 1, b]
            if scheme == EM:
                _drift(a, ap, J, chi, da, dap)
                for j in range(m):
                    a[j] = a[j] + da[j] * dt + na[j]
                    ap[j] = ap[j] + dap[j] * dt + nap[j]
            else:
                for j in range(m):
                    a0[j] = a[j]
                    ap0[j] = ap[j]
                for _ in range(iters):
                    _drift(a, ap, J, chi, da, dap)
                    for j in range(m):
                        a[j] = a0[j] + 0.5 * (da[j] * dt + na[j])
                        ap[j] = ap0[j] + 0.5 * (dap[j] * dt + nap[j])
                for j in range(m):
                    a[j] = 2.0 * a[j] - a0[j]
                    ap[j] = 2.0 * ap[j] - ap0[j]
            for j in range(m):
                x = a[j]
                y = ap[j]
                # written so that nan and inf also fail the comparison
                if not ((x.real * x.real + x.imag * x.imag) * (y.real * y.real + y.imag * y.imag) <= thr2):
                    dead = True
                    break
            if dead:
                break
        if dead:
            alive[b] = False
            for j in range(m):
                alpha[j, b] = 0j
                alpha_plus[j, b] = 0j
        else:
            for j in range(m):
                alpha[j, b] = a[j]
                alpha_plus[j, b] = ap[j]
