"""Phase-space moment accumulation and witness estimation.

Ensemble averages of positive-P products are normally ordered quantum
moments, e.g. mean(alpha_i^+ alpha_j) -> <a_i^dag a_j>. A
:class:`MomentRecord` keeps running sums of every product the observables
need, for every sample time, together with per-batch partial sums used for
batch-means error bars. Records from disjoint sets of trajectories merge by
addition.

Channel layout for M wells and P tracked pairs (i, j):

    [0, M)            alpha_j^+ alpha_j
    [M, 2M)           alpha_j^+2 alpha_j^2
    2M + 3p + 0       alpha_i^+ alpha_j
    2M + 3p + 1       alpha_i alpha_j^+
    2M + 3p + 2       alpha_i^+ alpha_i alpha_j^+ alpha_j
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_BATCHES = 100


def n_channels(wells: int, n_pairs: int) -> int:
    return 2 * wells + 3 * n_pairs


def moment_products(alpha: np.ndarray, alpha_plus: np.ndarray, pairs) -> np.ndarray:
    """Per-trajectory products, shape ``(channels,) + alpha.shape[1:]``."""
    wells = alpha.shape[0]
    out = np.empty((n_channels(wells, len(pairs)),) + alpha.shape[1:], dtype=complex)
    n = alpha_plus * alpha
    out[:wells] = n
    out[wells : 2 * wells] = n * n
    base = 2 * wells
    for p, (i, j) in enumerate(pairs):
        i0, j0 = i - 1, j - 1
        out[base + 3 * p] = alpha_plus[i0] * alpha[j0]
        out[base + 3 * p + 1] = alpha[i0] * alpha_plus[j0]
        out[base + 3 * p + 2] = n[i0] * n[j0]
    return out


def _kahan_add(total, comp, value):
    y = value - comp
    t = total + y
    comp[...] = (t - total) - y
    total[...] = t


@dataclass
class MomentRecord:
    """Moment sums over trajectories for a grid of ``n_times`` sample times.

    Trajectory with global index ``g`` always lands in batch
    ``g % n_batches``, so batch contents do not depend on how the ensemble
    was partitioned across workers.
    """

    wells: int
    pairs: list
    n_times: int
    n_batches: int = DEFAULT_BATCHES
    sums: np.ndarray = field(init=False)
    comp: np.ndarray = field(init=False)
    batch_sums: np.ndarray = field(init=False)
    batch_counts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.pairs = [tuple(p) for p in self.pairs]
        k = n_channels(self.wells, len(self.pairs))
        self.sums = np.zeros((self.n_times, k), dtype=complex)
        self.comp = np.zeros((self.n_times, k), dtype=complex)
        self.batch_sums = np.zeros((self.n_times, self.n_batches, k), dtype=complex)
        self.batch_counts = np.zeros((self.n_times, self.n_batches), dtype=np.int64)

    @property
    def counts(self) -> np.ndarray:
        return self.batch_counts.sum(axis=1)

    def empty_like(self) -> "MomentRecord":
        return MomentRecord(self.wells, self.pairs, self.n_times, self.n_batches)

    def accumulate(self, time_index: int, alpha, alpha_plus, traj_index=None, mask=None):
        """Add trajectories' products at one sample time.

        ``alpha`` and ``alpha_plus`` have shape ``(wells,)`` for a single
        trajectory or ``(wells, n)`` for a block. ``traj_index`` gives the
        global trajectory indices (default ``0..n-1``) and ``mask`` marks the
        trajectories to include.
        """
        alpha = np.asarray(alpha, dtype=complex)
        alpha_plus = np.asarray(alpha_plus, dtype=complex)
        if alpha.ndim == 1:
            alpha = alpha[:, None]
            alpha_plus = alpha_plus[:, None]
        n = alpha.shape[1]
        if traj_index is None:
            traj_index = np.arange(n)
        traj_index = np.asarray(traj_index)
        prods = moment_products(alpha, alpha_plus, self.pairs)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            prods = np.where(mask, prods, 0.0)
            weights = mask.astype(np.int64)
        else:
            weights = np.ones(n, dtype=np.int64)
        self._add(time_index, prods, traj_index % self.n_batches, weights)

    def _add(self, time_index, prods, batch_ids, weights):
        nb = self.n_batches
        n = prods.shape[1]
        start = int(batch_ids[0]) if n else 0
        contiguous = n % nb == 0 and start == 0 and np.array_equal(batch_ids, np.arange(n) % nb)
        if contiguous:
            bsum = prods.reshape(prods.shape[0], n // nb, nb).sum(axis=1).T
            bcount = weights.reshape(n // nb, nb).sum(axis=0)
        else:
            bsum = np.zeros((nb, prods.shape[0]), dtype=complex)
            np.add.at(bsum, batch_ids, prods.T)
            bcount = np.bincount(batch_ids, weights=weights, minlength=nb).astype(np.int64)
        self.batch_sums[time_index] += bsum
        self.batch_counts[time_index] += bcount
        _kahan_add(self.sums[time_index], self.comp[time_index], bsum.sum(axis=0))

    def merge(self, other: "MomentRecord") -> "MomentRecord":
        """Combined record of two disjoint trajectory sets."""
        if (self.wells, self.pairs, self.n_times, self.n_batches) != (
            other.wells,
            other.pairs,
            other.n_times,
            other.n_batches,
        ):
            raise ValueError("cannot merge records with different layouts")
        out = self.empty_like()
        out.sums[...] = self.sums
        out.comp[...] = self.comp
        _kahan_add(out.sums, out.comp, other.sums - other.comp)
        out.batch_sums = self.batch_sums + other.batch_sums
        out.batch_counts = self.batch_counts + other.batch_counts
        return out

    def means(self) -> np.ndarray:
        counts = self.counts
        if np.any(counts == 0):
            raise ValueError("record has a sample time with no trajectories")
        return (self.sums - self.comp) / counts[:, None]

    @classmethod
    def from_moments(cls, wells, pairs, means: np.ndarray) -> "MomentRecord":
        """A count-1 record holding exactly known moments, shape ``(T, channels)``."""
        means = np.atleast_2d(np.asarray(means, dtype=complex))
        rec = cls(wells, pairs, means.shape[0], n_batches=1)
        rec.sums[...] = means
        rec.batch_sums[:, 0, :] = means
        rec.batch_counts[:, 0] = 1
        return rec


@dataclass
class CorrelationSeries:
    """Real-valued observables on a time grid, with standard errors.

    ``jt`` is dimensionless time J*t. Per-well arrays have shape
    ``(wells, T)``; per-pair arrays ``(pairs, T)``. ``sigma_ij`` is
    Sigma_ij and ``sigma_ji`` is Sigma_ji for pair ``(i, j)``.
    """

    jt: np.ndarray
    wells: int
    pairs: list
    populations: np.ndarray
    populations_err: np.ndarray
    variances: np.ndarray
    variances_err: np.ndarray
    xi: np.ndarray
    xi_err: np.ndarray
    sigma_ij: np.ndarray
    sigma_ij_err: np.ndarray
    sigma_ji: np.ndarray
    sigma_ji_err: np.ndarray
    zeta: np.ndarray
    zeta_err: np.ndarray
    n_eff: np.ndarray
    imag_residual: np.ndarray

    def pair_index(self, i: int, j: int) -> int:
        return self.pairs.index((i, j))

    def get(self, name: str, i: int, j: int | None = None):
        """Value and error arrays of an observable by name.

        ``name`` is one of ``N``, ``VN`` (well ``i``) or ``xi``, ``sigma``,
        ``zeta`` (pair ``(i, j)``; for ``sigma`` the order matters).
        """
        if name == "N":
            return self.populations[i - 1], self.populations_err[i - 1]
        if name == "VN":
            return self.variances[i - 1], self.variances_err[i - 1]
        if name == "sigma":
            if (i, j) in self.pairs:
                p = self.pair_index(i, j)
                return self.sigma_ij[p], self.sigma_ij_err[p]
            p = self.pair_index(j, i)
            return self.sigma_ji[p], self.sigma_ji_err[p]
        key = (i, j) if (i, j) in self.pairs else (j, i)
        p = self.pair_index(*key)
        return getattr(self, name)[p], getattr(self, name + "_err")[p]


def _batch_se(delta: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Batch-means standard error of a linearized observable.

    ``delta`` holds the observable's first-order deviation for each batch
    mean, shape ``(T, batches)``; empty batches are ignored.
    """
    total = counts.sum(axis=1, keepdims=True)
    w = np.where(total > 0, counts / np.maximum(total, 1), 0.0)
    nb = (counts > 0).sum(axis=1)
    var = np.sum((w * delta) ** 2, axis=1)
    factor = np.where(nb > 1, nb / np.maximum(nb - 1, 1), 0.0)
    return np.sqrt(factor * var)


class _Linearized:
    """Means and per-batch mean deviations for a record."""

    def __init__(self, record: MomentRecord):
        self.m = record.means()
        counts = record.batch_counts
        with np.errstate(invalid="ignore", divide="ignore"):
            mb = record.batch_sums / counts[..., None]
        self.d = np.where(counts[..., None] > 0, mb - self.m[:, None, :], 0.0)
        self.counts = counts

    def mean(self, k):
        return self.m[:, k]

    def dev(self, k):
        return self.d[:, :, k]

    def se(self, delta):
        return _batch_se(delta, self.counts)


def finalize(record: MomentRecord, jt) -> CorrelationSeries:
    """Turn accumulated moments into observables with standard errors.

    Real parts are taken here and nowhere earlier. Errors are batch means
    of the first-order (delta-method) expansion of each observable.
    """
    if np.any(record.counts == 0):
        raise ValueError("cannot finalize: a sample time has zero trajectories")
    lin = _Linearized(record)
    M = record.wells
    T = record.n_times
    P = len(record.pairs)

    pops = np.empty((M, T))
    pops_err = np.empty((M, T))
    var = np.empty((M, T))
    var_err = np.empty((M, T))
    for j in range(M):
        n, dn = lin.mean(j), lin.dev(j)
        q, dq = lin.mean(M + j), lin.dev(M + j)
        pops[j] = n.real
        pops_err[j] = lin.se(dn.real)
        var[j] = (q + n).real - n.real**2
        var_err[j] = lin.se((dq + dn).real - 2 * n.real[:, None] * dn.real)

    xi = np.empty((P, T))
    xi_err = np.empty((P, T))
    s_ij = np.empty((P, T))
    s_ij_err = np.empty((P, T))
    s_ji = np.empty((P, T))
    s_ji_err = np.empty((P, T))
    zeta = np.empty((P, T))
    zeta_err = np.empty((P, T))
    for p, (i, j) in enumerate(record.pairs):
        kx = 2 * M + 3 * p
        x, dx = lin.mean(kx), lin.dev(kx)
        y, dy = lin.mean(kx + 1), lin.dev(kx + 1)
        c, dc = lin.mean(kx + 2), lin.dev(kx + 2)
        ni, dni = lin.mean(i - 1).real, lin.dev(i - 1).real
        nj, dnj = lin.mean(j - 1).real, lin.dev(j - 1).real
        value = (x * y).real - c.real
        dxi = (y[:, None] * dx + x[:, None] * dy).real - dc.real
        xi[p] = value
        xi_err[p] = lin.se(dxi)
        s_ij[p] = value - 0.5 * nj
        s_ij_err[p] = lin.se(dxi - 0.5 * dnj)
        s_ji[p] = value - 0.5 * ni
        s_ji_err[p] = lin.se(dxi - 0.5 * dni)
        zeta[p] = value - 0.5 * (ni + nj) - 0.25
        zeta_err[p] = lin.se(dxi - 0.5 * (dni + dnj))

    resid = imaginary_residual(record, lin)
    return CorrelationSeries(
        jt=np.asarray(jt, dtype=float),
        wells=M,
        pairs=list(record.pairs),
        populations=pops,
        populations_err=pops_err,
        variances=var,
        variances_err=var_err,
        xi=xi,
        xi_err=xi_err,
        sigma_ij=s_ij,
        sigma_ij_err=s_ij_err,
        sigma_ji=s_ji,
        sigma_ji_err=s_ji_err,
        zeta=zeta,
        zeta_err=zeta_err,
        n_eff=record.counts.astype(float),
        imag_residual=resid.max(axis=0) if resid.size else np.zeros(T),
    )


def imaginary_residual(record: MomentRecord, _lin: _Linearized | None = None) -> np.ndarray:
    """|Im| of each physically real expectation in units of its standard error.

    Rows: <N_j> for every well, <a_j^dag2 a_j^2> for every well, then for
    each pair <N_i N_j> and |<a_i^dag a_j>|^2. Shape ``(rows, T)``. With
    zero error (exact moments) an imaginary part at rounding level counts
    as 0 and anything larger as infinity.
    """
    lin = _lin if _lin is not None else _Linearized(record)
    M = record.wells
    values = []
    devs = []
    scales = []
    for k in range(2 * M):
        values.append(lin.mean(k).imag)
        devs.append(lin.dev(k).imag)
        scales.append(np.abs(lin.mean(k)))
    for p in range(len(record.pairs)):
        kx = 2 * M + 3 * p
        x, dx = lin.mean(kx), lin.dev(kx)
        y, dy = lin.mean(kx + 1), lin.dev(kx + 1)
        values.append(lin.mean(kx + 2).imag)
        devs.append(lin.dev(kx + 2).imag)
        scales.append(np.abs(lin.mean(kx + 2)))
        values.append((x * y).imag)
        devs.append((y[:, None] * dx + x[:, None] * dy).imag)
        scales.append(np.abs(x * y))
    out = np.empty((len(values), record.n_times))
    for r, (v, d, scale) in enumerate(zip(values, devs, scales)):
        se = lin.se(d)
        a = np.abs(v)
        roundoff = a <= 1e-12 * np.maximum(scale, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[r] = np.where(se > 0, a / se, np.where(roundoff, 0.0, np.inf))
    return out


def total_number(record: MomentRecord):
    """Ensemble total atom number sum_j <N_j> and its standard error, per time."""
    lin = _Linearized(record)
    wells = range(record.wells)
    value = sum(lin.mean(j).real for j in wells)
    dev = sum(lin.dev(j).real for j in wells)
    return value, lin.se(dev)
