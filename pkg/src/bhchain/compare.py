"""Column-by-column comparison of two series CSVs."""

from __future__ import annotations

import numpy as np

from .io import read_table

SKIP = {"t", "n_eff", "diag_max_imag_residual"}


class CompareError(ValueError):
    """The two files cannot be compared."""


def _align(ta, da, tb, db):
    if len(ta) == len(tb) and np.allclose(ta, tb, rtol=0, atol=1e-9 * max(1.0, abs(ta).max(initial=0))):
        return ta, da, db
    # resample the finer file onto the coarser grid
    swap = len(ta) > len(tb)
    if swap:
        ta, da, tb, db = tb, db, ta, da
    keep = (ta >= tb[0] - 1e-12) & (ta <= tb[-1] + 1e-12)
    grid = ta[keep]
    fine = np.column_stack([np.interp(grid, tb, db[:, k]) for k in range(db.shape[1])])
    coarse = da[keep]
    return (grid, fine, coarse) if swap else (grid, coarse, fine)


def compare_tables(header_a, data_a, header_b, data_b, sigma=3.0, min_fraction=0.99, atol=1e-8):
    """Per-observable agreement statistics.

    Observables with ``_err`` companions are gated on
    ``|a - b| <= sigma * sqrt(err_a^2 + err_b^2) + atol`` holding at a
    fraction ``min_fraction`` of the common times. Columns without error
    companions (populations, variances) are gated at ``atol`` only when
    both files are exact (``n_eff`` all zero); otherwise they are reported
    but not gated.
    """
    if header_a != header_b:
        only_a = sorted(set(header_a) - set(header_b))
        only_b = sorted(set(header_b) - set(header_a))
        raise CompareError(f"incompatible column sets (only in a: {only_a}, only in b: {only_b})")
    if not len(data_a) or not len(data_b):
        raise CompareError("empty series")
    col = {name: k for k, name in enumerate(header_a)}
    t, a, b = _align(data_a[:, 0], data_a, data_b[:, 0], data_b)
    if not len(t):
        raise CompareError("time grids do not overlap")
    exact = not np.any(a[:, col["n_eff"]]) and not np.any(b[:, col["n_eff"]])

    observables = {}
    for name in header_a:
        if name in SKIP or name.endswith("_err"):
            continue
        delta = np.abs(a[:, col[name]] - b[:, col[name]])
        err_name = name + "_err"
        if err_name in col:
            s = np.hypot(a[:, col[err_name]], b[:, col[err_name]])
            gated = True
        else:
            s = np.zeros_like(delta)
            gated = exact
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(s > 0, delta / s, np.where(delta > atol, np.inf, 0.0))
        within = delta <= sigma * s + atol
        frac = float(np.mean(within))
        observables[name] = {
            "max_abs_delta": float(delta.max()),
            "max_delta_over_stderr": float(z.max()),
            "fraction_within": frac,
            "gated": gated,
            "pass": (frac >= min_fraction) if gated else True,
        }
    return {
        "pass": all(o["pass"] for o in observables.values()),
        "sigma": sigma,
        "min_fraction": min_fraction,
        "atol": atol,
        "n_times": int(len(t)),
        "observables": observables,
    }


def compare_files(path_a, path_b, **kw):
    ha, da = read_table(path_a)
    hb, db = read_table(path_b)
    return compare_tables(ha, da, hb, db, **kw)


def format_report(report) -> str:
    lines = [
        f"{'observable':<16} {'max|d|':>12} {'max|d|/se':>10} {'within':>8}  result",
    ]
    for name, o in report["observables"].items():
        verdict = ("PASS" if o["pass"] else "FAIL") if o["gated"] else "info"
        lines.append(
            f"{name:<16} {o['max_abs_delta']:12.4g} {o['max_delta_over_stderr']:10.3g} "
            f"{o['fraction_within']:8.3f}  {verdict}"
        )
    lines.append(f"overall: {'PASS' if report['pass'] else 'FAIL'} "
                 f"({report['sigma']:g} sigma gates, {report['n_times']} times)")
    return "\n".join(lines)
