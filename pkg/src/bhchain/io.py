"""Config files, CSV series and run manifests."""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

from .estimators import CorrelationSeries
from .model import FIELD_NAMES, ChainConfig, ConfigError, InitialState

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


# ---------------------------------------------------------------- config


def parse_config_text(text: str) -> ChainConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found tables: {', '.join(nested)}")
    return ChainConfig.from_dict(data)


def read_config(path) -> ChainConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, InitialState):
        return json.dumps(value.value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    text = repr(value)
    # TOML floats need a fraction or exponent
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def format_config(config: ChainConfig) -> str:
    lines = [f"{k} = {_toml_value(v)}" for k, v in config.to_dict().items()]
    return "\n".join(lines) + "\n"


def write_config(config: ChainConfig, path) -> None:
    Path(path).write_text(format_config(config), encoding="utf-8", newline="\n")


def apply_overrides(config: ChainConfig, overrides) -> ChainConfig:
    """Apply ``key=value`` strings; values are parsed as TOML scalars."""
    changes = {}
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        if key not in FIELD_NAMES:
            raise ConfigError(f"unknown config keys: {key}")
        raw = raw.strip()
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        changes[key] = value
    return config.replace(**changes) if changes else config


# ------------------------------------------------------------------- csv


def series_columns(wells: int, pairs) -> list[str]:
    cols = ["t"]
    cols += [f"N{j}" for j in range(1, wells + 1)]
    cols += [f"VN{j}" for j in range(1, wells + 1)]
    for i, j in pairs:
        cols += [
            f"xi_{i}_{j}", f"xi_{i}_{j}_err",
            f"sig_{i}_{j}", f"sig_{i}_{j}_err",
            f"sig_{j}_{i}", f"sig_{j}_{i}_err",
            f"zeta_{i}_{j}", f"zeta_{i}_{j}_err",
        ]
    cols += ["n_eff", "diag_max_imag_residual"]
    return cols


def series_table(series: CorrelationSeries) -> np.ndarray:
    """Rows of the CSV as a float array, columns as in :func:`series_columns`."""
    parts = [series.jt[None, :], series.populations, series.variances]
    for p in range(len(series.pairs)):
        parts.append(
            np.stack([
                series.xi[p], series.xi_err[p],
                series.sigma_ij[p], series.sigma_ij_err[p],
                series.sigma_ji[p], series.sigma_ji_err[p],
                series.zeta[p], series.zeta_err[p],
            ])
        )
    parts.append(np.stack([series.n_eff, series.imag_residual]))
    return np.concatenate(parts, axis=0).T


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(x))


def format_series(series: CorrelationSeries) -> str:
    cols = series_columns(series.wells, series.pairs)
    rows = [",".join(cols)]
    for row in series_table(series):
        rows.append(",".join(_fmt(x) for x in row))
    return "\n".join(rows) + "\n"


def write_series(series: CorrelationSeries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_series(series))


def parse_header(header: list[str]):
    """Recover (wells, pairs) from a CSV header, checking the layout."""
    wells = sum(1 for c in header if c.startswith("N") and c[1:].isdigit())
    pairs = []
    for c in header:
        if c.startswith("xi_") and not c.endswith("_err"):
            _, i, j = c.split("_")
            pairs.append((int(i), int(j)))
    expected = series_columns(wells, pairs)
    if header != expected:
        raise ValueError("CSV header does not follow the series schema")
    return wells, pairs


def read_table(path):
    """Header list and float data array of a series CSV."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = [list(map(float, line.rstrip("\n").split(","))) for line in fh if line.strip()]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, data


def read_series(path) -> CorrelationSeries:
    """Parse a series CSV. Population and variance errors are not stored
    in the file and come back as NaN."""
    header, data = read_table(path)
    wells, pairs = parse_header(header)
    cols = data.T
    k = 1
    pops = cols[k : k + wells]
    k += wells
    var = cols[k : k + wells]
    k += wells
    per_pair = cols[k : k + 8 * len(pairs)].reshape(len(pairs), 8, -1) if pairs else np.zeros((0, 8, len(data)))
    nan = np.full_like(pops, np.nan)
    return CorrelationSeries(
        jt=cols[0].copy(),
        wells=wells,
        pairs=pairs,
        populations=pops.copy(),
        populations_err=nan.copy(),
        variances=var.copy(),
        variances_err=nan.copy(),
        xi=per_pair[:, 0].copy(),
        xi_err=per_pair[:, 1].copy(),
        sigma_ij=per_pair[:, 2].copy(),
        sigma_ij_err=per_pair[:, 3].copy(),
        sigma_ji=per_pair[:, 4].copy(),
        sigma_ji_err=per_pair[:, 5].copy(),
        zeta=per_pair[:, 6].copy(),
        zeta_err=per_pair[:, 7].copy(),
        n_eff=cols[-2].copy(),
        imag_residual=cols[-1].copy(),
    )


# -------------------------------------------------------------- manifest


def manifest_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def write_manifest(path, *, command, config: ChainConfig | None, scheme=None, version=None,
                   wall_time=None, n_diverged=None, outputs=(), workers=None, extra=None) -> None:
    doc = {
        "command": command,
        "version": version,
        "scheme": scheme,
        "seed": None if config is None else config.seed,
        "workers": workers,
        "wall_time_s": wall_time,
        "n_diverged": n_diverged,
        "outputs": [str(o) for o in outputs],
        "config": None if config is None else config.to_dict(),
        "config_toml": None if config is None else format_config(config),
    }
    if extra:
        doc.update(extra)
    if isinstance(doc["config"], dict):
        doc["config"] = {k: (v.value if isinstance(v, InitialState) else v) for k, v in doc["config"].items()}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
