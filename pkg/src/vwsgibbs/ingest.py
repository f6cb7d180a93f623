"""Data preparation for the joint model.

Published survey tables give point estimates and variances (or margins of
error) on the count scale. The model works with log estimates, so variances
are carried over with a first-order delta method.
"""

from __future__ import annotations

import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .sae import ModelData

ZERO_ESTIMATE = "ZERO_ESTIMATE"
DF_BELOW_ONE = "DF_BELOW_ONE"
MISSING_REQUIRED = "MISSING_REQUIRED"


class IngestError(ValueError):
    pass


def delta_transform(est, var):
    """Log point estimate and delta-method variance ``var / est**2``.

    Returns ``None`` for a nonpositive estimate, which has no log.
    """
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    if not est > 0:
        return None
    return math.log(est), var / (est * est)


def acs_degrees_of_freedom(n):
    if not n > 0:
        raise ValueError(f"sample size must be positive, got {n}")
    return 0.36 * math.sqrt(n)


def moe_to_variance(moe, divisor):
    return (moe / divisor) ** 2


@dataclass
class Schema:
    """Column mapping for :func:`load_dataset`.

    Exactly one of ``variance`` and ``moe`` names the uncertainty column;
    ``moe_divisor`` converts a margin of error to a standard error (1.645 for
    a 90% margin). ``x_log1p`` covariates enter the mean regression as
    ``log(1 + value)``; ``z`` terms build the variance regression, with
    ``"log_n"`` meaning the log sample size.
    """

    estimate: str
    n: str
    id: str | None = None
    variance: str | None = None
    moe: str | None = None
    moe_divisor: float | None = None
    x_log1p: list = field(default_factory=list)
    x_raw: list = field(default_factory=list)
    z: list = field(default_factory=lambda: ["log_n"])
    fill_missing: dict = field(default_factory=dict)
    df_rule: str = "acs"

    def __post_init__(self):
        if (self.variance is None) == (self.moe is None):
            raise IngestError("schema needs exactly one of 'variance' or 'moe'")
        if self.moe is not None and not (self.moe_divisor and self.moe_divisor > 0):
            raise IngestError("a margin-of-error column needs a positive 'moe_divisor'")
        if self.df_rule not in ("acs", "n_minus_1"):
            raise IngestError(f"unknown df_rule {self.df_rule!r}")

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        cfg = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
        try:
            return cls(**cfg)
        except TypeError as exc:
            raise IngestError(f"bad schema {path}: {exc}") from exc

    def to_dict(self):
        return dict(self.__dict__)

    def degrees_of_freedom(self, n):
        if self.df_rule == "acs":
            return 0.36 * np.sqrt(n)
        return n - 1.0


def load_dataset(path, schema):
    """Read a CSV into :class:`ModelData`, dropping rows the model cannot use.

    Returns ``(data, report)``; the report lists every dropped row with one of
    ``ZERO_ESTIMATE``, ``DF_BELOW_ONE`` or ``MISSING_REQUIRED``.
    """
    if not isinstance(schema, Schema):
        schema = Schema(**schema)
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestError(f"could not parse {path}: {exc}") from exc
    return prepare_frame(df, schema, source=str(path))


def prepare_frame(df, schema, source=None):
    unc = schema.variance or schema.moe
    covs = list(schema.x_log1p) + list(schema.x_raw) + [c for c in schema.z if c != "log_n"]
    required = [schema.estimate, unc, schema.n] + covs + ([schema.id] if schema.id else [])
    missing_cols = [c for c in required if c not in df.columns]
    if missing_cols:
        raise IngestError(f"missing required columns: {missing_cols}")
    df = df.copy()
    for col, val in schema.fill_missing.items():
        if col in df.columns:
            df[col] = df[col].fillna(val)
    numeric = [schema.estimate, unc, schema.n] + covs
    for col in numeric:
        df[col] = pd.to_numeric(df[col], errors="coerce")

    ids = df[schema.id].astype(str).tolist() if schema.id else [str(i) for i in range(len(df))]
    est = df[schema.estimate].to_numpy(float)
    raw_unc = df[unc].to_numpy(float)
    var = raw_unc if schema.variance else (raw_unc / schema.moe_divisor) ** 2
    n = df[schema.n].to_numpy(float)

    reasons = [None] * len(df)
    incomplete = df[numeric].isna().any(axis=1).to_numpy() | ~(var > 0) | ~(n > 0)
    for r in range(len(df)):
        if incomplete[r]:
            reasons[r] = MISSING_REQUIRED
        elif not est[r] > 0:
            reasons[r] = ZERO_ESTIMATE
        elif schema.degrees_of_freedom(n[r]) < 1:
            reasons[r] = DF_BELOW_ONE
    keep = np.array([x is None for x in reasons])
    report = {
        "source": source,
        "input_rows": len(df),
        "retained": int(keep.sum()),
        "excluded": [
            {"row": r, "id": ids[r], "reason": reasons[r]} for r in range(len(df)) if reasons[r] is not None
        ],
    }
    if not keep.any():
        raise IngestError("no rows remain after exclusions")

    y = np.log(est[keep])
    s2 = var[keep] / est[keep] ** 2
    nk = n[keep]
    x_cols = [np.ones(keep.sum())]
    x_cols += [np.log1p(df[c].to_numpy(float)[keep]) for c in schema.x_log1p]
    x_cols += [df[c].to_numpy(float)[keep] for c in schema.x_raw]
    z_cols = [np.ones(keep.sum())]
    z_cols += [np.log(nk) if c == "log_n" else df[c].to_numpy(float)[keep] for c in schema.z]
    data = ModelData(
        y=y,
        s2=s2,
        n=nk,
        d=schema.degrees_of_freedom(nk),
        X=np.column_stack(x_cols),
        Z=np.column_stack(z_cols),
        area_ids=tuple(i for i, k in zip(ids, keep) if k),
    )
    return data, report


# Bundles -------------------------------------------------------------------


def save_bundle(path, data, report=None, manifest=None):
    """Write model data as an ``.npz`` with a JSON sidecar for the report."""
    path = Path(path)
    np.savez(
        path,
        y=data.y, s2=data.s2, n=data.n, d=data.d, X=data.X, Z=data.Z,
        area_ids=np.array(data.area_ids, dtype=str),
    )
    meta = {"report": report, "manifest": manifest, "m": data.m}
    _sidecar(path).write_text(json.dumps(meta, indent=2, default=_json_default), encoding="utf-8")


def _sidecar(path):
    path = Path(path)
    base = path if path.suffix == ".npz" else path.with_name(path.name + ".npz")
    return base.with_suffix(".json")


def load_bundle(path):
    path = Path(path)
    with np.load(path if path.suffix == ".npz" else path.with_name(path.name + ".npz")) as z:
        return ModelData(
            y=z["y"], s2=z["s2"], n=z["n"], d=z["d"], X=z["X"], Z=z["Z"],
            area_ids=tuple(z["area_ids"].tolist()),
        )


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


# Simulation ----------------------------------------------------------------


@dataclass(frozen=True)
class SimulationSettings:
    """Data-generating values for the posterior simulation design."""

    m: int = 500
    beta: tuple = (1.5, 0.85)
    gamma: tuple = (2.6, -1.0)
    phi2: float = 0.2
    tau2: float = 0.25
    n_df: float = 16.0
    x_mean: float = 8.0
    x_sd: float = 2.0
    min_n: float = 2.0


def simulate_dataset(settings, rng):
    """Draw one dataset from the joint model.

    Sample sizes are chi-square(n_df) draws, resampled while at or below
    ``min_n`` so that ``d = n - 1`` exceeds 1 and every inverse gamma shape
    ``(d - 1) / 2`` is positive. Returns ``(data, truth)`` where ``truth``
    holds the latent theta and sigma2 and the generating parameters.
    """
    s = settings if isinstance(settings, SimulationSettings) else SimulationSettings(**settings)
    if s.m < 3:
        raise ValueError("need m >= 3")
    n = rng.chisquare(s.n_df, s.m)
    low = n <= s.min_n
    while low.any():
        n[low] = rng.chisquare(s.n_df, low.sum())
        low = n <= s.min_n
    d = n - 1.0
    X = np.column_stack([np.ones(s.m), rng.normal(s.x_mean, s.x_sd, s.m)])
    Z = np.column_stack([np.ones(s.m), np.log(n)])
    sigma2 = np.exp(Z @ np.asarray(s.gamma) + math.sqrt(s.tau2) * rng.standard_normal(s.m))
    theta = X @ np.asarray(s.beta) + math.sqrt(s.phi2) * rng.standard_normal(s.m)
    y = theta + np.sqrt(sigma2) * rng.standard_normal(s.m)
    s2 = sigma2 * rng.chisquare(d) / d
    data = ModelData(y=y, s2=s2, n=n, d=d, X=X, Z=Z)
    truth = {"theta": theta, "sigma2": sigma2, "beta": np.asarray(s.beta), "gamma": np.asarray(s.gamma),
             "phi2": s.phi2, "tau2": s.tau2}
    return data, truth


@dataclass(frozen=True)
class TableSettings:
    """Generator for a county-style survey table with published-scale columns."""

    m: int = 600
    beta: tuple = (-0.4, 0.51, 0.43)
    gamma: tuple = (1.85, -0.90)
    phi2: float = 0.05
    tau2: float = 0.095
    log_pep_mean: float = 9.3
    log_pep_sd: float = 1.3
    snap_missing: int = 3
    moe_divisor: float = 1.645


TABLE_SCHEMA = {
    "id": "county",
    "estimate": "estimate",
    "moe": "moe",
    "moe_divisor": 1.645,
    "n": "sample_size",
    "x_log1p": ["snap", "pep"],
    "z": ["log_n"],
    "fill_missing": {"snap": 0},
    "df_rule": "acs",
}


def simulate_table(settings, rng):
    """Synthetic county table: estimate, 90% MOE, sample size, SNAP and PEP.

    Stands in for published tables in tests and examples. Estimates are
    rounded to whole counts, so small counties can publish a zero.
    """
    s = settings if isinstance(settings, TableSettings) else TableSettings(**settings)
    log_pep = rng.normal(s.log_pep_mean, s.log_pep_sd, s.m)
    pep = np.round(np.exp(log_pep))
    snap = np.round(pep * np.exp(rng.normal(-1.6, 0.5, s.m)))
    n = np.round(np.exp(0.85 * log_pep - 1.4 + rng.normal(0, 0.35, s.m))).clip(3, None)
    X = np.column_stack([np.ones(s.m), np.log1p(snap), np.log1p(pep)])
    Z = np.column_stack([np.ones(s.m), np.log(n)])
    sigma2 = np.exp(Z @ np.asarray(s.gamma) + math.sqrt(s.tau2) * rng.standard_normal(s.m))
    theta = X @ np.asarray(s.beta) + math.sqrt(s.phi2) * rng.standard_normal(s.m)
    y = theta + np.sqrt(sigma2) * rng.standard_normal(s.m)
    d = 0.36 * np.sqrt(n)
    s2 = sigma2 * rng.chisquare(d) / d
    est = np.round(np.exp(y))
    moe = np.round(s.moe_divisor * np.sqrt(s2) * np.maximum(est, 1.0), 1)
    frame = pd.DataFrame({
        "county": [f"C{i:05d}" for i in range(s.m)],
        "estimate": est,
        "moe": moe,
        "sample_size": n,
        "snap": snap,
        "pep": pep,
    })
    if s.snap_missing:
        idx = rng.choice(s.m, size=min(s.snap_missing, s.m), replace=False)
        frame.loc[idx, "snap"] = np.nan
    return frame
