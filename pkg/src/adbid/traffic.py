"""Synthetic traffic generation and campaign file I/O.

Generated campaigns follow a simple value-correlated competitor model: each
competitor bids ``gamma * mu**q * (1 + eps)`` with its own coefficient gamma,
so costs rise with the conversion probability but less than proportionally
(q < 1).  That makes high-mu IOs relatively cheap per conversion, which is
the regime where slot upgrades pay off.

The file format is a UTF-8 CSV with a JSON header line::

    {"version": 1, "T": 48, "D": 3, "exposure_probs": [1.0, 0.8, 0.5], "category": 0}
    t,i,mu,sigma,c1,...,c{D+1}

Floats are printed with shortest round-trip precision, so save followed by
load reproduces the campaign bit-exactly.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import CampaignSpec, StepTraffic
from .errors import ConfigError, ParseError

FILE_VERSION = 1


@dataclass(frozen=True)
class TrafficConfig:
    """Knobs for the synthetic campaign generator."""

    horizon: int = 48
    exposure_probs: tuple[float, ...] = (1.0, 0.8, 0.5)
    ios_mean: float = 2000.0          # mean IOs per step
    ios_dispersion: float = 0.2       # extra variance factor; 0 gives Poisson counts
    mu_log_loc: float = math.log(0.01)
    mu_log_scale: float = 1.0
    sigma_ratio: float = 0.3          # sigma = ratio * mu
    competitor_coef_range: tuple[float, float] = (0.5, 5.0)
    competitor_mu_exponent: float = 0.7
    competitor_noise: float = 0.1
    category: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.ios_mean < 0:
            raise ConfigError("ios_mean must be >= 0")
        lo, hi = self.competitor_coef_range
        if not (0 < lo <= hi):
            raise ConfigError("competitor_coef_range must satisfy 0 < lo <= hi")
        if not (0 <= self.sigma_ratio):
            raise ConfigError("sigma_ratio must be >= 0")
        if not (0 < self.competitor_mu_exponent <= 1):
            raise ConfigError("competitor_mu_exponent must lie in (0, 1]")

    def with_seed(self, seed: int) -> "TrafficConfig":
        return replace(self, seed=seed)


def _step_counts(config: TrafficConfig, rng: np.random.Generator) -> np.ndarray:
    lam = config.ios_mean
    if lam == 0:
        warnings.warn("ios_mean is 0; generating an empty campaign", stacklevel=2)
        return np.zeros(config.horizon, dtype=np.int64)
    if config.ios_dispersion <= 0:
        return rng.poisson(lam, config.horizon)
    # negative binomial with mean lam and variance lam * (1 + dispersion)
    r = lam / config.ios_dispersion
    p = 1.0 / (1.0 + config.ios_dispersion)
    return rng.negative_binomial(r, p, config.horizon)


def generate(config: TrafficConfig) -> CampaignSpec:
    """Draw a campaign from the configured distributions, deterministically
    in ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    d = len(config.exposure_probs)
    counts = _step_counts(config, rng)
    lo, hi = config.competitor_coef_range
    steps = []
    for m in counts:
        m = int(m)
        mu = np.minimum(rng.lognormal(config.mu_log_loc, config.mu_log_scale, m), 1.0)
        sigma = config.sigma_ratio * mu
        gamma = rng.uniform(lo, hi, (m, d + 1))
        eps = rng.normal(0.0, config.competitor_noise, (m, d + 1))
        bids = gamma * (mu[:, None] ** config.competitor_mu_exponent) * np.maximum(1.0 + eps, 0.01)
        bids = np.sort(bids, axis=1)[:, ::-1]
        steps.append(StepTraffic(mu=mu, sigma=sigma, competitor_bids=np.ascontiguousarray(bids)))
    return CampaignSpec(
        exposure_probs=np.asarray(config.exposure_probs, dtype=float),
        steps=steps,
        category=config.category,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def save_campaign(campaign: CampaignSpec, path) -> None:
    header = {
        "version": FILE_VERSION,
        "T": campaign.horizon,
        "D": campaign.slot_count,
        "exposure_probs": [float(h) for h in campaign.exposure_probs],
        "category": campaign.category,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header) + "\n")
        for t, st in enumerate(campaign.steps, start=1):
            mu = st.mu
            sigma = st.sigma
            cb = st.competitor_bids
            for i in range(len(st)):
                row = [str(t), str(i), _fmt(mu[i]), _fmt(sigma[i])]
                row.extend(_fmt(c) for c in cb[i])
                fh.write(",".join(row) + "\n")


def load_campaign(path) -> CampaignSpec:
    """Parse a campaign file; raises ParseError with a 1-based line number."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ParseError("missing JSON header", line=1)
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON header: {exc}", line=1) from None
        for key in ("version", "T", "D", "exposure_probs"):
            if key not in header:
                raise ParseError(f"header missing key {key!r}", line=1)
        if header["version"] != FILE_VERSION:
            raise ParseError(
                f"unsupported file version {header['version']} (expected {FILE_VERSION})", line=1
            )
        horizon = int(header["T"])
        d = int(header["D"])
        exposure = np.asarray(header["exposure_probs"], dtype=float)
        if len(exposure) != d:
            raise ParseError(f"exposure_probs has {len(exposure)} entries, expected D={d}", line=1)
        ncols = 4 + d + 1

        rows_by_step: dict[int, list[list[float]]] = {t: [] for t in range(1, horizon + 1)}
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split(",")
            if len(parts) != ncols:
                raise ParseError(f"expected {ncols} columns, got {len(parts)}", line=lineno)
            try:
                t = int(parts[0])
                i = int(parts[1])
                values = [float(x) for x in parts[2:]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if not 1 <= t <= horizon:
                raise ParseError(f"step {t} outside 1..{horizon}", line=lineno)
            if i != len(rows_by_step[t]):
                raise ParseError(f"IO index {i} out of order (expected {len(rows_by_step[t])})", line=lineno)
            mu, sigma = values[0], values[1]
            if not 0.0 <= mu <= 1.0:
                raise ParseError(f"mu {mu} outside [0, 1]", line=lineno)
            if sigma < 0:
                raise ParseError(f"sigma {sigma} must be >= 0", line=lineno)
            bids = values[2:]
            if any(b2 > b1 for b1, b2 in zip(bids, bids[1:])):
                raise ParseError("competitor bids not sorted descending", line=lineno)
            if any(b < 0 or not math.isfinite(b) for b in bids):
                raise ParseError("competitor bids must be finite and >= 0", line=lineno)
            rows_by_step[t].append(values)

    steps = []
    for t in range(1, horizon + 1):
        rows = rows_by_step[t]
        if rows:
            arr = np.asarray(rows, dtype=float)
            steps.append(StepTraffic(mu=arr[:, 0], sigma=arr[:, 1], competitor_bids=arr[:, 2:]))
        else:
            steps.append(
                StepTraffic(
                    mu=np.empty(0), sigma=np.empty(0), competitor_bids=np.empty((0, d + 1))
                )
            )
    return CampaignSpec(exposure_probs=exposure, steps=steps, category=int(header.get("category", 0)))
