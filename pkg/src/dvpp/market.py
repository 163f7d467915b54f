"""Robust day-ahead energy offers under a budget of uncertainty.

Prices vary as ``λ_t = λ̄_t + δ_t ζ_t`` with ``|ζ_t| <= 1`` and
``Σ|ζ_t| <= Γ``. Offers are capped by what the portfolio can always deliver
(firm capacity, the low end of renewable availability and storage shifting),
so in-set realisations never incur a shortfall and the inner worst case only
involves prices. Dualising that inner problem yields a single LP.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InfeasibleProfile, ValidationError
from .lp import linprog

DEFAULT_PENALTY = 50.0


@dataclass(frozen=True)
class UncertainProfile:
    price_low: tuple[float, ...]
    price_high: tuple[float, ...]
    avail_low_mw: tuple[float, ...]
    avail_high_mw: tuple[float, ...]
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("price_low", "price_high", "avail_low_mw", "avail_high_mw"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        n = len(self.price_low)
        if n == 0 or any(len(getattr(self, k)) != n for k in ("price_high", "avail_low_mw", "avail_high_mw")):
            raise ValidationError("profile series must be non-empty and of equal length")
        for t in range(n):
            if self.price_low[t] > self.price_high[t]:
                raise ValidationError(f"period {t + 1}: price_low exceeds price_high")
            if not 0 <= self.avail_low_mw[t] <= self.avail_high_mw[t]:
                raise ValidationError(f"period {t + 1}: availability interval invalid")
        if not 0 <= self.gamma <= n:
            raise ValidationError(f"gamma must lie in [0, {n}]")

    @property
    def periods(self):
        return len(self.price_low)

    @property
    def price_mid(self):
        return np.add(self.price_low, self.price_high) / 2.0

    @property
    def price_dev(self):
        return np.subtract(self.price_high, self.price_low) / 2.0


@dataclass(frozen=True)
class PortfolioSummary:
    """Aggregate capability of the DVPP for offering."""

    firm_mw: float = 0.0  # class D/E capacity, available every period
    storage_power_mw: float = 0.0  # class C discharge above the primary resource
    storage_energy_mwh: float = 0.0


@dataclass
class OfferSchedule:
    offer_mw: list[float]
    worst_case_revenue: float
    penalty_per_mwh: float = DEFAULT_PENALTY
    storage_mw: list[float] = field(default_factory=list)
    ceiling_mw: list[float] = field(default_factory=list)


def dispatchable_ceiling(profile: UncertainProfile, portfolio: PortfolioSummary) -> np.ndarray:
    return portfolio.firm_mw + np.asarray(profile.avail_low_mw) + portfolio.storage_power_mw


def worst_case_revenue(offer: Sequence[float], profile: UncertainProfile) -> float:
    """Inner minimisation in closed form: spend the budget on the largest exposures."""
    x = np.asarray(offer, dtype=float)
    exposure = np.sort(profile.price_dev * np.abs(x))[::-1]
    full = int(math.floor(profile.gamma + 1e-12))
    loss = exposure[:full].sum()
    if full < exposure.size:
        loss += (profile.gamma - full) * exposure[full]
    return float(profile.price_mid @ x - loss)


def solve_robust_offer(profile: UncertainProfile, portfolio: PortfolioSummary,
                       penalty_per_mwh: float = DEFAULT_PENALTY) -> OfferSchedule:
    n = profile.periods
    ceiling = dispatchable_ceiling(profile, portfolio)
    if not np.any(ceiling > 0):
        raise InfeasibleProfile("dispatchable ceiling is zero in every period")
    firm = portfolio.firm_mw + np.asarray(profile.avail_low_mw)
    # variables: x (n), s (n), p (n), q (1)
    nv = 3 * n + 1
    c = np.zeros(nv)
    c[:n] = -profile.price_mid
    c[2 * n:3 * n] = 1.0
    c[-1] = profile.gamma
    a_ub, b_ub = [], []
    dev = profile.price_dev
    for t in range(n):
        row = np.zeros(nv)
        row[t] = dev[t]
        row[2 * n + t] = -1.0
        row[-1] = -1.0
        a_ub.append(row)
        b_ub.append(0.0)
        row = np.zeros(nv)
        row[t] = 1.0
        row[n + t] = -1.0
        a_ub.append(row)
        b_ub.append(firm[t])
    row = np.zeros(nv)
    row[n:2 * n] = 1.0
    a_ub.append(row)
    b_ub.append(portfolio.storage_energy_mwh)
    bounds = [(0.0, None)] * n + [(0.0, portfolio.storage_power_mw)] * n + [(0.0, None)] * (n + 1)
    res = linprog(c, np.array(a_ub), np.array(b_ub), bounds=bounds)
    x = np.maximum(res.x[:n], 0.0)
    s = np.maximum(res.x[n:2 * n], 0.0)
    # storage only where it backs the offer
    s = np.minimum(s, np.maximum(x - firm, 0.0))
    return OfferSchedule(offer_mw=x.tolist(), worst_case_revenue=worst_case_revenue(x, profile),
                         penalty_per_mwh=penalty_per_mwh, storage_mw=s.tolist(), ceiling_mw=ceiling.tolist())


@dataclass(frozen=True)
class Settlement:
    revenue: float
    imbalance_mwh: list[float]


def settle(schedule: OfferSchedule, prices: Sequence[float], deliverable_mw: Sequence[float]) -> Settlement:
    """Hourly settlement: delivered energy at the realised price, shortfall penalised."""
    x = np.asarray(schedule.offer_mw)
    lam = np.asarray(prices, dtype=float)
    d = np.asarray(deliverable_mw, dtype=float)
    delivered = np.minimum(x, d)
    short = np.maximum(0.0, x - d)
    revenue = float(lam @ delivered - schedule.penalty_per_mwh * short.sum())
    return Settlement(revenue=revenue, imbalance_mwh=short.tolist())


def deliverable(schedule: OfferSchedule, portfolio: PortfolioSummary, availability_mw: Sequence[float]) -> np.ndarray:
    storage = np.asarray(schedule.storage_mw) if schedule.storage_mw else 0.0
    return portfolio.firm_mw + np.asarray(availability_mw, dtype=float) + storage


def sample_realizations(profile: UncertainProfile, n: int, seed: int = 0):
    """Draw ``n`` (prices, availability) pairs inside the budgeted uncertainty set."""
    rng = np.random.default_rng(seed)
    t = profile.periods
    for _ in range(n):
        zeta = rng.uniform(-1.0, 1.0, t)
        total = np.abs(zeta).sum()
        if total > profile.gamma:
            zeta *= profile.gamma / total if total > 0 else 0.0
        prices = profile.price_mid + profile.price_dev * zeta
        avail = rng.uniform(profile.avail_low_mw, profile.avail_high_mw)
        yield prices, avail


def certify(schedule: OfferSchedule, profile: UncertainProfile, portfolio: PortfolioSummary,
            n_samples: int = 1000, seed: int = 0, tol: float = 1e-6) -> tuple[bool, float]:
    """Check the certified worst case against sampled in-set realisations.

    Returns (all samples at or above the certificate, lowest sampled revenue).
    """
    lowest = math.inf
    for prices, avail in sample_realizations(profile, n_samples, seed):
        rev = settle(schedule, prices, deliverable(schedule, portfolio, avail)).revenue
        lowest = min(lowest, rev)
    return lowest >= schedule.worst_case_revenue - tol, lowest


def budget_vertices(n: int, gamma: float):
    """Extreme points of {ζ : |ζ_t| <= 1, Σ|ζ_t| <= Γ}."""
    full = int(math.floor(gamma + 1e-12))
    frac = gamma - full
    seen = set()
    for k in range(0, min(full, n) + 1):
        for ones in itertools.combinations(range(n), k):
            rest = [t for t in range(n) if t not in ones]
            partial = [None] + (rest if frac > 1e-12 and k == full else [])
            for p in partial:
                for signs in itertools.product((-1.0, 1.0), repeat=k + (p is not None)):
                    z = [0.0] * n
                    for t, sg in zip(ones, signs):
                        z[t] = sg
                    if p is not None:
                        z[p] = signs[-1] * frac
                    key = tuple(z)
                    if key not in seen:
                        seen.add(key)
                        yield np.array(z)
