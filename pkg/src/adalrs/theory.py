"""Executable checks of the convergence claims behind AdaLRS."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .controller import (
    AdaLRSConfig,
    AdjustmentEvent,
    ControllerState,
    check_multiplicative_independence,
    rectified_factors,
)


class NotFoundError(LookupError):
    pass


@dataclass(frozen=True)
class DensityResult:
    m: int
    n: int
    achieved: float
    relative_error: float


def density_approximate(
    alpha: float,
    beta: float,
    r: float,
    epsilon_rel: float = 0.05,
    max_exponent: int = 64,
) -> DensityResult:
    """Best ``alpha**m / beta**n`` approximation of ``r`` over ``0 <= m, n <= max_exponent``.

    The box is searched exhaustively in log space; the winner (and anything tied
    with it to 1e-9) is then re-evaluated exactly with rational arithmetic.
    Ties prefer the smallest ``m + n``.
    """
    if not (alpha > 1 and beta > 1 and r > 0):
        raise ValueError("need alpha, beta > 1 and r > 0")
    check_multiplicative_independence(alpha, beta)
    ms = np.arange(max_exponent + 1)[:, None]
    ns = np.arange(max_exponent + 1)[None, :]
    log_ratio = ms * math.log(alpha) - ns * math.log(beta) - math.log(r)
    approx_err = np.abs(np.expm1(log_ratio))
    best = float(approx_err.min())
    cand = np.argwhere(approx_err <= best + 1e-9)

    fa, fb, fr = Fraction(alpha), Fraction(beta), Fraction(r)
    scored = []
    for m, n in cand:
        m, n = int(m), int(n)
        exact = fa**m / fb**n
        scored.append((abs(exact - fr) / fr, m + n, m, n, exact))
    rel, _, m, n, exact = min(scored)
    result = DensityResult(m=m, n=n, achieved=float(exact), relative_error=float(rel))
    if result.relative_error > epsilon_rel:
        raise NotFoundError(
            f"best pair (m={m}, n={n}) has relative error {result.relative_error:.3g} "
            f"> {epsilon_rel} within max_exponent={max_exponent}"
        )
    return result


def contraction_radius(eta_star: float, alpha: float, beta: float) -> float:
    """Half-width of the band around ``eta_star`` inside which one multiplicative step may overshoot.

    An upscale by ``alpha`` from ``eta`` strictly shrinks ``|eta - eta_star|``
    iff ``eta < 2 eta_star / (alpha + 1)``, and a downscale by ``beta`` iff
    ``eta > 2 beta eta_star / (beta + 1)``. The larger of the two gaps bounds both.
    """
    return eta_star * max((alpha - 1) / (alpha + 1), (beta - 1) / (beta + 1))


BaseLR = Callable[[int], float] | Sequence[float] | float


def _base_at(base_lr: BaseLR, step: int) -> float:
    if callable(base_lr):
        return float(base_lr(step))
    if isinstance(base_lr, (int, float)):
        return float(base_lr)
    return float(base_lr[step])


def measure_gamma(
    events: Sequence[AdjustmentEvent],
    eta_star: float,
    base_lr: BaseLR,
    e: float = 0.0,
) -> float:
    """Worst per-adjustment contraction ``|eta_after - eta*| / |eta_before - eta*|``.

    Only events that actually change the scale and start outside
    ``(eta* - e, eta* + e)`` count. Both LRs use the base schedule value at
    the event step, so scheduler decay does not leak into the ratio.
    """
    ratios = []
    for ev in events:
        if ev.new_scale == ev.old_scale:
            continue
        base = _base_at(base_lr, ev.step)
        before = base * ev.old_scale
        after = base * ev.new_scale
        if abs(before - eta_star) < e:
            continue
        ratios.append(abs(after - eta_star) / abs(before - eta_star))
    if not ratios:
        raise ValueError("no scale-changing adjustment events outside the e-neighborhood")
    return max(ratios)


@dataclass(frozen=True)
class ConvergenceVerdict:
    final_scale_lr: float
    eta_star: float
    band_lo: float
    band_hi: float
    inside: bool
    gamma_estimate: float | None = None


def band_for(cfg: AdaLRSConfig, adjustment_count: int, eta_star: float, e: float) -> tuple[float, float]:
    if eta_star <= e:
        raise ValueError(f"degenerate band: eta_star={eta_star} <= e={e}")
    alpha_p, beta_inv = rectified_factors(cfg, adjustment_count)
    return (eta_star - e) / (alpha_p * beta_inv), (eta_star + e) * beta_inv * alpha_p


def convergence_band(
    final_state: ControllerState,
    cfg: AdaLRSConfig,
    eta_star: float,
    e: float,
    base_lr: float,
    gamma_estimate: float | None = None,
) -> ConvergenceVerdict:
    """Classify the final effective LR against the rectified-factor band.

    Both factors are taken at the final adjustment count.
    """
    lo, hi = band_for(cfg, final_state.adjustment_count, eta_star, e)
    lr = base_lr * final_state.scale
    return ConvergenceVerdict(
        final_scale_lr=lr,
        eta_star=eta_star,
        band_lo=lo,
        band_hi=hi,
        inside=lo < lr < hi,
        gamma_estimate=gamma_estimate,
    )
