"""Gaussian-density monotonicity, Type I/II rescaling, blow-up
classification, and soliton residuals.

The monotonicity functional is the Gaussian-weighted area

    int_M (4 pi (t0 - t))^{-m/2} exp(-|F - q|^2 / (4 (t0 - t))) dmu,

non-increasing along every mean curvature flow and constant exactly on
centered self-shrinkers; its decay rate is the defect integral
int |H + F^perp / (2 (t0 - t))|^2 rho dmu. Rescaling centered at (q, T)
uses F_tilde = (2 (T - t))^{-1/2} (F - q) with s = -log(T - t)/2, under which
Type I blow-up limits satisfy the shrinker equation H + F^perp = 0.

Type II rescaling follows Hamilton's normalization: over the discrete record
set, (p_k, t_k) maximizes |A(p, t)|^2 (T - 1/k - t), L_k = |A(p_k, t_k)|,
and the flow is rescaled so the marked point has unit curvature at time 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import UsageError
from .flow import FlowState, FlowTrace, Termination, estimate_singular_time
from .geometry import GeometryBundle, Immersion, build_bundle, normal_part
from .grid import integrate_values


@dataclass(frozen=True)
class DensityParams:
    """Center and reference time of the backward-heat-kernel density."""

    q: np.ndarray
    t0: float

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))


class SolitonKind(enum.Enum):
    SHRINKER = "shrinker"      # H + F^perp = 0
    EXPANDER = "expander"      # H - F^perp = 0
    TRANSLATOR = "translator"  # H - V^perp = 0


@dataclass(frozen=True)
class SolitonReport:
    kind: SolitonKind
    linf: float
    l2: float
    worst_node: tuple[int, ...]
    V: np.ndarray | None = None


class BlowupClass(enum.Enum):
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class BlowupReport:
    classification: BlowupClass
    c_hat: float          # fitted sup of max|A|^2 (T_hat - t) over the window
    lower_rate: float     # fitted inf of the same quantity
    spread: float         # relative spread over the window
    growth: float         # last/first ratio over the window
    detail: str = ""


@dataclass(frozen=True)
class HamiltonSequence:
    k: int
    record_index: int
    node: tuple[int, ...]
    t_k: float
    L_k: float
    alpha_k: float
    omega_k: float
    rescaled: list[tuple[float, Immersion]]  # (tau, immersion) pairs


def _bundle_of(state) -> tuple[GeometryBundle, float]:
    """Accept a FlowState or a bare Immersion (then t = 0)."""
    if isinstance(state, Immersion):
        return build_bundle(state), 0.0
    return state.bundle, state.t


def gaussian_density_field(bundle: GeometryBundle, t: float, params: DensityParams) -> np.ndarray:
    tau = params.t0 - t
    if tau <= 0:
        raise UsageError(f"reference time t0 = {params.t0} must exceed t = {t}")
    m = bundle.imm.m
    diff = bundle.imm.values - params.q
    r2 = np.einsum("...a,...a->...", diff, diff)
    return (4.0 * math.pi * tau) ** (-0.5 * m) * np.exp(-r2 / (4.0 * tau))


def huisken_functional(state, params: DensityParams) -> float:
    """Gaussian-weighted area of the immersion at its current time."""
    bundle, t = _bundle_of(state)
    rho = gaussian_density_field(bundle, t, params)
    return integrate_values(rho, bundle.sqrt_det_g, bundle.chart)


def monotonicity_defect(state, params: DensityParams) -> float:
    """The decay-rate integral int |H + F^perp/(2(t0-t))|^2 rho dmu >= 0."""
    bundle, t = _bundle_of(state)
    tau = params.t0 - t
    if tau <= 0:
        raise UsageError("t0 must exceed the evaluation time")
    rho = gaussian_density_field(bundle, t, params)
    Fq = bundle.imm.values - params.q
    Fperp = normal_part(bundle, Fq)
    defect = bundle.H + Fperp / (2.0 * tau)
    mag2 = np.einsum("...a,...a->...", defect, defect)
    return integrate_values(mag2 * rho, bundle.sqrt_det_g, bundle.chart)


@dataclass(frozen=True)
class MonotonicityCheck:
    is_nonincreasing: bool
    max_positive_jump: float
    values: np.ndarray          # functional value at each snapshot
    times: np.ndarray
    defects: np.ndarray         # defect integral at each snapshot
    tolerance: float


def monotonicity_check(trace: FlowTrace, params: DensityParams,
                       rel_tolerance: float = 1e-3) -> MonotonicityCheck:
    """Evaluate the Gaussian-weighted area on the stored snapshots and flag
    any increase above rel_tolerance times the local value."""
    snaps = [(r.t, r.snapshot) for r in trace.records
             if r.snapshot is not None and r.t < params.t0]
    if len(snaps) < 3:
        raise UsageError("monotonicity check needs at least 3 snapshots before t0")
    values, defects, times = [], [], []
    for t, imm in snaps:
        b = build_bundle(imm)
        st = FlowState(t=t, imm=imm, bundle=b)
        values.append(huisken_functional(st, params))
        defects.append(monotonicity_defect(st, params))
        times.append(t)
    values = np.array(values)
    jumps = np.diff(values)
    max_jump = float(jumps.max(initial=0.0))
    tol = rel_tolerance * float(values.max())
    return MonotonicityCheck(
        is_nonincreasing=bool(max_jump <= tol),
        max_positive_jump=max_jump,
        values=values,
        times=np.array(times),
        defects=np.array(defects),
        tolerance=tol,
    )


def type1_rescale(state, q: np.ndarray, T: float) -> tuple[Immersion, float]:
    """Parabolic rescaling F_tilde = (2(T-t))^{-1/2} (F - q); returns the
    rescaled immersion and the rescaled time s = -log(T - t)/2."""
    bundle, t = _bundle_of(state)
    if t >= T:
        raise UsageError("rescaling requires t < T")
    q = np.asarray(q, dtype=np.float64)
    lam = (2.0 * (T - t)) ** -0.5
    imm = bundle.imm
    affine = None
    if imm.affine is not None:
        affine = (lam * imm.affine[0], lam * (imm.affine[1] - q))
    rescaled = replace(imm, values=lam * (imm.values - q), affine=affine)
    s = -0.5 * math.log(T - t)
    return rescaled, s


def classify_blowup(trace: FlowTrace, t_hat: float | None = None,
                    spread_threshold: float = 0.2,
                    growth_threshold: float = 5.0) -> BlowupReport:
    """Classify the blow-up rate over the last decade of records.

    The diagnostic quantity is y(t) = max|A|^2 (T_hat - t). Records with
    T_hat - t within a factor 10 of the final gap form the window: a bounded
    fitted sup (relative spread below spread_threshold) is Type I with
    c_hat = sup y; growth of y beyond growth_threshold is Type II; anything
    else is inconclusive. Both raw fits are always reported.
    """
    if trace.termination not in (Termination.CURVATURE_CAP, Termination.DT_UNDERFLOW):
        return BlowupReport(BlowupClass.INCONCLUSIVE, math.nan, math.nan,
                            math.nan, math.nan,
                            f"trace ended with {trace.termination}, not a singularity signal")
    refit = t_hat is None
    if refit:
        est = estimate_singular_time(trace)
        if not est.reliable:
            return BlowupReport(BlowupClass.INCONCLUSIVE, math.nan, math.nan,
                                math.nan, math.nan,
                                f"unreliable singular-time estimate: {est.detail}")
        t_hat = est.t_hat
    t = trace.times
    a2 = trace.max_A2_series
    gap = t_hat - t
    valid = gap > 0
    if valid.sum() < 5:
        return BlowupReport(BlowupClass.INCONCLUSIVE, math.nan, math.nan,
                            math.nan, math.nan, "too few records before T_hat")
    gmin = gap[valid].min()
    window = valid & (gap <= 10.0 * gmin)
    if window.sum() < 5:
        window = valid & (gap <= 100.0 * gmin)
    if refit and window.sum() >= 5 and a2[window][-1] > a2[window][0]:
        # refit the singular time over the classification window itself, so
        # the diagnostic y = max|A|^2 (T_hat - t) is not distorted at records
        # whose gap is comparable to the estimation error of a fit anchored
        # elsewhere
        tw, yw = t[window], 1.0 / a2[window]
        Aw = np.stack([np.ones_like(tw), tw], axis=1)
        (c0, c1), *_ = np.linalg.lstsq(Aw, yw, rcond=None)
        if c1 < 0 and -c0 / c1 > tw[-1]:
            t_hat = float(-c0 / c1)
            gap = t_hat - t
            valid = gap > 0
            gmin = gap[valid].min()
            window = valid & (gap <= 10.0 * gmin)
    y = a2[window] * gap[window]
    c_hat = float(y.max())
    lower = float(y.min())
    spread = float((y.max() - y.min()) / y.max())
    growth = float(y[-1] / y[0])
    if growth > growth_threshold:
        cls = BlowupClass.TYPE_II
    elif spread < spread_threshold:
        cls = BlowupClass.TYPE_I
    else:
        cls = BlowupClass.INCONCLUSIVE
    return BlowupReport(cls, c_hat, lower, spread, growth,
                        detail=f"window of {int(window.sum())} records")


def hamilton_rescale(trace: FlowTrace, t_hat: float, k: int) -> HamiltonSequence:
    """Type II rescaling sequence member k over the stored records.

    (record, node) maximize max|A|^2 (T_hat - 1/k - t) over records with
    snapshots and t <= T_hat - 1/k; ties break lexicographically. The
    rescaled flows F_k(tau) = L_k (F(L_k^{-2} tau + t_k) - F(p_k, t_k)) are
    returned at every stored snapshot time inside [alpha_k, omega_k].
    """
    if k < 1:
        raise UsageError("k must be a positive integer")
    t_cut = t_hat - 1.0 / k
    candidates = [(i, r) for i, r in enumerate(trace.records)
                  if r.snapshot is not None and r.t <= t_cut]
    if not candidates:
        raise UsageError(f"no stored records with t <= T_hat - 1/k = {t_cut:.6g}")
    best_i, best_r, best_val = None, None, None
    for i, r in candidates:
        val = r.max_A2 * (t_cut - r.t)
        # strict improvement required: ties break to the lexicographically
        # first record (and np.argmax already picks the first node)
        if best_val is None or val > best_val * (1.0 + 1e-15) + 1e-300:
            best_i, best_r, best_val = i, r, val
    node = np.unravel_index(best_r.argmax_node, trace.chart_shape)
    L = math.sqrt(best_r.max_A2)
    t_k = best_r.t
    alpha = -L * L * t_k
    omega = L * L * (t_hat - t_k - 1.0 / k)
    base = best_r.snapshot.values[node]
    rescaled = []
    for r in trace.records:
        if r.snapshot is None:
            continue
        tau = L * L * (r.t - t_k)
        if tau < alpha - 1e-12 or tau > omega + 1e-12:
            continue
        imm = r.snapshot
        affine = None
        if imm.affine is not None:
            affine = (L * imm.affine[0], L * (imm.affine[1] - base))
        rescaled.append((tau, replace(imm, values=L * (imm.values - base), affine=affine)))
    return HamiltonSequence(k=k, record_index=best_i, node=tuple(int(x) for x in node),
                            t_k=t_k, L_k=L, alpha_k=alpha, omega_k=omega,
                            rescaled=rescaled)


def soliton_residual(imm: Immersion, kind: SolitonKind,
                     V: np.ndarray | None = None,
                     bundle: GeometryBundle | None = None) -> SolitonReport:
    """Pointwise residual of the self-similarity equation for the given kind:
    shrinker H + F^perp, expander H - F^perp, translator H - V^perp."""
    if bundle is None:
        bundle = build_bundle(imm)
    if kind is SolitonKind.TRANSLATOR:
        if V is None:
            raise UsageError("translator residual requires the velocity vector V")
        V = np.asarray(V, dtype=np.float64)
        if V.shape != (imm.n,):
            raise UsageError(f"V must have {imm.n} components")
        res = bundle.H - normal_part(bundle, V)
    else:
        Fperp = normal_part(bundle, imm.values)
        res = bundle.H + Fperp if kind is SolitonKind.SHRINKER else bundle.H - Fperp
    mag = np.sqrt(np.einsum("...a,...a->...", res, res))
    mask = imm.norm_mask
    mag_eff = mag if mask is None else np.where(mask, mag, 0.0)
    worst = np.unravel_index(int(np.argmax(mag_eff)), imm.chart.shape)
    w = bundle.sqrt_det_g if mask is None else np.where(mask, bundle.sqrt_det_g, 0.0)
    vol = integrate_values(np.ones(imm.chart.shape), w, imm.chart)
    l2 = math.sqrt(integrate_values(mag_eff**2, w, imm.chart) / vol)
    return SolitonReport(kind=kind, linf=float(mag_eff.max()), l2=l2,
                         worst_node=tuple(int(x) for x in worst),
                         V=None if V is None else V.copy())
