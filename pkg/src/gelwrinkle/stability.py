"""
Local stability of converged states and characterisation of the critical mode.

A converged state is stable while the Dirichlet-reduced stiffness K is
positive definite.  The inertia of K comes for free from its symmetric
factorisation; the smallest eigenpair is computed by shift-invert Lanczos
only when a mode is needed.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .mesh import surface_normals
from .solver import SingularK, SolverFailure, SymmetricFactorization, growth_metric

log = logging.getLogger(__name__)


class DegenerateModeError(ValueError):
    pass


@dataclass
class StabilityProbe:
    lambda_min: float
    n_negative: int
    mode: np.ndarray = None
    gap: float = float("nan")

    @property
    def stable(self):
        return self.n_negative == 0


def _normalise(v):
    v = v / np.linalg.norm(v)
    nz = np.flatnonzero(np.abs(v) > 1e-14 * np.abs(v).max())
    if len(nz) and v[nz[0]] < 0:
        v = -v
    return v


def probe_stability(K, want_mode=True, rtol=1e-8):
    """Inertia and (optionally) the smallest eigenpair of a symmetric matrix.

    A shift ``sigma`` strictly below the spectrum is found by inertia
    counting on ``K - sigma I``; shift-invert Lanczos about it then returns
    the leftmost eigenvalue.  If the eigen-iteration stagnates, an
    inertia-only probe (``mode=None``) is returned.
    """
    K = sp.csc_matrix(K)
    n = K.shape[0]
    try:
        n_neg = SymmetricFactorization(K).inertia[0]
    except SingularK:
        n_neg = None
    if not want_mode:
        return StabilityProbe(float("nan"), n_neg if n_neg is not None else 1)

    eye = sp.identity(n, format="csc")
    scale = abs(K).max()
    sigma = -1e-9 * scale
    for _ in range(80):
        try:
            below = SymmetricFactorization(K - sigma * eye).inertia[0]
        except SingularK:
            below = 1
        if below == 0:
            break
        sigma *= 4.0
    else:
        return StabilityProbe(float("nan"), n_neg if n_neg is not None else 1)

    k = min(2, n - 1) if n > 2 else 1
    try:
        if n <= 2:
            vals, vecs = np.linalg.eigh(K.toarray())
        else:
            vals, vecs = sla.eigsh(K, k=k, sigma=sigma, which="LM", v0=np.ones(n), tol=rtol * 1e-2)
    except (sla.ArpackNoConvergence, RuntimeError) as exc:
        log.warning("eigen-iteration stagnated (%s); inertia-only probe", exc)
        return StabilityProbe(float("nan"), n_neg if n_neg is not None else 1)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    lam = float(vals[0])
    gap = float(vals[1] - vals[0]) if len(vals) > 1 else float("nan")
    if n_neg is None:
        n_neg = int(lam < 0)
    return StabilityProbe(lam, n_neg, _normalise(vecs[:, 0]), gap)


def full_mode(dofmap, mode_free):
    v = np.zeros(dofmap.n_dofs)
    v[dofmap.free] = mode_free
    return v


def surface_trace(mode, mesh):
    """Normal displacement of the mode along the loaded surface path, and the path coordinate."""
    nodes = mesh.surface_nodes
    u = np.stack([mode[2 * nodes], mode[2 * nodes + 1]], axis=1)
    trace = np.sum(u * surface_normals(mesh), axis=1)
    if mesh.periodic:
        coord = 2.0 * np.pi * np.arange(len(nodes)) / len(nodes)
    else:
        coord = mesh.nodes[nodes, 0]
    return trace, coord


def _detrend_open(trace, x):
    """Remove constant + linear parts fitted jointly with the dominant harmonic."""
    L = x[-1] - x[0]
    u = (x - x[0]) / L
    base = np.stack([np.ones_like(u), u], axis=1)
    best, best_res = None, np.inf
    for n in range(1, len(x)):
        A = np.column_stack([base, np.cos(n * np.pi * u), np.sin(n * np.pi * u)])
        coef, *_ = np.linalg.lstsq(A, trace, rcond=None)
        res = np.sum((A @ coef - trace) ** 2)
        if res < best_res - 1e-12 * np.sum(trace**2):
            best, best_res = coef, res
    return trace - base @ best[:2]


def _crossings(trace, band, cyclic):
    idx = np.flatnonzero(np.abs(trace) > band)
    if len(idx) == 0:
        return 0
    signs = np.sign(trace[idx])
    if cyclic:
        signs = np.append(signs, signs[0])
    return int(np.sum(signs[1:] != signs[:-1]))


def count_wrinkles(mode, mesh, scenario=None):
    """Number of wrinkles N_c of a mode along the film surface.

    Zero crossings Z of the surface-normal trace are counted with a
    hysteresis band of 1e-3 max|trace|.  Open (flat) surfaces are detrended
    and a free end that sits inside the band counts as half a crossing;
    N_c = Z / 2 may be a half-integer.  Closed surfaces use the mean-free
    trace cyclically and N_c = round(Z / 2).
    """
    scenario = scenario or mesh.kind
    if scenario not in ("flat", "tube", "ellipse"):
        raise ValueError(f"unknown scenario {scenario!r}")
    trace, coord = surface_trace(mode, mesh)
    return count_zero_crossings(trace, coord, periodic=mesh.periodic)


def count_zero_crossings(trace, coord=None, periodic=False):
    trace = np.asarray(trace, dtype=float)
    if np.max(np.abs(trace)) < 1e-12:
        raise DegenerateModeError("mode does not deform the film surface")
    if periodic:
        t = trace - trace.mean()
        band = 1e-3 * np.max(np.abs(t))
        return float(round(_crossings(t, band, cyclic=True) / 2))
    coord = np.arange(len(trace), dtype=float) if coord is None else np.asarray(coord, dtype=float)
    t = _detrend_open(trace, coord)
    band = 1e-3 * np.max(np.abs(t))
    z = _crossings(t, band, cyclic=False)
    z += 0.5 * (abs(t[0]) <= band) + 0.5 * (abs(t[-1]) <= band)
    return z / 2.0


@dataclass
class StabilityReport:
    found: bool
    g_c: float = float("nan")
    t_c: float = float("nan")
    N_c: float = float("nan")
    t_bracket: tuple = (float("nan"), float("nan"))
    g_bracket: tuple = (float("nan"), float("nan"))
    tol_g: float = float("nan")
    lambda_min: float = float("nan")
    n_negative: int = 0
    degeneracy_gap: float = float("nan")
    bisections: int = 0
    mode: np.ndarray = field(default=None, repr=False)
    # (TransientState, pre-step History) of the last stable state, for checkpointing
    stable_state: tuple = field(default=None, repr=False)

    @property
    def bracket_width(self):
        return abs(self.g_bracket[1] - self.g_bracket[0])

    def summary(self):
        keys = ("found", "g_c", "t_c", "N_c", "t_bracket", "g_bracket", "tol_g",
                "lambda_min", "n_negative", "degeneracy_gap", "bisections")
        out = {}
        for k in keys:
            v = getattr(self, k)
            if isinstance(v, tuple):
                v = [float(x) for x in v]
            elif isinstance(v, (np.floating, np.integer, np.bool_)):
                v = v.item()
            out[k] = v
        out["bracket_width"] = self.bracket_width if self.found else None
        return out


def locate_critical(run, lo_state, hi_state, tol_g=0.1, max_bisections=60, lo_prev=None):
    """Bisect in time between a stable and an unstable converged state.

    Each leg restarts from the last stable state and takes a single step to
    the bracket midpoint.  Stops once the growth bracket is narrower than
    ``tol_g`` (micrometres) and reports g_c at the last stable state with the
    mode of the earliest unstable one.
    """
    mesh = run.model.mesh
    leg = run.clone()
    g_lo = growth_metric(lo_state.d, mesh)
    g_hi = growth_metric(hi_state.d, mesh)
    K_hi = run.last_K
    hi_is_trajectory = bool(run.records) and run.records[-1].t == hi_state.t
    n_bis = 0
    retried = False
    while abs(g_hi - g_lo) >= tol_g and n_bis < max_bisections:
        leg.state = lo_state.copy()
        tau = 0.5 * (hi_state.t - lo_state.t)
        try:
            rec = leg.step(tau)
        except SolverFailure:
            if retried:
                raise
            retried = True
            continue
        n_bis += 1
        if rec.n_negative == 0:
            lo_state, g_lo, lo_prev = leg.state.copy(), rec.g, leg.prev_history
        else:
            hi_state, g_hi, K_hi = leg.state.copy(), rec.g, leg.last_K
            hi_is_trajectory = False
    probe = probe_stability(K_hi)
    if hi_is_trajectory:
        run.records[-1].lambda_min = probe.lambda_min
    mode = full_mode(run.model.dofmap, probe.mode) if probe.mode is not None else None
    n_c = count_wrinkles(mode, mesh) if mode is not None else float("nan")
    return StabilityReport(
        found=True,
        g_c=g_lo,
        t_c=lo_state.t,
        N_c=n_c,
        t_bracket=(lo_state.t, hi_state.t),
        g_bracket=(g_lo, g_hi),
        tol_g=tol_g,
        lambda_min=probe.lambda_min,
        n_negative=probe.n_negative,
        degeneracy_gap=probe.gap,
        bisections=n_bis,
        mode=mode,
        stable_state=(lo_state, lo_prev),
    )


def sweep_for_instability(run, t_end=None, tol_g=0.1, callback=None):
    """Advance a run, probing every accepted step, and locate the first crossing.

    Returns a :class:`StabilityReport`; ``found`` is False when no crossing
    occurs before ``t_end`` (nothing is extrapolated).
    """
    t_end = run.schedule.t_end if t_end is None else t_end
    if run.records and run.records[-1].n_negative > 0:
        raise ValueError("run already starts in an unstable state")
    prev = run.state.copy()
    prev_hist = run.prev_history
    while run.state.t < t_end - 1e-12:
        rec = run.step(min(run.next_tau, t_end - run.state.t))
        run.next_tau = run.schedule.next_tau(run.state.t, rec.tau)
        if callback is not None:
            callback(run, rec)
        if rec.n_negative > 0:
            return locate_critical(run, prev, run.state.copy(), tol_g=tol_g, lo_prev=prev_hist)
        prev = run.state.copy()
        prev_hist = run.prev_history
    return StabilityReport(found=False)
