"""
Linear algebra, Newton-Raphson and implicit-Euler time stepping.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .assembly import History, StepReject, external_load
from .mesh import surface_normals

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class SingularK(RuntimeError):
    pass


class SolverFailure(RuntimeError):
    """Time step underflow after the maximum number of cuts."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


class SymmetricFactorization:
    """Sparse LDL^T-like factorisation of a symmetric matrix with inertia.

    SuperLU is run in symmetric mode with diagonal pivoting only, so the row
    and column permutations coincide and ``diag(U)`` carries the pivots of a
    symmetric ``L D L^T`` factorisation; their signs give the inertia.
    """

    zero_tol = 1e-14

    def __init__(self, K):
        K = sp.csc_matrix(K)
        self.K = K
        self.n = K.shape[0]
        try:
            self.lu = sla.splu(
                K,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            raise SingularK(str(exc)) from exc
        self.symmetric_pivots = bool(np.array_equal(self.lu.perm_r, self.lu.perm_c))
        piv = self.lu.U.diagonal()
        scale = np.max(np.abs(piv)) if len(piv) else 1.0
        self.pivots = piv
        self._n_zero = int(np.sum(np.abs(piv) <= self.zero_tol * scale))
        if self._n_zero:
            raise SingularK(f"{self._n_zero} zero pivot(s) in symmetric factorisation")

    @property
    def inertia(self):
        """(n_negative, n_zero, n_positive) of the factorised matrix."""
        if not self.symmetric_pivots:
            if self.n > 4000:
                raise RuntimeError("non-symmetric pivoting; inertia unavailable")
            ev = np.linalg.eigvalsh(self.K.toarray())
            return int(np.sum(ev < 0)), 0, int(np.sum(ev > 0))
        neg = int(np.sum(self.pivots < 0))
        return neg, self._n_zero, self.n - neg - self._n_zero

    def solve(self, rhs, rtol=1e-10, refine=3):
        x = self.lu.solve(rhs)
        bnorm = np.linalg.norm(rhs)
        for _ in range(refine):
            r = rhs - self.K @ x
            if np.linalg.norm(r) <= rtol * bnorm:
                break
            x = x + self.lu.solve(r)
        return x


def linear_solve(K, rhs):
    """Solve K x = rhs; returns (x, n_negative pivots)."""
    fac = SymmetricFactorization(K)
    return fac.solve(rhs), fac.inertia[0]


@dataclass
class NewtonConfig:
    tol_rel: float = 1e-8
    tol_abs: float = 1e-10
    max_iter: int = 25
    line_search: bool = False


@dataclass
class NewtonResult:
    d: np.ndarray
    iterations: int
    residuals: list
    K: object
    Pi: float


def newton_solve(model, d0, history, tau, load, cfg=None):
    """Minimise the incremental potential from the initial guess ``d0``.

    Iterates d <- d - K^{-1} R until |R| < tol_abs + tol_rel |load|.  The
    returned ``K`` is the stiffness at the converged state.  Raises
    :class:`StepReject` on non-convergence or inadmissible states.
    """
    cfg = cfg or NewtonConfig()
    free = model.dofmap.free
    d = d0.copy()
    tol = cfg.tol_abs + cfg.tol_rel * np.linalg.norm(load)
    residuals = []
    for it in range(1, cfg.max_iter + 1):
        want = ("pi", "R", "K") if cfg.line_search else ("R", "K")
        Pi, R, K = model.assemble(d, history, tau, load, want=want)
        rnorm = float(np.linalg.norm(R))
        residuals.append(rnorm)
        if not np.isfinite(rnorm):
            raise StepReject("non-finite residual", tau)
        if rnorm < tol:
            return NewtonResult(d, it, residuals, K, Pi)
        try:
            dx = SymmetricFactorization(K).solve(R)
        except SingularK as exc:
            raise StepReject(f"singular stiffness: {exc}", tau) from exc
        step = 1.0
        if cfg.line_search:
            for _ in range(8):
                trial = d.copy()
                trial[free] -= step * dx
                try:
                    Pt, _, _ = model.assemble(trial, history, tau, load, want=("pi",))
                except StepReject:
                    Pt = np.inf
                if Pt <= Pi:
                    break
                step *= 0.5
        d[free] -= step * dx
    raise StepReject(f"Newton did not converge in {cfg.max_iter} iterations (|R|={residuals[-1]:.3e})", tau)


@dataclass
class Schedule:
    """Chemical load history and time-step policy.

    The surface chemical potential rises linearly from ``mu0`` to ``mu_bar``
    over ``ramp`` seconds and is then held.  The step is ``tau0`` during the
    ramp and grows geometrically afterwards up to ``tau_max``.
    """

    mu0: float
    mu_bar: float = 0.0
    ramp: float = 1.0
    t_end: float = 10.0
    tau0: float = 0.02
    tau_growth: float = 1.3
    tau_max: float = 5.0
    max_cuts: int = 10

    def mu(self, t):
        if self.ramp <= 0.0:
            return self.mu_bar
        return self.mu0 + (self.mu_bar - self.mu0) * min(max(t / self.ramp, 0.0), 1.0)

    def next_tau(self, t, tau):
        if t < self.ramp - 1e-12:
            tau = min(tau * self.tau_growth, self.tau0)
            return min(tau, self.ramp - t)
        return min(tau * self.tau_growth, self.tau_max)


@dataclass
class StepRecord:
    step: int
    t: float
    tau: float
    g: float
    fluid_volume: float
    residual: float
    iterations: int
    n_negative: int
    balance_error: float
    lambda_min: float = float("nan")


@dataclass
class TransientState:
    t: float
    tau: float
    step: int
    d: np.ndarray
    history: History

    def copy(self):
        return TransientState(self.t, self.tau, self.step, self.d.copy(), self.history.copy())


def growth_metric(d, mesh, scenario=None):
    """Swelling-induced surface growth in micrometres.

    flat: mean u_y over the top surface; tube: mean inward radial
    displacement of the passage surface; ellipse: inward normal displacement
    averaged over the two minor-axis surface nodes.
    """
    scenario = scenario or mesh.kind
    if scenario not in ("flat", "tube", "ellipse"):
        raise ValueError(f"unknown scenario {scenario!r}")
    nodes = mesh.surface_nodes
    u = np.stack([d[2 * nodes], d[2 * nodes + 1]], axis=1)
    un = np.sum(u * surface_normals(mesh), axis=1)
    if scenario == "ellipse":
        n = len(nodes)
        un = un[[0, n // 2]]
    return 1e3 * float(np.mean(un))


def loaded_outflux(model, d):
    """Sum of outward edge fluxes over the chemically loaded boundary."""
    mesh = model.mesh
    et = mesh.edges
    loaded = mesh.tagged("chem_loaded")
    mask = np.isin(et.elem_edges, loaded)
    h = d[model.dofmap.h_dof(et.elem_edges[mask])]
    return float(np.sum(h * et.elem_signs[mask]))


class TransientRun:
    """Implicit-Euler integration of one scenario with per-step stability probes."""

    def __init__(self, model, schedule, newton=None, config_hash=""):
        self.model = model
        self.schedule = schedule
        self.newton = newton or NewtonConfig()
        self.config_hash = config_hash
        self.state = TransientState(0.0, schedule.tau0, 0, model.dofmap.initial_vector(),
                                    model.initial_history())
        self.records = []
        self.last_K = None
        self.last_factorization = None
        self.prev_history = None
        self.next_tau = schedule.tau0

    def clone(self):
        other = TransientRun(self.model, self.schedule, self.newton, self.config_hash)
        other.state = self.state.copy()
        other.records = list(self.records)
        other.prev_history = self.prev_history
        other.next_tau = self.next_tau
        return other

    def load(self, t, tau):
        return external_load(self.model.mesh, self.model.dofmap, self.schedule.mu(t), tau)

    def try_step(self, tau):
        """Attempt one step of size tau from the current state; commit on success."""
        st = self.state
        t_new = st.t + tau
        load = self.load(t_new, tau)
        res = newton_solve(self.model, st.d, st.history, tau, load, self.newton)
        try:
            fac = SymmetricFactorization(res.K)
            n_neg = fac.inertia[0]
        except SingularK:
            fac, n_neg = None, 1
        hist_new = self.model.update_history(res.d, st.history, tau)
        dvol = float(np.sum((hist_new.s_n - st.history.s_n) * self.model.dV))
        expected = -tau * loaded_outflux(self.model, res.d)
        scale = max(abs(dvol), abs(expected), 1e-300)
        rec = StepRecord(
            step=st.step + 1,
            t=t_new,
            tau=tau,
            g=growth_metric(res.d, self.model.mesh),
            fluid_volume=self.model.fluid_volume(hist_new),
            residual=res.residuals[-1],
            iterations=res.iterations,
            n_negative=n_neg,
            balance_error=abs(dvol - expected) / scale,
        )
        self.state = TransientState(t_new, tau, st.step + 1, res.d, hist_new)
        self.prev_history = st.history
        self.last_K = res.K
        self.last_factorization = fac
        self.records.append(rec)
        return rec

    def step(self, tau=None):
        """Advance one accepted step, halving tau on rejection."""
        tau = self.state.tau if tau is None else tau
        for _ in range(self.schedule.max_cuts + 1):
            try:
                return self.try_step(tau)
            except StepReject as exc:
                log.info("t=%.6g: %s; cutting step", self.state.t, exc.reason)
                tau *= 0.5
        raise SolverFailure(
            f"time step underflow at t={self.state.t:.6g} after {self.schedule.max_cuts} cuts",
            snapshot=self.state.copy(),
        )

    def run(self, t_end=None, stop_on_instability=False, callback=None):
        t_end = self.schedule.t_end if t_end is None else t_end
        while self.state.t < t_end - 1e-12:
            rec = self.step(min(self.next_tau, t_end - self.state.t))
            self.next_tau = self.schedule.next_tau(self.state.t, rec.tau)
            if callback is not None:
                callback(self, rec)
            if stop_on_instability and rec.n_negative > 0:
                break
        return self.records

    # checkpoints ---------------------------------------------------------

    def stiffness(self):
        """Stiffness of the last accepted step, rebuilt from the state and the previous history."""
        if self.prev_history is None:
            raise ValueError("no accepted step to rebuild the stiffness from")
        st = self.state
        return self.model.assemble(st.d, self.prev_history, st.tau, self.load(st.t, st.tau), want=("K",))[2]

    def save_checkpoint(self, path):
        """Write (t, tau, d, history) plus the pre-step history needed to rebuild K."""
        st = self.state
        prev = self.prev_history or st.history
        np.savez(
            path,
            has_prev=self.prev_history is not None,
            s_prev=prev.s_n,
            F_prev=prev.F_n,
            version=CHECKPOINT_VERSION,
            config_hash=self.config_hash,
            t=st.t,
            tau=st.tau,
            next_tau=self.next_tau,
            step=st.step,
            d=st.d,
            s_n=st.history.s_n,
            F_n=st.history.F_n,
        )
        return Path(path)

    def restore_checkpoint(self, path):
        with np.load(path, allow_pickle=False) as z:
            if int(z["version"]) != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {int(z['version'])}")
            if self.config_hash and str(z["config_hash"]) != self.config_hash:
                raise ValueError("checkpoint was written for a different configuration")
            self.state = TransientState(float(z["t"]), float(z["tau"]), int(z["step"]),
                                        z["d"].copy(), History(z["s_n"].copy(), z["F_n"].copy()))
            self.next_tau = float(z["next_tau"])
            self.prev_history = (History(z["s_prev"].copy(), z["F_prev"].copy())
                                 if bool(z["has_prev"]) else None)
        return self.state
