"""Interior-point solver for PSD-matrix programs with log-trace objectives.

Program shape (maximize):

    sum_t coef_t * log2( sum_v tr(A_tv X_v) + b_t )  +  sum_v tr(L_v X_v)
    s.t.  sum_v tr(C_jv X_v)  <=/>=/==  r_j          (affine trace constraints)
          X_v >= 0                                    (every variable PSD)

Eigen-cuts lam^H X lam >= tau tr(X) are affine trace rows (lam lam^H - tau I).

The solver follows the central path of the log-barrier formulation with exact
Newton steps. The PSD-barrier Hessian is inverted analytically per block
(inv of dX -> Y dX Y is dX -> X dX X), and the low-rank terms contributed by
the objective logs and the inequality barriers enter through a Woodbury
correction, so one Newton step costs O(m^2 d) for m constraint/log terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hermitian as hm
from .report import INFEASIBLE, MAX_ITERATIONS, OPTIMAL, SolverError, SolverReport

LN2 = np.log(2.0)

LE, GE, EQ = "<=", ">=", "=="


@dataclass
class LogTraceTerm:
    """coef * log2( sum_v tr(matrices[v] X_v) + offset ), offset > 0."""

    coef: float
    matrices: dict[int, np.ndarray]
    offset: float


@dataclass
class TraceConstraint:
    """sum_v tr(matrices[v] X_v)  (sense)  rhs."""

    matrices: dict[int, np.ndarray]
    rhs: float
    sense: str = LE


@dataclass
class PsdProgram:
    dims: tuple[int, ...]
    log_terms: list[LogTraceTerm] = field(default_factory=list)
    linear: dict[int, np.ndarray] = field(default_factory=dict)
    constraints: list[TraceConstraint] = field(default_factory=list)


# ---------------------------------------------------------------------------


class _Blocks:
    """svec bookkeeping for a tuple of Hermitian variable dimensions."""

    def __init__(self, dims):
        self.dims = tuple(int(n) for n in dims)
        self.offsets = np.concatenate([[0], np.cumsum([n * n for n in self.dims])])
        self.total = int(self.offsets[-1])

    def pack(self, mats) -> np.ndarray:
        x = np.empty(self.total)
        for v, n in enumerate(self.dims):
            x[self.offsets[v]:self.offsets[v + 1]] = hm.svec(np.asarray(mats[v]))
        return x

    def unpack(self, x) -> list[np.ndarray]:
        return [hm.smat(x[self.offsets[v]:self.offsets[v + 1]], n)
                for v, n in enumerate(self.dims)]

    def vec_of(self, matrices: dict[int, np.ndarray]) -> np.ndarray:
        x = np.zeros(self.total)
        for v, A in matrices.items():
            n = self.dims[v]
            if A.shape != (n, n):
                raise SolverError(f"matrix for variable {v} has shape {A.shape}, expected {(n, n)}")
            x[self.offsets[v]:self.offsets[v + 1]] = hm.svec(hm.hermitize(np.asarray(A, dtype=complex)))
        return x


class _Compiled:
    """Normalized numeric form of a program: vectors over svec coordinates."""

    def __init__(self, prog: PsdProgram):
        self.blocks = _Blocks(prog.dims)
        b = self.blocks
        self.lin = np.zeros(b.total)
        for v, L in prog.linear.items():
            self.lin += b.vec_of({v: L})
        self.log_coef = np.array([t.coef for t in prog.log_terms], dtype=float)
        self.log_off = np.array([t.offset for t in prog.log_terms], dtype=float)
        if np.any(self.log_off <= 0):
            raise SolverError("log terms need a strictly positive constant offset")
        if np.any(self.log_coef <= 0):
            raise SolverError("log term coefficients must be positive (concavity)")
        self.log_vecs = np.array([b.vec_of(t.matrices) for t in prog.log_terms]) \
            if prog.log_terms else np.zeros((0, b.total))
        G, h, A, beq = [], [], [], []
        for c in prog.constraints:
            row = b.vec_of(c.matrices)
            scale = np.max(np.abs(row))
            if scale <= 0:
                scale = 1.0
            if c.sense == LE:
                G.append(row / scale)
                h.append(c.rhs / scale)
            elif c.sense == GE:
                G.append(-row / scale)
                h.append(-c.rhs / scale)
            elif c.sense == EQ:
                A.append(row / scale)
                beq.append(c.rhs / scale)
            else:
                raise SolverError(f"unknown constraint sense {c.sense!r}")
        self.G = np.array(G) if G else np.zeros((0, b.total))
        self.h = np.array(h)
        self.A = np.array(A) if A else np.zeros((0, b.total))
        self.beq = np.array(beq)
        # barrier parameter: one per inequality, n per PSD block
        self.nu = self.G.shape[0] + sum(b.dims)

    # -- objective -----------------------------------------------------------

    def log_args(self, x):
        if not len(self.log_coef):
            return np.zeros(0)
        return self.log_vecs @ x + self.log_off

    def objective(self, x) -> float:
        w = self.log_args(x)
        return float(self.lin @ x + np.sum(self.log_coef * np.log2(w)))

    def feasibility_residual(self, x, mats) -> float:
        res = 0.0
        if self.G.shape[0]:
            res = max(res, float(np.max(self.G @ x - self.h)))
        if self.A.shape[0]:
            res = max(res, float(np.max(np.abs(self.A @ x - self.beq))))
        for X in mats:
            w = np.linalg.eigvalsh(hm.hermitize(X))
            res = max(res, float(max(0.0, -w[0])))
        return res


def _strictly_feasible(comp: _Compiled, x, margin=1e-12) -> bool:
    if comp.G.shape[0] and np.min(comp.h - comp.G @ x) <= margin:
        return False
    if comp.A.shape[0] and np.max(np.abs(comp.A @ x - comp.beq)) > 1e-8:
        return False
    if len(comp.log_coef) and np.min(comp.log_args(x)) <= 0:
        return False
    for X in comp.blocks.unpack(x):
        w = np.linalg.eigvalsh(hm.hermitize(X))
        if w[0] <= margin * max(1.0, float(w[-1])):
            return False
    return True


# -- Newton machinery ---------------------------------------------------------


class _State:
    """Current iterate with cached block factorizations (inverses built lazily)."""

    comp: _Compiled
    x: np.ndarray
    mats: list[np.ndarray]
    chols: list[np.ndarray]

    @property
    def invs(self) -> list[np.ndarray]:
        if self._invs is None:
            out = []
            for c in self.chols:
                ci = np.linalg.inv(c)
                out.append(ci.conj().T @ ci)
            self._invs = out
        return self._invs

    def barrier_value(self, t: float) -> float:
        if t in self._phi:
            return self._phi[t]
        comp = self.comp
        val = -t * comp.lin @ self.x
        w = comp.log_args(self.x)
        if len(w):
            val -= t * np.sum(comp.log_coef / LN2 * np.log(w))
        if comp.G.shape[0]:
            val -= np.sum(np.log(comp.h - comp.G @ self.x))
        for c in self.chols:
            val -= 2.0 * np.sum(np.log(np.real(np.diag(c))))
        self._phi[t] = float(val)
        return self._phi[t]


def _try_state(comp: _Compiled, x: np.ndarray) -> _State | None:
    """Build a state if x is strictly inside every barrier domain."""
    if comp.G.shape[0] and np.min(comp.h - comp.G @ x) <= 0:
        return None
    w = comp.log_args(x)
    if len(w) and np.min(w) <= 0:
        return None
    mats = comp.blocks.unpack(x)
    chols = []
    for X in mats:
        try:
            chols.append(np.linalg.cholesky(hm.hermitize(X)))
        except np.linalg.LinAlgError:
            return None
    st = _State.__new__(_State)
    st.comp, st.x, st.mats, st.chols = comp, x, mats, chols
    st._invs = None
    st._phi = {}
    return st


def _binv_apply(st: _State, V: np.ndarray) -> np.ndarray:
    """Inverse PSD-barrier Hessian applied to columns: per block, X smat(.) X."""
    comp = st.comp
    V2 = V[:, None] if V.ndim == 1 else V
    out = np.empty_like(V2)
    for i, n in enumerate(comp.blocks.dims):
        lo, hi = comp.blocks.offsets[i], comp.blocks.offsets[i + 1]
        Ms = hm.smat_batch(V2[lo:hi], n)
        out[lo:hi] = hm.svec_batch(st.mats[i][None] @ Ms @ st.mats[i][None])
    return out[:, 0] if V.ndim == 1 else out


def _newton_step(st: _State, t: float):
    """Return (dx, lambda^2) for the barrier objective at parameter t."""
    comp = st.comp
    x = st.x
    grad = -t * comp.lin.copy()
    cols = []
    if len(comp.log_coef):
        w = comp.log_vecs @ x + comp.log_off
        cw = comp.log_coef / LN2 / w
        grad -= t * (comp.log_vecs.T @ cw)
        cols.append(comp.log_vecs * np.sqrt(t * cw / w)[:, None])
    if comp.G.shape[0]:
        s = comp.h - comp.G @ x
        grad += comp.G.T @ (1.0 / s)
        cols.append(comp.G / s[:, None])
    for i, n in enumerate(comp.blocks.dims):
        lo, hi = comp.blocks.offsets[i], comp.blocks.offsets[i + 1]
        grad[lo:hi] -= hm.svec(st.invs[i])

    U = np.vstack(cols).T if cols else np.zeros((comp.blocks.total, 0))
    m = U.shape[1]
    BiU = _binv_apply(st, U) if m else U

    def hinv(V):
        """(B + U U^T)^{-1} V for a matrix of column vectors V."""
        BiV = _binv_apply(st, V)
        if m == 0:
            return BiV
        M = np.eye(m) + U.T @ BiU
        try:
            sol = np.linalg.solve(M, BiU.T @ V)
        except np.linalg.LinAlgError:
            sol = np.linalg.solve(M + 1e-12 * np.eye(m), BiU.T @ V)
        return BiV - BiU @ sol

    if comp.A.shape[0]:
        p = comp.A.shape[0]
        rhs = np.column_stack([grad, comp.A.T])
        Hi = hinv(rhs)
        Hig, HiAT = Hi[:, 0], Hi[:, 1:]
        S = comp.A @ HiAT
        nu = np.linalg.solve(S, -comp.A @ Hig)
        dx = -(Hig + HiAT @ nu)
    else:
        dx = -hinv(grad[:, None])[:, 0]
    lam2 = float(max(0.0, -grad @ dx))
    return dx, lam2


def _center(comp, st, t, ntol, budget):
    """Newton iterations until the decrement is small; returns (state, steps, ok).

    ntol bounds lambda^2/2; lambda is affine-invariant, so a loose constant
    suffices along the path and only the final stage needs a tight value.
    """
    steps = 0
    phi0 = st.barrier_value(t)
    while steps < budget:
        dx, lam2 = _newton_step(st, t)
        if lam2 / 2.0 <= ntol:
            return st, steps, True
        steps += 1
        alpha = 1.0
        accepted = None
        for _ in range(40):
            cand = _try_state(comp, st.x + alpha * dx)
            if cand is not None:
                phi_c = cand.barrier_value(t)
                if phi_c <= phi0 - 0.25 * alpha * lam2:
                    accepted, phi0 = cand, phi_c
                    break
            alpha *= 0.5
        if accepted is None:
            return st, steps, True   # roundoff plateau: as centered as float64 allows
        st = accepted
    return st, steps, False


def _solve_barrier(comp: _Compiled, x0: np.ndarray, settings, t0=10.0,
                   early_exit=None):
    """Path-following loop. Returns (state, newton_steps, gap, hit_cap).

    ``early_exit(state, gap)`` may stop the path once the caller has its
    answer (e.g. phase-1 certified feasibility either way via the gap bound).
    """
    mu = 30.0
    gap_target = 0.5 * settings.kkt_tol
    st = _try_state(comp, x0)
    if st is None:
        raise SolverError("internal: barrier started at an infeasible point")
    t = t0
    total = 0
    while True:
        st, steps, _ = _center(comp, st, t, 5e-3, settings.max_iter - total)
        total += steps
        if early_exit is not None and early_exit(st, comp.nu / t):
            return st, total, comp.nu / t, False
        if comp.nu / t <= gap_target:
            # final polish, no tighter than float64 can certify at this scale
            ntol = max(1e-9, 16 * np.finfo(float).eps * (1.0 + abs(st.barrier_value(t))))
            st, steps, _ = _center(comp, st, t, ntol,
                                   min(30, max(0, settings.max_iter - total)))
            total += steps
            return st, total, comp.nu / t, total >= settings.max_iter
        if total >= settings.max_iter:
            return st, total, comp.nu / t, True
        t *= mu


# -- public entry point --------------------------------------------------------


def _default_settings():
    from ..scenario import SolverSettings
    return SolverSettings()


def solve_psd_program(prog: PsdProgram, initial=None, settings=None,
                      identity_scale=1e-2, t0=10.0, feasibility_only=False):
    """Solve a PSD program; returns (list of variable matrices, SolverReport).

    ``initial`` may supply matrices used as a warm start; when they are not
    strictly feasible a phase-1 solve finds an interior point (or certifies
    infeasibility, reported as status="infeasible"). With ``feasibility_only``
    the solve stops after phase-1 and only the status is meaningful.
    """
    settings = settings or _default_settings()
    comp = _Compiled(prog)
    b = comp.blocks

    x0 = None
    if initial is not None:
        x = b.pack([hm.hermitize(np.asarray(M, dtype=complex)) for M in initial])
        if _strictly_feasible(comp, x, margin=1e-10):
            x0 = x
    if x0 is None:
        x0, report = _phase1(comp, initial, settings, identity_scale)
        if x0 is None:
            return [identity_scale * np.eye(n) for n in b.dims], report
    if feasibility_only:
        mats = b.unpack(x0)
        return mats, SolverReport(OPTIMAL, comp.objective(x0), np.inf,
                                  comp.feasibility_residual(x0, mats), 0)

    st, iters, gap, hit_cap = _solve_barrier(comp, x0, settings, t0=t0)
    mats = [hm.hermitize(X) for X in st.mats]
    feas = comp.feasibility_residual(st.x, mats)
    status = MAX_ITERATIONS if hit_cap else OPTIMAL
    if status == OPTIMAL and feas > settings.feas_tol:
        status = MAX_ITERATIONS
    return mats, SolverReport(
        status=status,
        objective_value=comp.objective(st.x),
        kkt_residual=gap,
        feasibility_residual=feas,
        iterations=iters,
    )


def _phase1(comp: _Compiled, initial, settings, identity_scale):
    """Find a strictly feasible point or certify infeasibility.

    Maximizes a uniform slack r added to every inequality; equalities and the
    PSD cones are kept exactly. Returns (x0 or None, report-on-failure).
    """
    b = comp.blocks
    # start from the caller's matrices if parseable, else scaled identities,
    # then restore equality feasibility by a least-squares shift
    if initial is not None:
        xs = b.pack([hm.hermitize(np.asarray(M, dtype=complex)) for M in initial])
    else:
        xs = b.pack([identity_scale * np.eye(n) for n in b.dims])
    for attempt in range(6):
        if comp.A.shape[0]:
            resid = comp.A @ xs - comp.beq
            if np.max(np.abs(resid)) > 1e-12:
                xs = xs - np.linalg.pinv(comp.A) @ resid
        ok = True
        for i, n in enumerate(b.dims):
            lo, hi = b.offsets[i], b.offsets[i + 1]
            X = hm.smat(xs[lo:hi], n)
            w = np.linalg.eigvalsh(hm.hermitize(X))
            scale = max(identity_scale, float(np.abs(w).max()))
            floor = scale * (1e-3 * 0.1 ** attempt + 1e-9)
            if w[0] < floor:
                X = hm.hermitize(X) + (floor - w[0]) * np.eye(n)
                xs[lo:hi] = hm.svec(X)
                ok = False
        if ok:
            break
    if comp.A.shape[0] and np.max(np.abs(comp.A @ xs - comp.beq)) > 1e-8:
        raise SolverError("could not build a PSD point on the equality subspace")

    if comp.G.shape[0] == 0 and not len(comp.log_coef):
        return xs, None
    viol = float(np.max(comp.G @ xs - comp.h)) if comp.G.shape[0] else 0.0
    margin = 1e-8
    if viol <= -margin and (not len(comp.log_coef) or np.min(comp.log_args(xs)) > 0):
        return xs, None

    s0 = viol + 10 * margin
    cap = s0 + 10.0 * (1.0 + (float(np.max(np.abs(comp.h))) if comp.G.shape[0] else 0.0))
    # extended program: original variables + a 1x1 slack block r, maximize r
    ext_dims = tuple(b.dims) + (1,)
    ext_comp = _Compiled.__new__(_Compiled)
    ext_comp.blocks = _Blocks(ext_dims)
    d_ext = ext_comp.blocks.total
    ext_comp.lin = np.zeros(d_ext)
    ext_comp.lin[-1] = 1.0
    ext_comp.log_coef = np.zeros(0)
    ext_comp.log_off = np.zeros(0)
    ext_comp.log_vecs = np.zeros((0, d_ext))
    G = np.zeros((comp.G.shape[0] + 1, d_ext))
    G[:-1, :b.total] = comp.G
    G[:-1, -1] = 1.0
    G[-1, -1] = 1.0   # cap r so phase-1 stays bounded
    h = np.concatenate([comp.h + s0, [cap]])
    ext_comp.G, ext_comp.h = G, h
    A = np.zeros((comp.A.shape[0], d_ext))
    A[:, :b.total] = comp.A
    ext_comp.A, ext_comp.beq = A, comp.beq
    ext_comp.nu = G.shape[0] + sum(ext_dims)

    x_ext = np.concatenate([xs, [5 * margin]])
    target = s0 + margin
    exit_target = s0 + 1e-4      # comfortable interior: stop as soon as reached

    def decided(s, gap):
        # feasible once the slack clears the target; infeasible once even the
        # optimistic bound r + gap cannot reach it (2x for centering slack)
        return s.x[-1] >= exit_target or s.x[-1] + 2.0 * gap < target

    st, iters, gap, _ = _solve_barrier(ext_comp, x_ext, settings, early_exit=decided)
    r = float(st.x[-1])
    if r >= target:
        return st.x[:b.total].copy(), None
    report = SolverReport(
        status=INFEASIBLE,
        objective_value=-np.inf,
        kkt_residual=gap,
        feasibility_residual=max(0.0, s0 - r),
        iterations=iters,
    )
    return None, report
