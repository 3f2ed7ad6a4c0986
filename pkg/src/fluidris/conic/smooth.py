"""Interior-point solver for small smooth convex programs over real vectors.

Program shape (maximize):

    c^T x  +  sum_i coef_i * log2(a_i^T x + b_i)
    s.t.   g_j(x) <= 0     (affine rows, convex quadratics, powers of norms)
           A x == b
           lower <= x <= upper

The constraint set matches what the SCA-convexified placement subproblems
produce. Solved by a log-barrier Newton path following; dimensions here are a
handful, so the Hessian is assembled densely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .report import INFEASIBLE, MAX_ITERATIONS, OPTIMAL, SolverError, SolverReport

LN2 = np.log(2.0)


class LinearIneq:
    """a^T x - b <= 0."""

    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        s = np.max(np.abs(self.a))
        if s > 0:
            self.a, self.b = self.a / s, self.b / s

    def value(self, x):
        return float(self.a @ x - self.b)

    def grad(self, x):
        return self.a

    def hess(self, x):
        return None


class QuadIneq:
    """0.5 x^T Q x + a^T x + b <= 0 with Q positive semidefinite."""

    def __init__(self, Q, a, b):
        self.Q = np.asarray(Q, dtype=float)
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)

    def value(self, x):
        return float(0.5 * x @ self.Q @ x + self.a @ x + self.b)

    def grad(self, x):
        return self.Q @ x + self.a

    def hess(self, x):
        return self.Q


class PowerNormIneq:
    """(weight * (||x[idx] - center||^2 + off2)^(kappa/2) + a^T x + b) / scale <= 0.

    ``off2`` is a fixed squared offset for coordinates that are not decision
    variables; ``scale`` normalizes the row without changing the feasible set.
    """

    def __init__(self, idx, center, kappa, a, b, weight=1.0, off2=0.0, scale=1.0):
        self.idx = np.asarray(idx, dtype=int)
        self.center = np.asarray(center, dtype=float)
        self.kappa = float(kappa)
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        self.weight = float(weight)
        self.off2 = float(off2)
        self.scale = float(scale)

    def _r(self, x):
        return max(np.sqrt(np.sum((x[self.idx] - self.center) ** 2) + self.off2), 1e-12)

    def value(self, x):
        return (self.weight * self._r(x) ** self.kappa + float(self.a @ x + self.b)) / self.scale

    def grad(self, x):
        d = x[self.idx] - self.center
        r = self._r(x)
        g = self.a.copy()
        g[self.idx] += self.weight * self.kappa * r ** (self.kappa - 2.0) * d
        return g / self.scale

    def hess(self, x):
        d = x[self.idx] - self.center
        r = self._r(x)
        n = len(x)
        H = np.zeros((n, n))
        block = self.kappa * r ** (self.kappa - 2.0) * np.eye(len(self.idx))
        block += self.kappa * (self.kappa - 2.0) * r ** (self.kappa - 4.0) * np.outer(d, d)
        H[np.ix_(self.idx, self.idx)] = self.weight * block
        return H / self.scale


@dataclass
class LogTerm:
    """coef * log2(a^T x + b), coef > 0, with a^T x + b > 0 on the domain."""

    coef: float
    a: np.ndarray
    b: float


@dataclass
class SmoothProgram:
    n: int
    linear_obj: np.ndarray
    log_terms: list[LogTerm] = field(default_factory=list)
    constraints: list = field(default_factory=list)
    eq_A: np.ndarray | None = None
    eq_b: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None


class _Shifted:
    """Phase-1 wrapper: inner(x) + x[-1] - s0 <= 0 over the extended vector."""

    def __init__(self, inner, s0):
        self.inner = inner
        self.s0 = s0

    def value(self, x):
        return self.inner.value(x[:-1]) + x[-1] - self.s0

    def grad(self, x):
        g = np.concatenate([self.inner.grad(x[:-1]), [1.0]])
        return g

    def hess(self, x):
        H_in = self.inner.hess(x[:-1])
        if H_in is None:
            return None
        n = len(x)
        H = np.zeros((n, n))
        H[:-1, :-1] = H_in
        return H


class _Compiled:
    def __init__(self, n, lin, logs, cons, A, beq):
        self.n = n
        self.lin = lin
        self.logs = logs
        # split affine rows from genuinely nonlinear constraints
        lin_rows = [c for c in cons if isinstance(c, LinearIneq)]
        self.nl_cons = [c for c in cons if not isinstance(c, LinearIneq)]
        self.G = np.array([c.a for c in lin_rows]) if lin_rows else np.zeros((0, n))
        self.h = np.array([c.b for c in lin_rows])
        self.log_A = np.array([t.a for t in logs]) if logs else np.zeros((0, n))
        self.log_b = np.array([t.b for t in logs])
        self.log_c = np.array([t.coef for t in logs])
        self.A = A
        self.beq = beq
        self.nu = len(cons)

    @property
    def cons(self):
        rows = [LinearIneq(self.G[i], self.h[i]) for i in range(self.G.shape[0])]
        return rows + list(self.nl_cons)

    def objective(self, x):
        val = float(self.lin @ x)
        if len(self.log_c):
            val += float(np.sum(self.log_c * np.log2(self.log_A @ x + self.log_b)))
        return val

    def feasible(self, x, strict=True, margin=0.0):
        if self.G.shape[0]:
            worst = float(np.max(self.G @ x - self.h))
            if (worst >= -margin) if strict else (worst > margin):
                return False
        for c in self.nl_cons:
            v = c.value(x)
            if (v >= -margin) if strict else (v > margin):
                return False
        if len(self.log_c) and np.min(self.log_A @ x + self.log_b) <= 0:
            return False
        return True

    def feas_residual(self, x):
        res = 0.0
        if self.G.shape[0]:
            res = max(res, float(np.max(self.G @ x - self.h)))
        for c in self.nl_cons:
            res = max(res, c.value(x))
        if self.A is not None:
            res = max(res, float(np.max(np.abs(self.A @ x - self.beq))))
        return res

    def barrier_value(self, x, t):
        val = -t * self.lin @ x
        if len(self.log_c):
            val -= t / LN2 * np.sum(self.log_c * np.log(self.log_A @ x + self.log_b))
        if self.G.shape[0]:
            val -= np.sum(np.log(self.h - self.G @ x))
        for c in self.nl_cons:
            val -= np.log(-c.value(x))
        return float(val)

    def newton_step(self, x, t):
        n = self.n
        grad = -t * self.lin.copy()
        H = np.zeros((n, n))
        if len(self.log_c):
            w = self.log_A @ x + self.log_b
            cw = t * self.log_c / LN2
            grad -= self.log_A.T @ (cw / w)
            H += (self.log_A * (cw / w ** 2)[:, None]).T @ self.log_A
        if self.G.shape[0]:
            s = self.h - self.G @ x
            grad += self.G.T @ (1.0 / s)
            H += (self.G / s[:, None] ** 2).T @ self.G
        for c in self.nl_cons:
            v = c.value(x)
            g = c.grad(x)
            grad += g / (-v)
            H += np.outer(g, g) / v ** 2
            Hc = c.hess(x)
            if Hc is not None:
                H += Hc / (-v)
        H[np.diag_indices(n)] += 1e-12 * (1.0 + np.trace(H) / n)
        if self.A is not None:
            p = self.A.shape[0]
            K = np.block([[H, self.A.T], [self.A, np.zeros((p, p))]])
            rhs = np.concatenate([-grad, np.zeros(p)])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                return None, 0.0
            dx = sol[:n]
        else:
            try:
                dx = np.linalg.solve(H, -grad)
            except np.linalg.LinAlgError:
                return None, 0.0
        lam2 = float(max(0.0, -grad @ dx))
        return dx, lam2


def _compile(prog: SmoothProgram) -> _Compiled:
    n = prog.n
    lin = np.asarray(prog.linear_obj, dtype=float)
    if lin.shape != (n,):
        raise SolverError(f"linear_obj has shape {lin.shape}, expected ({n},)")
    cons = list(prog.constraints)
    if prog.lower is not None:
        lo = np.asarray(prog.lower, dtype=float)
        for i in range(n):
            if np.isfinite(lo[i]):
                e = np.zeros(n)
                e[i] = -1.0
                cons.append(LinearIneq(e, -lo[i]))
    if prog.upper is not None:
        hi = np.asarray(prog.upper, dtype=float)
        for i in range(n):
            if np.isfinite(hi[i]):
                e = np.zeros(n)
                e[i] = 1.0
                cons.append(LinearIneq(e, hi[i]))
    A = None if prog.eq_A is None else np.atleast_2d(np.asarray(prog.eq_A, dtype=float))
    beq = None if prog.eq_b is None else np.atleast_1d(np.asarray(prog.eq_b, dtype=float))
    logs = [LogTerm(t.coef, np.asarray(t.a, dtype=float), float(t.b)) for t in prog.log_terms]
    for t in logs:
        if t.coef <= 0:
            raise SolverError("log term coefficients must be positive")
    return _Compiled(n, lin, logs, cons, A, beq)


def _center(comp, x, t, ntol, budget):
    steps = 0
    phi0 = comp.barrier_value(x, t)
    while steps < budget:
        dx, lam2 = comp.newton_step(x, t)
        if dx is None or lam2 / 2.0 <= ntol:
            return x, steps, True
        steps += 1
        alpha, accepted = 1.0, None
        for _ in range(40):
            xc = x + alpha * dx
            if comp.feasible(xc):
                phi_c = comp.barrier_value(xc, t)
                if phi_c <= phi0 - 0.25 * alpha * lam2:
                    accepted, phi0 = xc, phi_c
                    break
            alpha *= 0.5
        if accepted is None:
            return x, steps, True
        x = accepted
    return x, steps, False


def _path(comp, x0, settings, early_exit=None, t0=10.0):
    gap_target = 0.5 * settings.kkt_tol
    if comp.nu == 0:
        # unconstrained concave maximization: single tight centering
        x, steps, _ = _center(comp, x0, 1.0, 1e-12, settings.max_iter)
        return x, steps, 0.0, False
    t, total, x = t0, 0, x0
    while True:
        x, steps, _ = _center(comp, x, t, 5e-3, settings.max_iter - total)
        total += steps
        if early_exit is not None and early_exit(x, comp.nu / t):
            return x, total, comp.nu / t, False
        if comp.nu / t <= gap_target:
            ntol = max(1e-9, 16 * np.finfo(float).eps * (1.0 + abs(comp.barrier_value(x, t))))
            x, steps, _ = _center(comp, x, t, ntol, min(30, max(0, settings.max_iter - total)))
            total += steps
            return x, total, comp.nu / t, total >= settings.max_iter
        if total >= settings.max_iter:
            return x, total, comp.nu / t, True
        t *= 30.0


def _default_settings():
    from ..scenario import SolverSettings
    return SolverSettings()


def solve_smooth_program(prog: SmoothProgram, x0=None, settings=None):
    """Solve a smooth program; returns (x, SolverReport)."""
    settings = settings or _default_settings()
    comp = _compile(prog)

    start = None
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if comp.A is not None and np.max(np.abs(comp.A @ x0 - comp.beq)) > 1e-9:
            x0 = x0 - np.linalg.pinv(comp.A) @ (comp.A @ x0 - comp.beq)
        if comp.feasible(x0, margin=1e-10) and (
                comp.A is None or np.max(np.abs(comp.A @ x0 - comp.beq)) <= 1e-9):
            start = x0
    if start is None:
        start, fail = _phase1(comp, x0, settings)
        if start is None:
            return (x0 if x0 is not None else np.zeros(comp.n)), fail

    x, iters, gap, hit_cap = _path(comp, start, settings)
    feas = comp.feas_residual(x)
    status = MAX_ITERATIONS if hit_cap or feas > settings.feas_tol else OPTIMAL
    return x, SolverReport(
        status=status,
        objective_value=comp.objective(x),
        kkt_residual=gap,
        feasibility_residual=max(0.0, feas),
        iterations=iters,
    )


def _phase1(comp: _Compiled, hint, settings):
    """Uniform-slack feasibility solve; returns (x0 or None, failure report)."""
    x = np.zeros(comp.n) if hint is None else np.asarray(hint, dtype=float).copy()
    if comp.A is not None:
        x = x - np.linalg.pinv(comp.A) @ (comp.A @ x - comp.beq)
    # log-term domains count as constraints here so the returned point is
    # strictly inside them too
    cons = list(comp.cons)
    for t in comp.logs:
        s = max(np.max(np.abs(t.a)), abs(t.b), 1e-300)
        cons.append(LinearIneq(-t.a / s, (t.b - 1e-2 * abs(t.b)) / s))
    viol = max((c.value(x) for c in cons), default=0.0)
    margin = 1e-8
    s0 = viol + 10 * margin
    cap = s0 + 10.0 * (1.0 + abs(s0))
    ext_cons = []
    for c in cons:
        if isinstance(c, LinearIneq):
            ext_cons.append(LinearIneq(np.concatenate([c.a, [1.0]]), c.b + s0))
        else:
            ext_cons.append(_Shifted(c, s0))
    er = np.zeros(comp.n + 1)
    er[-1] = -1.0
    ext_cons.append(LinearIneq(er, 0.0))        # r >= 0
    ext_cons.append(LinearIneq(-er, cap))       # r <= cap
    lin = np.zeros(comp.n + 1)
    lin[-1] = 1.0
    A = None if comp.A is None else np.hstack([comp.A, np.zeros((comp.A.shape[0], 1))])
    ext = _Compiled(comp.n + 1, lin, [], ext_cons, A, comp.beq)
    x_ext = np.concatenate([x, [5 * margin]])
    if not ext.feasible(x_ext):
        raise SolverError("phase-1 could not construct an interior starting point")
    exit_target = s0 + 1e-4
    target = s0 + margin
    xe, iters, gap, _ = _path(
        ext, x_ext, settings,
        early_exit=lambda z, g: z[-1] >= exit_target or z[-1] + 2.0 * g < target)
    r = float(xe[-1])
    if r >= s0 + margin:
        return xe[:-1].copy(), None
    return None, SolverReport(
        status=INFEASIBLE, objective_value=-np.inf, kkt_residual=gap,
        feasibility_residual=max(0.0, s0 - r), iterations=iters)
