import numpy as np
from flask import current_app

from models.lp import LpSolution, OPTIMAL, INFEASIBLE, UNBOUNDED
from services.exceptions import DimensionError, DomainError, IterationLimitError


class _BoundedSimplex:
    """
    Dense revised simplex on  M z = 0,  lo <= z <= hi.

    z stacks the decision variables, one activity variable per row and one
    artificial per row. Nonbasic variables sit exactly on a bound (free ones
    at zero). The basis inverse is kept explicitly and updated by rank-one
    pivots, refactorized every `refactor_every` pivots. Entering and leaving
    choices follow Bland's smallest-index rule.
    """

    def __init__(self, matrix, lo, hi, z, basis, n_x, pivot_tol, opt_tol, max_iter, refactor_every):
        self.matrix = matrix
        self.lo = lo
        self.hi = hi
        self.z = z
        self.basis = list(basis)
        self.is_basic = np.zeros(matrix.shape[1], dtype=bool)
        self.is_basic[self.basis] = True
        self.n_x = n_x
        self.pivot_tol = pivot_tol
        self.opt_tol = opt_tol
        self.max_iter = max_iter
        self.refactor_every = refactor_every
        self.iterations = 0
        self.refactor()

    def refactor(self):
        m = len(self.basis)
        if m == 0:
            self.binv = np.zeros((0, 0))
            return
        self.binv = np.linalg.inv(self.matrix[:, self.basis])
        nonbasic = np.where(self.is_basic, 0.0, self.z)
        self.z[self.basis] = -self.binv @ (self.matrix @ nonbasic)

    def duals(self, cost):
        return cost[self.basis] @ self.binv

    def reduced_costs(self, cost):
        d = cost - self.duals(cost) @ self.matrix
        d[self.is_basic] = 0.0
        return d

    def optimize(self, cost, phase):
        """Pivot until no improving direction is left; returns OPTIMAL or UNBOUNDED."""
        since_refactor = 0
        while True:
            d = self.reduced_costs(cost)
            can_rise = (d < -self.opt_tol) & (self.z < self.hi)
            can_fall = (d > self.opt_tol) & (self.z > self.lo)
            candidates = np.flatnonzero(~self.is_basic & (can_rise | can_fall))
            if candidates.size == 0:
                return OPTIMAL
            if self.iterations >= self.max_iter:
                raise IterationLimitError(
                    f'Simplex stopped after {self.iterations} iterations in phase {phase}',
                    best_x=self.z[:self.n_x].copy(), phase=phase)

            entering = int(candidates[0])
            direction = 1.0 if d[entering] < 0 else -1.0
            alpha = self.binv @ self.matrix[:, entering]
            delta = -direction * alpha

            # Ratio test over the basic variables
            basis = np.asarray(self.basis, dtype=int)
            ratios = np.full(len(basis), np.inf)
            falling = delta < -self.pivot_tol
            rising = delta > self.pivot_tol
            ratios[falling] = (self.z[basis[falling]] - self.lo[basis[falling]]) / -delta[falling]
            ratios[rising] = (self.hi[basis[rising]] - self.z[basis[rising]]) / delta[rising]
            ratios = np.maximum(ratios, 0.0)

            flip = self.hi[entering] - self.lo[entering]
            step = ratios.min() if ratios.size else np.inf
            if not np.isfinite(min(step, flip)):
                return UNBOUNDED

            self.iterations += 1
            if flip <= step:
                self.z[basis] += flip * delta
                self.z[entering] = self.hi[entering] if direction > 0 else self.lo[entering]
                continue

            ties = np.flatnonzero(ratios <= step + 1e-12)
            row = int(ties[np.argmin(basis[ties])])
            leaving = basis[row]

            self.z[basis] += step * delta
            self.z[entering] += direction * step
            self.z[leaving] = self.lo[leaving] if delta[row] < 0 else self.hi[leaving]

            pivot_row = self.binv[row] / alpha[row]
            self.binv -= np.outer(alpha, pivot_row)
            self.binv[row] = pivot_row
            self.basis[row] = entering
            self.is_basic[leaving] = False
            self.is_basic[entering] = True

            since_refactor += 1
            if since_refactor >= self.refactor_every:
                self.refactor()
                since_refactor = 0


class LpService:
    """Linear programs over the reactive dispatch of the DERs."""

    @staticmethod
    def _options(pivot_tol, feas_tol, max_iter, refactor_every):
        cfg = current_app.config
        return (
            pivot_tol if pivot_tol is not None else cfg.get('LP_PIVOT_TOL', 1e-9),
            feas_tol if feas_tol is not None else cfg.get('LP_FEAS_TOL', 1e-7),
            max_iter if max_iter is not None else cfg.get('LP_MAX_ITER', 50_000),
            refactor_every if refactor_every is not None else cfg.get('LP_REFACTOR_EVERY', 50),
        )

    @classmethod
    def solve_lp(cls, problem, pivot_tol=None, feas_tol=None, max_iter=None,
                 refactor_every=None, tie_break=True):
        """
        Solve an LpProblem with a two-phase bounded simplex.

        Infeasible and unbounded problems come back as statuses; only the
        iteration limit raises. With `tie_break`, alternate optima are
        resolved to the lexicographically smallest x.
        """
        pivot_tol, feas_tol, max_iter, refactor_every = cls._options(
            pivot_tol, feas_tol, max_iter, refactor_every)
        cls._check(problem)

        n, m = problem.n_vars, problem.n_rows
        a = np.asarray(problem.a_ub, dtype=float).reshape(m, n)
        b = np.asarray(problem.b_ub, dtype=float)
        lo = np.asarray(problem.lo, dtype=float)
        hi = np.asarray(problem.hi, dtype=float)
        sign = 1.0 if problem.sense == 'min' else -1.0
        cost = sign * np.asarray(problem.c, dtype=float)

        if n == 0:
            return cls._solve_empty(problem, b, feas_tol)

        # Start every variable at its cost-favoured finite bound
        x0 = np.where(cost > 0, lo, hi)
        x0 = np.where(np.isfinite(x0), x0, np.where(np.isfinite(lo), lo, hi))
        x0 = np.where(np.isfinite(x0), x0, 0.0)
        activity = a @ x0
        violated = activity > b
        art_sign = np.where(violated, -1.0, 1.0)

        matrix = np.hstack([a, -np.eye(m), np.diag(art_sign)])
        z = np.concatenate([x0, np.minimum(activity, b), np.where(violated, activity - b, 0.0)])
        z_lo = np.concatenate([lo, np.full(m, -np.inf), np.zeros(m)])
        z_hi = np.concatenate([hi, b, np.full(m, np.inf)])
        basis = [n + m + i if violated[i] else n + i for i in range(m)]

        opt_tol = pivot_tol * max(1.0, float(np.abs(cost).max()))
        simplex = _BoundedSimplex(matrix, z_lo, z_hi, z, basis, n, pivot_tol, opt_tol,
                                  max_iter, refactor_every)

        # Phase 1: drive the artificials to zero
        if violated.any():
            phase1_cost = np.concatenate([np.zeros(n + m), np.ones(m)])
            simplex.optimize(phase1_cost, phase=1)
            artificials = simplex.z[n + m:]
            infeasibility = float(artificials.sum())
            if infeasibility > feas_tol * max(1.0, float(np.abs(b).max(initial=0.0))):
                worst = int(np.argmax(artificials))
                return LpSolution(status=INFEASIBLE, x=simplex.z[:n].copy(),
                                  iterations=simplex.iterations,
                                  infeasibility=infeasibility, worst_row=worst)
        simplex.hi[n + m:] = 0.0
        simplex.z[n + m:] = 0.0

        # Phase 2
        full_cost = np.concatenate([cost, np.zeros(2 * m)])
        status = simplex.optimize(full_cost, phase=2)
        if status == UNBOUNDED:
            return LpSolution(status=UNBOUNDED, x=simplex.z[:n].copy(),
                              iterations=simplex.iterations)

        duals = simplex.duals(full_cost) if m else np.zeros(0)
        reduced = simplex.reduced_costs(full_cost)
        if tie_break:
            cls._lexicographic(simplex, reduced, n, opt_tol)

        x = simplex.z[:n].copy()
        return cls._finish(problem, a, b, x, duals, cost - a.T @ duals,
                           simplex.iterations, feas_tol)

    @staticmethod
    def _lexicographic(simplex, reduced, n, opt_tol):
        """Move along the optimal face to the lexicographically smallest x."""
        free = ~simplex.is_basic & (simplex.lo < simplex.hi) & (np.abs(reduced) <= opt_tol)
        if not free.any():
            return

        d = reduced
        for i in range(n):
            # Freeze what would change the previous objectives
            pinned = ~simplex.is_basic & (np.abs(d) > opt_tol)
            simplex.lo[pinned] = simplex.z[pinned]
            simplex.hi[pinned] = simplex.z[pinned]
            if simplex.lo[i] == simplex.hi[i]:
                continue
            unit = np.zeros_like(simplex.z)
            unit[i] = 1.0
            if simplex.optimize(unit, phase=3) == UNBOUNDED:
                break
            d = simplex.reduced_costs(unit)

    @staticmethod
    def _solve_empty(problem, b, feas_tol):
        if np.all(b >= -feas_tol):
            return LpSolution(status=OPTIMAL, objective=float(problem.c0), x=np.zeros(0),
                              duals=np.zeros(len(b)), reduced_costs=np.zeros(0))
        worst = int(np.argmin(b))
        return LpSolution(status=INFEASIBLE, x=np.zeros(0),
                          infeasibility=float(-b[worst]), worst_row=worst)

    @staticmethod
    def _finish(problem, a, b, x, duals, reduced, iterations, feas_tol):
        slack = b - a @ x
        lo, hi = np.asarray(problem.lo, dtype=float), np.asarray(problem.hi, dtype=float)
        return LpSolution(
            status=OPTIMAL,
            objective=problem.objective(x),
            x=x,
            duals=duals,
            reduced_costs=reduced,
            active_rows=tuple(int(i) for i in np.flatnonzero(slack <= feas_tol)),
            at_lower=tuple(int(i) for i in np.flatnonzero(np.abs(x - lo) <= feas_tol)),
            at_upper=tuple(int(i) for i in np.flatnonzero(np.abs(hi - x) <= feas_tol)),
            iterations=iterations,
        )

    @staticmethod
    def _check(problem):
        n, m = problem.n_vars, problem.n_rows
        if problem.sense not in ('min', 'max'):
            raise DomainError(f'Unknown sense {problem.sense!r}')
        if m and n and np.shape(problem.a_ub) != (m, n):
            raise DimensionError(f'Constraint matrix must be {m}x{n}, got {np.shape(problem.a_ub)}')
        if np.shape(problem.lo) != (n,) or np.shape(problem.hi) != (n,):
            raise DimensionError(f'Variable bounds must have length {n}')
        if np.any(np.asarray(problem.lo) > np.asarray(problem.hi)):
            raise DomainError('A variable has its lower bound above its upper bound')
        finite = [problem.c, problem.b_ub] + ([problem.a_ub] if m and n else [])
        if not all(np.all(np.isfinite(arr)) for arr in finite):
            raise DomainError('LP coefficients must be finite')

    @staticmethod
    def certify(problem, solution, tol=1e-7):
        """
        Recheck an optimal solution from the problem data alone.

        Returns a list of human-readable defects; an empty list certifies
        primal feasibility, dual sign conditions and complementary slackness.
        """
        defects = []
        x = np.asarray(solution.x, dtype=float)
        a = np.asarray(problem.a_ub, dtype=float).reshape(problem.n_rows, problem.n_vars)
        b = np.asarray(problem.b_ub, dtype=float)
        lo, hi = np.asarray(problem.lo, dtype=float), np.asarray(problem.hi, dtype=float)
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))

        slack = b - a @ x
        if np.any(slack < -tol * scale):
            i = int(np.argmin(slack))
            defects.append(f'{problem.row_label(i)} violated by {-slack[i]:.3g}')
        if np.any(x < lo - tol) or np.any(x > hi + tol):
            defects.append('variable outside its bounds')
        if problem.n_vars == 0:
            return defects

        sign = 1.0 if problem.sense == 'min' else -1.0
        y = np.asarray(solution.duals, dtype=float)
        d = sign * np.asarray(problem.c, dtype=float) - a.T @ y
        cost_scale = max(1.0, float(np.abs(problem.c).max()))
        dual_tol = tol * cost_scale

        if np.any(y > dual_tol):
            defects.append('row multiplier with the wrong sign')
        loose = slack > tol * scale
        if np.any(np.abs(y[loose]) > dual_tol):
            defects.append('multiplier on an inactive row')

        at_lo = np.abs(x - lo) <= tol
        at_hi = np.abs(hi - x) <= tol
        wrong = ((d < -dual_tol) & ~at_hi) | ((d > dual_tol) & ~at_lo)
        if np.any(wrong):
            j = int(np.flatnonzero(wrong)[0])
            defects.append(f'reduced cost of x[{j}] has the wrong sign ({d[j]:.3g})')
        return defects
