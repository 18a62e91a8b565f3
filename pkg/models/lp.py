from dataclasses import dataclass, field

import numpy as np

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'


@dataclass(frozen=True, eq=False)
class LpProblem:
    """
    optimize  c @ x + c0
    subject to  a_ub @ x <= b_ub,  lo <= x <= hi

    Bounds may be infinite. `sense` is 'min' or 'max'.
    """
    c: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    sense: str = 'min'
    c0: float = 0.0
    row_labels: tuple = field(default=(), repr=False)

    @property
    def n_vars(self):
        return self.c.shape[0]

    @property
    def n_rows(self):
        return self.b_ub.shape[0]

    def objective(self, x):
        return float(self.c @ x + self.c0)

    def row_label(self, i):
        if i < len(self.row_labels):
            return self.row_labels[i]
        return f'row{i}'

    def __repr__(self):
        return f'<LpProblem {self.sense} vars={self.n_vars} rows={self.n_rows}>'


@dataclass(frozen=True, eq=False)
class LpSolution:
    """
    Simplex result.

    `duals` are the row multipliers and `reduced_costs` the variable reduced
    costs, both for the minimization form (max problems are solved as min of -c).
    `active_rows`/`at_lower`/`at_upper` describe the active set.
    """
    status: str
    objective: float = float('nan')
    x: np.ndarray = None
    duals: np.ndarray = None
    reduced_costs: np.ndarray = None
    active_rows: tuple = ()
    at_lower: tuple = ()
    at_upper: tuple = ()
    iterations: int = 0
    infeasibility: float = 0.0
    worst_row: int = -1

    def __repr__(self):
        return f'<LpSolution {self.status} obj={self.objective:.6g} it={self.iterations}>'
