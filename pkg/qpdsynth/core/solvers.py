"""Small dense LP and SDP backends.

LPs go to HiGHS through ``scipy.optimize.linprog``. SDPs go to the cvxopt
primal-dual interior-point solver, which works on real symmetric blocks;
complex Hermitian data enters through :func:`hermitian_embed`.

SDP standard form used here::

    minimize    cost · x
    subject to  constant_k + Σ_i x_i coefficients_k[i] ⪰ 0   for every block k
                G_ub x ≤ h_ub
                A_eq x = b_eq
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import scipy.linalg
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers
from scipy.optimize import linprog

from ..config.tolerances import DEFAULT_TOLERANCES, Tolerances
from ..exceptions.channel import NotHermitianError
from ..exceptions.solver import SolverError
from ..utils.logging import get_process_logger
from .channels import ComplexMatrix, as_matrix, is_hermitian

RealMatrix = npt.NDArray[np.float64]
Bounds = Union[Tuple[Optional[float], Optional[float]], Sequence[Tuple[Optional[float], Optional[float]]]]


class SolverStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"
    NUMERICAL = "numerical"
    # stalled near the optimum: within the acceptable band but not the strict tolerances
    INACCURATE = "inaccurate"


@dataclass(frozen=True)
class SolverSolution:
    status: SolverStatus
    x: npt.NDArray[np.float64]
    objective: float
    iterations: int
    equality_residual: float = 0.0
    inequality_violation: float = 0.0
    min_block_eigenvalue: float = 0.0
    relative_gap: float = 0.0
    message: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


def _empty(n: int) -> Tuple[RealMatrix, RealMatrix]:
    return np.zeros((0, n)), np.zeros(0)


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """``minimize cost · x`` subject to equalities, inequalities and bounds."""

    cost: RealMatrix
    A_eq: Optional[RealMatrix] = None
    b_eq: Optional[RealMatrix] = None
    A_ub: Optional[RealMatrix] = None
    b_ub: Optional[RealMatrix] = None
    bounds: Bounds = (0.0, None)

    def __post_init__(self) -> None:
        cost = np.asarray(self.cost, dtype=float).reshape(-1)
        n = cost.size
        object.__setattr__(self, "cost", cost)
        for a_name, b_name in (("A_eq", "b_eq"), ("A_ub", "b_ub")):
            a, b = getattr(self, a_name), getattr(self, b_name)
            if a is None:
                a, b = _empty(n)
            a = np.asarray(a, dtype=float).reshape(-1, n)
            b = np.asarray(b, dtype=float).reshape(-1)
            if a.shape[0] != b.size:
                raise SolverError(f"{a_name} has {a.shape[0]} rows but {b_name} has {b.size} entries")
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise SolverError(f"{a_name}/{b_name} contain non-finite entries")
            object.__setattr__(self, a_name, a)
            object.__setattr__(self, b_name, b)

    @property
    def n_variables(self) -> int:
        return self.cost.size


@dataclass(frozen=True, eq=False)
class PsdBlock:
    """Linear matrix inequality ``constant + Σ_i x_i coefficients[i] ⪰ 0`` (real symmetric)."""

    constant: RealMatrix
    coefficients: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        constant = np.asarray(self.constant, dtype=float)
        coefficients = np.asarray(self.coefficients, dtype=float)
        size = constant.shape[0]
        if constant.shape != (size, size) or coefficients.shape[1:] != (size, size):
            raise SolverError(
                "PSD block data must be square and consistent",
                details={"constant": constant.shape, "coefficients": coefficients.shape},
            )
        if not np.allclose(constant, constant.T) or not np.allclose(coefficients, coefficients.transpose(0, 2, 1)):
            raise SolverError("PSD block data must be symmetric")
        object.__setattr__(self, "constant", constant)
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    def evaluate(self, x: npt.NDArray[np.float64]) -> RealMatrix:
        return self.constant + np.tensordot(x, self.coefficients, axes=1)

    @classmethod
    def hermitian(cls, constant: ComplexMatrix, coefficients: Sequence[ComplexMatrix]) -> "PsdBlock":
        """Block for a complex Hermitian LMI, stored through its real embedding."""
        return cls(
            _embed(as_matrix(constant)),
            _embed(np.asarray(coefficients, dtype=complex)),
        )


@dataclass(frozen=True, eq=False)
class SemidefiniteProgram:
    cost: RealMatrix
    blocks: List[PsdBlock] = field(default_factory=list)
    A_eq: Optional[RealMatrix] = None
    b_eq: Optional[RealMatrix] = None
    G_ub: Optional[RealMatrix] = None
    h_ub: Optional[RealMatrix] = None

    def __post_init__(self) -> None:
        cost = np.asarray(self.cost, dtype=float).reshape(-1)
        n = cost.size
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "blocks", list(self.blocks))
        for a_name, b_name in (("A_eq", "b_eq"), ("G_ub", "h_ub")):
            a, b = getattr(self, a_name), getattr(self, b_name)
            if a is None:
                a, b = _empty(n)
            a = np.asarray(a, dtype=float).reshape(-1, n)
            b = np.asarray(b, dtype=float).reshape(-1)
            if a.shape[0] != b.size:
                raise SolverError(f"{a_name} has {a.shape[0]} rows but {b_name} has {b.size} entries")
            object.__setattr__(self, a_name, a)
            object.__setattr__(self, b_name, b)
        for block in self.blocks:
            if block.coefficients.shape[0] != n:
                raise SolverError(
                    f"PSD block has {block.coefficients.shape[0]} coefficient matrices for {n} variables"
                )

    @property
    def n_variables(self) -> int:
        return self.cost.size


def _embed(matrix: ComplexMatrix) -> RealMatrix:
    """Embedding of a matrix or a stack of matrices (leading axes are kept)."""
    re, im = matrix.real, matrix.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def hermitian_embed(matrix: ComplexMatrix, tolerances: Tolerances = DEFAULT_TOLERANCES) -> RealMatrix:
    """Real symmetric ``[[Re, −Im], [Im, Re]]``; PSD exactly when ``matrix`` is, eigenvalues doubled."""
    matrix = as_matrix(matrix)
    if not is_hermitian(matrix, tolerances.hermitian):
        raise NotHermitianError("Only Hermitian matrices can be embedded", details={"shape": matrix.shape})
    embedded = _embed(matrix)
    return 0.5 * (embedded + embedded.T)


def _independent_rows(
    A: RealMatrix, b: RealMatrix, tol: float
) -> Tuple[RealMatrix, RealMatrix, bool]:
    """Drop linearly dependent equality rows; report whether the dropped rows were consistent."""
    if A.shape[0] == 0:
        return A, b, True
    _, r, pivots = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    scale = max(1.0, float(diag[0])) if diag.size else 1.0
    rank = int(np.sum(diag > 1e-10 * scale))
    keep = np.sort(pivots[:rank])
    A_kept, b_kept = A[keep], b[keep]
    if rank == A.shape[0]:
        return A_kept, b_kept, True
    x0 = np.linalg.lstsq(A_kept, b_kept, rcond=None)[0]
    consistent = float(np.max(np.abs(A @ x0 - b))) <= tol * max(1.0, float(np.max(np.abs(b))))
    return A_kept, b_kept, consistent


_LINPROG_STATUS = {
    0: SolverStatus.OPTIMAL,
    1: SolverStatus.MAX_ITER,
    2: SolverStatus.INFEASIBLE,
    3: SolverStatus.UNBOUNDED,
    4: SolverStatus.NUMERICAL,
}


def solve_lp(program: LinearProgram, tolerances: Tolerances = DEFAULT_TOLERANCES) -> SolverSolution:
    logger_base = get_process_logger()
    result = linprog(
        program.cost,
        A_ub=program.A_ub if program.A_ub.shape[0] else None,
        b_ub=program.b_ub if program.b_ub.shape[0] else None,
        A_eq=program.A_eq if program.A_eq.shape[0] else None,
        b_eq=program.b_eq if program.b_eq.shape[0] else None,
        bounds=program.bounds,
        method="highs",
        options={"primal_feasibility_tolerance": tolerances.feasibility, "dual_feasibility_tolerance": tolerances.feasibility},
    )
    status = _LINPROG_STATUS.get(result.status, SolverStatus.NUMERICAL)
    if result.x is None:
        logger_base.debug(f"LP ended without a point: {result.message}")
        return SolverSolution(status, np.full(program.n_variables, np.nan), float("nan"), int(result.nit), message=result.message)

    x = np.asarray(result.x, dtype=float)
    eq_res = float(np.max(np.abs(program.A_eq @ x - program.b_eq))) if program.b_eq.size else 0.0
    ub_viol = float(max(0.0, np.max(program.A_ub @ x - program.b_ub))) if program.b_ub.size else 0.0
    logger_base.debug(f"LP {status.value}: objective={result.fun:.12g}, iterations={result.nit}, eq_residual={eq_res:.3g}")
    return SolverSolution(
        status=status,
        x=x,
        objective=float(result.fun),
        iterations=int(result.nit),
        equality_residual=eq_res,
        inequality_violation=ub_viol,
        message=result.message,
    )


def _sdp_diagnostics(program: SemidefiniteProgram, x: npt.NDArray[np.float64]) -> Tuple[float, float, float]:
    eq_res = float(np.max(np.abs(program.A_eq @ x - program.b_eq))) if program.b_eq.size else 0.0
    ub_viol = float(max(0.0, np.max(program.G_ub @ x - program.h_ub))) if program.h_ub.size else 0.0
    min_eig = min(
        (float(np.linalg.eigvalsh(block.evaluate(x)).min()) for block in program.blocks),
        default=0.0,
    )
    return eq_res, ub_viol, min_eig


def solve_sdp(program: SemidefiniteProgram, tolerances: Tolerances = DEFAULT_TOLERANCES) -> SolverSolution:
    """Solve with cvxopt's interior-point method (Mehrotra predictor-corrector).

    A run that stops with cvxopt status ``unknown`` is reported optimal only
    when its residuals and relative gap meet the strict feasibility and gap
    tolerances. Inside the looser acceptable band it is ``INACCURATE``, with
    the solution attached.
    """
    logger_base = get_process_logger()
    n = program.n_variables
    A_eq, b_eq, consistent = _independent_rows(program.A_eq, program.b_eq, tolerances.feasibility)
    if not consistent:
        logger_base.debug("SDP equality constraints are inconsistent")
        return SolverSolution(SolverStatus.INFEASIBLE, np.full(n, np.nan), float("nan"), 0, message="inconsistent equalities")

    kwargs: dict = {}
    if program.h_ub.size:
        kwargs["Gl"] = cvx_matrix(np.ascontiguousarray(program.G_ub))
        kwargs["hl"] = cvx_matrix(program.h_ub)
    if b_eq.size:
        kwargs["A"] = cvx_matrix(np.ascontiguousarray(A_eq))
        kwargs["b"] = cvx_matrix(b_eq)
    if program.blocks:
        # cvxopt: G x + S = h with S ⪰ 0, so G = −vec(coefficients)
        kwargs["Gs"] = [cvx_matrix(np.ascontiguousarray(-block.coefficients.reshape(n, -1).T)) for block in program.blocks]
        kwargs["hs"] = [cvx_matrix(block.constant) for block in program.blocks]

    options = {
        "show_progress": False,
        "maxiters": tolerances.solver_max_iterations,
        "feastol": tolerances.feasibility,
        "reltol": tolerances.duality_gap,
        "abstol": 0.1 * tolerances.duality_gap,
    }
    try:
        result = cvx_solvers.sdp(cvx_matrix(program.cost), options=options, **kwargs)
    except (ValueError, ArithmeticError, TypeError) as e:
        raise SolverError("Interior-point solver failed", original_error=e, details={"variables": n})

    iterations = int(result.get("iterations", 0))
    if result["x"] is None:
        x = np.full(n, np.nan)
    else:
        x = np.array(result["x"], dtype=float).reshape(-1)

    raw = result["status"]
    gap = result.get("relative gap")
    gap = float(gap) if gap is not None else float("inf")
    pinf = float(result.get("primal infeasibility") or 0.0)
    dinf = float(result.get("dual infeasibility") or 0.0)

    if raw == "optimal":
        status = SolverStatus.OPTIMAL
    elif raw == "primal infeasible":
        status = SolverStatus.INFEASIBLE
    elif raw == "dual infeasible":
        status = SolverStatus.UNBOUNDED
    elif np.all(np.isfinite(x)) and max(pinf, dinf) <= tolerances.feasibility and abs(gap) <= tolerances.duality_gap:
        status = SolverStatus.OPTIMAL
        logger_base.debug(f"Stalled SDP run meets the strict tolerances: pinf={pinf:.2e}, dinf={dinf:.2e}, gap={gap:.2e}")
    elif (
        np.all(np.isfinite(x))
        and max(pinf, dinf) <= tolerances.acceptable_feasibility
        and abs(gap) <= tolerances.acceptable_gap
    ):
        status = SolverStatus.INACCURATE
        logger_base.debug(f"Stalled SDP run within the acceptable band: pinf={pinf:.2e}, dinf={dinf:.2e}, gap={gap:.2e}")
    elif iterations >= tolerances.solver_max_iterations:
        status = SolverStatus.MAX_ITER
    else:
        status = SolverStatus.NUMERICAL

    objective = float(program.cost @ x) if np.all(np.isfinite(x)) else float("nan")
    eq_res, ub_viol, min_eig = _sdp_diagnostics(program, x) if np.all(np.isfinite(x)) else (np.inf, np.inf, -np.inf)
    logger_base.debug(
        f"SDP {status.value} ({raw}): objective={objective:.12g}, iterations={iterations}, "
        f"eq_residual={eq_res:.3g}, min_eig={min_eig:.3g}, gap={gap:.3g}"
    )
    return SolverSolution(
        status=status,
        x=x,
        objective=objective,
        iterations=iterations,
        equality_residual=eq_res,
        inequality_violation=ub_viol,
        min_block_eigenvalue=min_eig,
        relative_gap=gap,
        message=str(raw),
    )


def require_optimal(solution: SolverSolution, what: str, allow_inaccurate: bool = False) -> SolverSolution:
    """Raise ``SolverError`` unless the run is optimal.

    ``allow_inaccurate`` additionally lets ``INACCURATE`` runs through, with a warning in the log.
    """
    if allow_inaccurate and solution.status is SolverStatus.INACCURATE:
        get_process_logger().warning(
            f"{what}: using an inaccurate solution (eq_residual={solution.equality_residual:.2e}, "
            f"gap={solution.relative_gap:.2e})"
        )
        return solution
    if not solution.is_optimal:
        raise SolverError(
            f"{what} did not reach optimality",
            solution=solution,
            details={"status": solution.status.value, "message": solution.message},
        )
    return solution


def dump_sdpa(program: SemidefiniteProgram, path: Union[str, Path]) -> Path:
    """Write ``program`` in SDPA sparse format for cross-checking with external solvers.

    SDPA reads ``minimize c·x s.t. Σ x_i F_i − F_0 ⪰ 0``; linear rows (inequalities
    and both sides of every equality) become one trailing diagonal block.
    """
    path = Path(path)
    n = program.n_variables
    rows_G = np.vstack([program.G_ub, program.A_eq, -program.A_eq])
    rows_h = np.concatenate([program.h_ub, program.b_eq, -program.b_eq])

    structure = [block.size for block in program.blocks]
    if rows_h.size:
        structure.append(-rows_h.size)

    lines: List[str] = [
        f"{n} = mDIM",
        f"{len(structure)} = nBLOCK",
        " ".join(str(s) for s in structure) + " = bLOCKsTRUCT",
        " ".join(f"{v:.17g}" for v in program.cost),
    ]

    def emit(matno: int, blkno: int, data: Any) -> None:
        for i in range(data.shape[0]):
            for j in range(i, data.shape[1]):
                if data[i, j] != 0.0:
                    lines.append(f"{matno} {blkno} {i + 1} {j + 1} {data[i, j]:.17g}")

    for k, block in enumerate(program.blocks, start=1):
        emit(0, k, -block.constant)
        for i in range(n):
            emit(i + 1, k, block.coefficients[i])
    if rows_h.size:
        k = len(program.blocks) + 1
        # h − G x ≥ 0
        emit(0, k, np.diag(-rows_h))
        for i in range(n):
            emit(i + 1, k, np.diag(-rows_G[:, i]))

    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
