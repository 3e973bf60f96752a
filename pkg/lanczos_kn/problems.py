"""Model problems: 2D diffusion on truncated domains, point sources, Matrix Market files and reference solves."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.io
import scipy.sparse
import scipy.sparse.linalg
from pydantic import BaseModel, Field, model_validator

from . import config
from .core import Shift, SparseSpdOperator
from .errors import (
    DimensionMismatch,
    DuplicateNode,
    NonPositiveSigma,
    NotSymmetricHeader,
    OutsideInterior,
    ParseError,
    SingularShift,
)
from .quadratures import TransferSample, Variant

logger = logging.getLogger('kn.problems')


class Inclusion(BaseModel):
    """Axis-aligned rectangle with its own sigma."""
    x0: float
    y0: float
    x1: float
    y1: float
    value: float = Field(gt=0.0)


class SigmaSpec(BaseModel):
    """Piecewise-constant sigma: a background value plus rectangular inclusions."""
    background: float = Field(default=1.0, gt=0.0)
    inclusions: List[Inclusion] = Field(
        default_factory=lambda: [Inclusion(x0=35.0, y0=20.0, x1=50.0, y1=40.0, value=10.0)]
    )


class ProblemDefinition(BaseModel):
    """
    Problem file contents: either a diffusion problem or a pair of Matrix Market files.

    The defaults describe the desk problem (60x60 interior, h = 1, ten
    exterior steps per side, one sigma = 10 inclusion).
    """
    interior: Tuple[int, int] = (60, 60)
    h: float = Field(default=1.0, gt=0.0)
    n_opt: int = Field(default=10, ge=0)
    sigma: SigmaSpec = Field(default_factory=SigmaSpec)
    sources: List[Tuple[float, float]] = Field(default_factory=lambda: [(15.0, 30.0)])
    matrix: Optional[str] = None
    rhs: Optional[str] = None

    @model_validator(mode='after')
    def _matrix_pair(self):
        if (self.matrix is None) != (self.rhs is None):
            raise ValueError("'matrix' and 'rhs' must be given together")
        return self


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid: uniform interior steps h, geometric exterior steps, Dirichlet outer boundary."""

    interior_nx: int
    interior_ny: int
    h: float
    n_opt: int
    steps_x: np.ndarray
    steps_y: np.ndarray

    @property
    def nx(self) -> int:
        return len(self.steps_x) - 1

    @property
    def ny(self) -> int:
        return len(self.steps_y) - 1

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @staticmethod
    def _coords(steps: np.ndarray, n_opt: int, h: float) -> np.ndarray:
        start = -(np.sum(steps[:n_opt]) + h) if n_opt else -h
        return start + np.cumsum(steps)[:-1]

    def x(self) -> np.ndarray:
        return self._coords(self.steps_x, self.n_opt, self.h)

    def y(self) -> np.ndarray:
        return self._coords(self.steps_y, self.n_opt, self.h)

    def interior_mask(self) -> np.ndarray:
        """(ny, nx) boolean array, True on interior nodes."""
        mask = np.zeros((self.ny, self.nx), dtype=bool)
        k = self.n_opt
        mask[k:k + self.interior_ny, k:k + self.interior_nx] = True
        return mask

    def extent(self) -> float:
        """Length added on one side by the exterior steps."""
        return float(np.sum(self.steps_x[:self.n_opt]))


@dataclass(frozen=True)
class DiffusionProblem:
    grid: GridSpec
    sigma: np.ndarray
    operator: SparseSpdOperator

    def node_index(self, i: int, j: int) -> int:
        """Row of node (i, j), x index fastest."""
        return j * self.grid.nx + i

    def node_of(self, row: int) -> Tuple[int, int]:
        return row % self.grid.nx, row // self.grid.nx


@dataclass(frozen=True)
class SourceSpec:
    locations: List[Tuple[float, float]]
    nodes: List[Tuple[int, int]]
    B: np.ndarray


@dataclass(frozen=True)
class Problem:
    """What a study needs: the operator, the right-hand side and, for grids, the diffusion problem."""

    operator: SparseSpdOperator
    rhs: np.ndarray
    diffusion: Optional[DiffusionProblem] = None


def geometric_exterior_grid(h: float, n_opt: int) -> np.ndarray:
    """Exterior steps h * r^(k+1), r = exp(pi / sqrt(n_opt)), k = 0..n_opt-1."""
    if n_opt < 1:
        raise ValueError(f"n_opt must be >= 1, got {n_opt}")
    r = np.exp(np.pi / np.sqrt(n_opt))
    return h * r ** np.arange(1, n_opt + 1)


def make_grid(interior_nx: int, interior_ny: int, h: float = 1.0, n_opt: int = 10) -> GridSpec:
    """Interior nodes at spacing h, one h step to the first exterior node, then the geometric steps."""
    exterior = geometric_exterior_grid(h, n_opt) if n_opt else np.zeros(0)

    def steps(count: int) -> np.ndarray:
        return np.concatenate([exterior[::-1], np.full(count + 1, h), exterior])

    return GridSpec(interior_nx, interior_ny, h, n_opt, steps(interior_nx), steps(interior_ny))


def sample_sigma(grid: GridSpec, spec: SigmaSpec) -> np.ndarray:
    """Sigma at the grid nodes as a (ny, nx) array."""
    X, Y = np.meshgrid(grid.x(), grid.y())
    sigma = np.full(X.shape, spec.background)
    for inc in spec.inclusions:
        inside = (X >= inc.x0) & (X <= inc.x1) & (Y >= inc.y0) & (Y <= inc.y1)
        sigma[inside] = inc.value
    return sigma


def _stiffness_1d(steps: np.ndarray) -> Tuple[scipy.sparse.spmatrix, np.ndarray]:
    inv = 1.0 / steps
    main = inv[:-1] + inv[1:]
    off = -inv[1:-1]
    K = scipy.sparse.diags([off, main, off], [-1, 0, 1], format='csr')
    dual = 0.5 * (steps[:-1] + steps[1:])
    return K, dual


def assemble_diffusion_2d(grid: GridSpec, sigma: Union[float, np.ndarray, SigmaSpec]) -> DiffusionProblem:
    """
    Symmetrized operator A = (sigma W)^{-1/2} K (sigma W)^{-1/2}.

    K is the five-point stiffness with face steps h_{i+1/2} and W the dual
    cell areas, so that W^{-1} K is the three-point Laplacian on each axis
    and A is similar to sigma^{-1/2} (-Delta_h) sigma^{-1/2}.

    Raises:
        NonPositiveSigma: sigma <= 0 at some node
    """
    if isinstance(sigma, SigmaSpec):
        sigma = sample_sigma(grid, sigma)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (grid.ny, grid.nx)).copy()
    if np.min(sigma) <= 0.0:
        raise NonPositiveSigma(float(np.min(sigma)))

    Kx, hx = _stiffness_1d(grid.steps_x)
    Ky, hy = _stiffness_1d(grid.steps_y)
    K = scipy.sparse.kron(scipy.sparse.diags(hy), Kx) + scipy.sparse.kron(Ky, scipy.sparse.diags(hx))
    weight = (sigma * np.outer(hy, hx)).ravel()
    scale = scipy.sparse.diags(weight ** -0.5)
    A = (scale @ K @ scale).tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    logger.info(
        f"✓ diffusion operator: {grid.nx}x{grid.ny} nodes ({grid.interior_nx}x{grid.interior_ny} interior, "
        f"n_opt={grid.n_opt}), nnz={A.nnz}"
    )
    return DiffusionProblem(grid, sigma, SparseSpdOperator(A))


def build_point_sources(problem: DiffusionProblem, locations: Sequence[Sequence[float]]) -> SourceSpec:
    """Unit columns at the interior nodes nearest to each location."""
    grid = problem.grid
    half = grid.h / 2
    x_max = (grid.interior_nx - 1) * grid.h
    y_max = (grid.interior_ny - 1) * grid.h
    nodes: List[Tuple[int, int]] = []
    for x, y in locations:
        if not (-half <= x <= x_max + half and -half <= y <= y_max + half):
            raise OutsideInterior((x, y))
        i = grid.n_opt + int(np.clip(np.rint(x / grid.h), 0, grid.interior_nx - 1))
        j = grid.n_opt + int(np.clip(np.rint(y / grid.h), 0, grid.interior_ny - 1))
        if (i, j) in nodes:
            raise DuplicateNode((i, j))
        nodes.append((i, j))

    B = np.zeros((grid.n, len(nodes)))
    for col, (i, j) in enumerate(nodes):
        B[problem.node_index(i, j), col] = 1.0
    return SourceSpec([tuple(map(float, loc)) for loc in locations], nodes, B)


def _header(path: Path) -> List[str]:
    with open(path, 'r') as f:
        first = f.readline()
    tokens = first.strip().lower().split()
    if len(tokens) != 5 or tokens[0] != '%%matrixmarket' or tokens[1] != 'matrix':
        raise ParseError("missing Matrix Market banner", line=1)
    return tokens


def _check_entries(path: Path, columns: int) -> None:
    """Line-level validation so that malformed files report the offending line."""
    with open(path, 'r') as f:
        size_seen = False
        expected = None
        count = 0
        for number, line in enumerate(f, start=1):
            text = line.strip()
            if number == 1 or not text or text.startswith('%'):
                continue
            tokens = text.split()
            if not size_seen:
                try:
                    sizes = [int(t) for t in tokens]
                except ValueError:
                    raise ParseError("invalid size line", line=number)
                if len(sizes) not in (2, 3):
                    raise ParseError("invalid size line", line=number)
                expected = sizes[2] if len(sizes) == 3 else sizes[0] * sizes[1]
                size_seen = True
                continue
            if len(tokens) != columns:
                raise ParseError(f"expected {columns} fields", line=number)
            try:
                if columns == 3:
                    int(tokens[0]), int(tokens[1])
                float(tokens[-1])
            except ValueError:
                raise ParseError("invalid entry", line=number)
            count += 1
    if not size_seen:
        raise ParseError("missing size line")
    if expected is not None and count < expected:
        raise ParseError(f"expected {expected} entries, found {count}")


def load_matrix_market(path: Union[str, Path]) -> SparseSpdOperator:
    """Read a 'coordinate real symmetric' Matrix Market file, expanding the stored triangle."""
    path = Path(path)
    tokens = _header(path)
    if tokens[2:] != ['coordinate', 'real', 'symmetric']:
        raise NotSymmetricHeader(' '.join(tokens))
    _check_entries(path, 3)
    try:
        A = scipy.io.mmread(str(path))
    except ValueError as e:
        raise ParseError(str(e)) from e
    return SparseSpdOperator(scipy.sparse.csr_matrix(A))


def load_dense_block(path: Union[str, Path]) -> np.ndarray:
    """Read a Matrix Market 'array real general' block."""
    path = Path(path)
    tokens = _header(path)
    if tokens[2] != 'array' or tokens[3] != 'real':
        raise ParseError(f"expected an 'array real' block, got '{' '.join(tokens[2:])}'", line=1)
    _check_entries(path, 1)
    try:
        B = scipy.io.mmread(str(path))
    except ValueError as e:
        raise ParseError(str(e)) from e
    return np.atleast_2d(np.asarray(B, dtype=float))


def write_matrix_market(path: Union[str, Path], op: Union[SparseSpdOperator, np.ndarray]) -> Path:
    """Write a symmetric matrix as coordinate real symmetric with round-trip precision."""
    path = _mtx_path(path)
    matrix = op.matrix if isinstance(op, SparseSpdOperator) else scipy.sparse.csr_matrix(op)
    scipy.io.mmwrite(str(path), scipy.sparse.coo_matrix(matrix), symmetry='symmetric', precision=17)
    return path


def write_dense_block(path: Union[str, Path], B: np.ndarray) -> Path:
    path = _mtx_path(path)
    scipy.io.mmwrite(str(path), np.atleast_2d(np.asarray(B, dtype=float)), symmetry='general', precision=17)
    return path


def _mtx_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path if path.suffix == '.mtx' else path.with_name(path.name + '.mtx')


def reference_transfer(
    op: SparseSpdOperator,
    B: np.ndarray,
    s: Shift,
    direct_cap: Optional[int] = None,
) -> TransferSample:
    """
    B^T (A + sI)^{-1} B by sparse LU, or by Krylov iterations above the size cap.

    Args:
        op: The SPD operator A
        B: n x p right-hand side (not normalized)
        s: Shift
        direct_cap: Largest nnz factorized directly (defaults to KN_DIRECT_SOLVE_CAP)

    Returns:
        TransferSample with variant REFERENCE
    """
    B = np.asarray(B)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != op.n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, operator dimension is {op.n}")
    cap = config.DIRECT_SOLVE_CAP if direct_cap is None else direct_cap
    dtype = np.result_type(op.matrix.dtype, s)
    M = (op.matrix + s * scipy.sparse.identity(op.n)).astype(dtype).tocsc()
    rhs = B.astype(dtype)

    if op.nnz <= cap:
        try:
            X = scipy.sparse.linalg.splu(M).solve(rhs)
        except RuntimeError as e:
            raise SingularShift(s) from e
    else:
        logger.warning(f"→ nnz={op.nnz} above direct cap {cap}; iterative reference solve")
        solver = scipy.sparse.linalg.cg if np.isrealobj(s) else scipy.sparse.linalg.bicgstab
        columns = []
        for col in range(rhs.shape[1]):
            x, info = solver(M, rhs[:, col], rtol=1e-12, atol=0.0, maxiter=20 * op.n)
            if info < 0:
                raise SingularShift(s)
            if info > 0:
                logger.warning(f"✗ reference solve at s={s} stopped before reaching 1e-12")
            columns.append(x)
        X = np.column_stack(columns)
    if not np.all(np.isfinite(X)):
        raise SingularShift(s)
    return TransferSample(s, B.T @ X, Variant.REFERENCE)


def build_problem(definition: Optional[ProblemDefinition] = None, base_dir: Optional[Path] = None) -> Problem:
    """Materialize a problem definition (desk default when None)."""
    definition = definition or ProblemDefinition()
    if definition.matrix is not None:
        root = base_dir or Path('.')
        op = load_matrix_market(root / definition.matrix)
        B = load_dense_block(root / definition.rhs)
        if B.shape[0] != op.n:
            raise DimensionMismatch(f"rhs has {B.shape[0]} rows, matrix dimension is {op.n}")
        logger.info(f"✓ loaded Matrix Market problem: n={op.n}, p={B.shape[1]}, nnz={op.nnz}")
        return Problem(op, B)

    nx, ny = definition.interior
    grid = make_grid(nx, ny, definition.h, definition.n_opt)
    diffusion = assemble_diffusion_2d(grid, definition.sigma)
    sources = build_point_sources(diffusion, definition.sources)
    return Problem(diffusion.operator, sources.B, diffusion)
