"""Conic problem representation: named variable blocks, structured affine
maps into Hermitian PSD cones and a Euclidean norm-ball (second-order)
cone, plus a self-describing dump format for cross-solver debugging.

Variables are real parameter vectors under the hood:

* ``toeplitz``  - Hermitian multi-level Toeplitz generator; one real for the
  center entry plus (re, im) pairs for one half of the index grid.
* ``hermitian`` - free Hermitian matrix; diagonal reals then (re, im) pairs
  for the upper triangle in row-major order.
* ``matrix``    - free complex matrix; interleaved (re, im) per entry in
  row-major order.
* ``scalar``    - one real.

A PSD cone is a block matrix S(x) = B + sum_p x_p A_p assembled from
*placements* of variable blocks; the structure (rather than dense A_p) is
kept so the interior-point solver can form its normal matrix fast.
"""

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse

from ..toeplitz import MultiLevelToeplitzGenerator

__all__ = [
    "VarBlock",
    "ToeplitzPlacement",
    "HermitianPlacement",
    "MatrixPlacement",
    "ScalarPlacement",
    "PSDConeMap",
    "SOCConeMap",
    "ConicProblem",
    "ProblemBuilder",
    "SolverOptions",
    "ConicSolution",
    "svec",
    "smat",
    "dump_problem",
    "load_problem_dump",
]


# ---------------------------------------------------------------------------
# variable blocks

@lru_cache(maxsize=64)
def _toeplitz_param_maps(dims):
    """(center, positive-half, mirror-of-positive-half) flat generator indices."""
    shape = tuple(2 * n - 1 for n in dims)
    p = int(np.prod(shape))
    flat = np.arange(p)
    multi = np.unravel_index(flat, shape)
    mirror = np.ravel_multi_index(
        tuple(2 * (n - 1) - m for n, m in zip(dims, multi)), shape
    )
    center = int(flat[mirror == flat][0])
    pos = flat[flat > mirror]
    return center, pos, mirror[pos]


@dataclass(frozen=True)
class VarBlock:
    name: str
    kind: str
    meta: tuple
    offset: int
    size: int

    @property
    def sl(self):
        return slice(self.offset, self.offset + self.size)

    def unpack(self, x):
        v = np.asarray(x)[self.sl]
        if self.kind == "scalar":
            return float(v[0])
        if self.kind == "matrix":
            flat = v[0::2] + 1j * v[1::2]
            return flat.reshape(self.meta)
        if self.kind == "hermitian":
            m = self.meta[0]
            out = np.zeros((m, m), dtype=complex)
            out[np.diag_indices(m)] = v[:m]
            iu = np.triu_indices(m, 1)
            vals = v[m::2] + 1j * v[m + 1::2]
            out[iu] = vals
            out[(iu[1], iu[0])] = vals.conj()
            return out
        if self.kind == "toeplitz":
            dims = self.meta
            center, pos, neg = _toeplitz_param_maps(dims)
            flat = np.zeros(int(np.prod([2 * n - 1 for n in dims])), dtype=complex)
            flat[center] = v[0]
            vals = v[1::2] + 1j * v[2::2]
            flat[pos] = vals
            flat[neg] = vals.conj()
            return MultiLevelToeplitzGenerator(dims, flat.reshape([2 * n - 1 for n in dims]))
        raise ValueError(f"unknown variable kind {self.kind!r}")

    def pack(self, value):
        """Inverse of unpack; used by tests and feasibility checks."""
        if self.kind == "scalar":
            return np.array([float(value)])
        if self.kind == "matrix":
            flat = np.asarray(value, dtype=complex).reshape(-1)
            out = np.empty(self.size)
            out[0::2], out[1::2] = flat.real, flat.imag
            return out
        if self.kind == "hermitian":
            m = self.meta[0]
            a = np.asarray(value, dtype=complex)
            out = np.empty(self.size)
            out[:m] = a[np.diag_indices(m)].real
            iu = np.triu_indices(m, 1)
            out[m::2], out[m + 1::2] = a[iu].real, a[iu].imag
            return out
        if self.kind == "toeplitz":
            center, pos, _ = _toeplitz_param_maps(self.meta)
            flat = np.asarray(value.data if hasattr(value, "data") else value, dtype=complex).reshape(-1)
            out = np.empty(self.size)
            out[0] = flat[center].real
            out[1::2], out[2::2] = flat[pos].real, flat[pos].imag
            return out
        raise ValueError(f"unknown variable kind {self.kind!r}")


def _var_size(kind, meta):
    if kind == "scalar":
        return 1
    if kind == "matrix":
        return 2 * int(np.prod(meta))
    if kind == "hermitian":
        return meta[0] * meta[0]
    if kind == "toeplitz":
        return int(np.prod([2 * n - 1 for n in meta]))
    raise ValueError(kind)


# ---------------------------------------------------------------------------
# placements inside a PSD block

class ToeplitzPlacement:
    """Hermitian multi-level Toeplitz block on the diagonal of a PSD cone."""

    def __init__(self, var, dims, row):
        self.var = var
        self.dims = tuple(dims)
        self.row = int(row)
        self.block = int(np.prod(self.dims))
        center, pos, neg = _toeplitz_param_maps(self.dims)
        self._center, self._pos, self._neg = center, pos, neg
        grid = int(np.prod([2 * n - 1 for n in self.dims]))
        rows = np.concatenate([[center], pos, neg, pos, neg])
        cols = np.concatenate([
            [0],
            1 + 2 * np.arange(pos.size), 1 + 2 * np.arange(pos.size),
            2 + 2 * np.arange(pos.size), 2 + 2 * np.arange(pos.size),
        ])
        data = np.concatenate([
            [1.0], np.ones(pos.size), np.ones(pos.size),
            1j * np.ones(pos.size), -1j * np.ones(pos.size),
        ])
        # columns = parameters, rows = generator grid entries; built lazily
        # since the small-cone dense path never touches them
        self._coef_parts = (data, rows, cols, grid)
        self._coef = None
        self._coef_t = None
        off = np.indices(self.dims).reshape(len(self.dims), self.block)
        per_level = [
            off[d][None, :] - off[d][:, None] + (self.dims[d] - 1)
            for d in range(len(self.dims))
        ]
        self._flat_offsets = np.ravel_multi_index(
            tuple(per_level), tuple(2 * n - 1 for n in self.dims)
        )

    @property
    def coef(self):
        if self._coef is None:
            data, rows, cols, grid = self._coef_parts
            self._coef = scipy.sparse.csr_matrix(
                (data, (rows, cols)), shape=(grid, self.var.size), dtype=complex
            )
        return self._coef

    @property
    def coef_t(self):
        if self._coef_t is None:
            self._coef_t = self.coef.T.tocsr()
        return self._coef_t

    def assemble(self, xvar, s_out):
        gen = np.zeros(self.coef.shape[0], dtype=complex)
        gen[self._center] = xvar[0]
        vals = xvar[1::2] + 1j * xvar[2::2]
        gen[self._pos] = vals
        gen[self._neg] = vals.conj()
        r = self.row
        s_out[r:r + self.block, r:r + self.block] += gen[self._flat_offsets]

    def adjoint(self, y_mat, out):
        r = self.row
        blk = y_mat[r:r + self.block, r:r + self.block]
        dsum = np.zeros(self.coef.shape[0], dtype=complex)
        np.add.at(dsum, self._flat_offsets.ravel(), blk.ravel())
        o = self.var.offset
        out[o] += dsum[self._center].real
        out[o + 1:o + self.var.size:2] += 2.0 * dsum[self._pos].real
        out[o + 2:o + self.var.size:2] += 2.0 * dsum[self._pos].imag


class _ElementaryPlacement:
    """Placement whose parameters map to elementary-matrix pairs.

    Entry e contributes coef_e * v_e * E[row_e, col_e] plus the conjugate
    transpose, where v_e is a complex value built from a (re, im) parameter
    pair, or a single real parameter when is_complex[e] is False.
    """

    def __init__(self, var, ent_rows, ent_cols, ent_coef, ent_pos, ent_complex):
        self.var = var
        self.ent_rows = np.asarray(ent_rows, dtype=int)
        self.ent_cols = np.asarray(ent_cols, dtype=int)
        self.ent_coef = np.asarray(ent_coef, dtype=complex)
        self.ent_pos = np.asarray(ent_pos, dtype=int)     # var-relative
        self.ent_complex = np.asarray(ent_complex, dtype=bool)

    def _values(self, xvar):
        v = xvar[self.ent_pos].astype(complex)
        cpx = self.ent_complex
        v[cpx] += 1j * xvar[self.ent_pos[cpx] + 1]
        return v

    def assemble(self, xvar, s_out):
        w = self.ent_coef * self._values(xvar)
        np.add.at(s_out, (self.ent_rows, self.ent_cols), w)
        np.add.at(s_out, (self.ent_cols, self.ent_rows), w.conj())

    def adjoint(self, y_mat, out):
        w = self.ent_coef * y_mat[self.ent_cols, self.ent_rows]
        o = self.var.offset
        np.add.at(out, o + self.ent_pos, 2.0 * w.real)
        cpx = self.ent_complex
        np.add.at(out, o + self.ent_pos[cpx] + 1, -2.0 * w.imag[cpx])


class MatrixPlacement(_ElementaryPlacement):
    """Complex matrix X at arbitrary entry positions, together with X^H at
    the transposed positions (keeps the block Hermitian)."""

    def __init__(self, var, entry_rows, entry_cols):
        entry_rows = np.asarray(entry_rows, dtype=int).reshape(-1)
        entry_cols = np.asarray(entry_cols, dtype=int).reshape(-1)
        ne = entry_rows.size
        if 2 * ne != var.size:
            raise ValueError("entry positions do not match variable size")
        super().__init__(
            var, entry_rows, entry_cols,
            np.ones(ne), 2 * np.arange(ne), np.ones(ne, dtype=bool),
        )

    @staticmethod
    def block(var, shape, row, col):
        rr, cc = shape
        i, j = np.divmod(np.arange(rr * cc), cc)
        return MatrixPlacement(var, row + i, col + j)

    @staticmethod
    def vectorized_column(var, shape, row, col):
        """Place vec(X) (column-stacked) as a single column block."""
        rr, cc = shape
        i, j = np.divmod(np.arange(rr * cc), cc)
        return MatrixPlacement(var, row + j * rr + i, np.full(rr * cc, col))


class HermitianPlacement(_ElementaryPlacement):
    """Free Hermitian matrix block on the diagonal."""

    def __init__(self, var, m, row):
        iu = np.triu_indices(m, 1)
        diag = np.arange(m)
        no = iu[0].size
        super().__init__(
            var,
            np.concatenate([diag + row, iu[0] + row]),
            np.concatenate([diag + row, iu[1] + row]),
            np.concatenate([0.5 * np.ones(m), np.ones(no)]),
            np.concatenate([diag, m + 2 * np.arange(no)]),
            np.concatenate([np.zeros(m, dtype=bool), np.ones(no, dtype=bool)]),
        )
        self.m, self.row = m, row


class ScalarPlacement(_ElementaryPlacement):
    def __init__(self, var, row):
        super().__init__(var, [row], [row], [0.5], [0], [False])
        self.row = row


# ---------------------------------------------------------------------------
# cones

class PSDConeMap:
    """Hermitian PSD cone S(x) = const + sum of placements, size m x m."""

    def __init__(self, m, placements, const=None):
        self.m = int(m)
        self.placements = list(placements)
        if const is None:
            const = np.zeros((self.m, self.m), dtype=complex)
        const = np.asarray(const, dtype=complex)
        if const.shape != (self.m, self.m):
            raise ValueError("const block has wrong shape")
        if np.abs(const - const.conj().T).max() > 1e-12 * max(1.0, np.abs(const).max()):
            raise ValueError("const block must be Hermitian")
        self.const = const
        self._dense_basis = None
        # below this size the dense-basis paths beat the structured ones'
        # fixed dispatch overheads
        self.use_dense = self.m <= 24

    kind = "psd"

    def dense_basis(self):
        """Global parameter indices plus the flattened basis matrices of
        this cone; cached, used by the small-cone fast paths."""
        if self._dense_basis is None:
            idx = np.concatenate([
                np.arange(pl.var.offset, pl.var.offset + pl.var.size)
                for pl in self.placements
            ])
            stack = np.zeros((idx.size, self.m, self.m), dtype=complex)
            unit = np.zeros(int(idx.max()) + 1)
            for k, p in enumerate(idx):
                unit[p] = 1.0
                for pl in self.placements:
                    pl.assemble(unit[pl.var.sl], stack[k])
                unit[p] = 0.0
            self._dense_basis = (idx, stack.reshape(idx.size, -1))
        return self._dense_basis

    @property
    def dim(self):
        return self.m * self.m

    def assemble(self, x, include_const=True):
        if self.use_dense:
            idx, a_flat = self.dense_basis()
            s = (x[idx] @ a_flat).reshape(self.m, self.m)
            return s + self.const if include_const else s
        s = self.const.copy() if include_const else np.zeros((self.m, self.m), dtype=complex)
        for pl in self.placements:
            pl.assemble(x[pl.var.sl], s)
        return s

    def adjoint(self, y_mat, out):
        if self.use_dense:
            idx, a_flat = self.dense_basis()
            out[idx] += (a_flat.conj() @ y_mat.ravel()).real
            return
        for pl in self.placements:
            pl.adjoint(y_mat, out)

    def b_norm_sq(self):
        return float(np.linalg.norm(self.const) ** 2)

    def b_dot(self, z_mat):
        return float(np.vdot(self.const, z_mat).real)


class SOCConeMap:
    """Second-order cone s(x) = A x + b, s_0 >= ||s_1:||."""

    kind = "soc"

    def __init__(self, a_mat, b):
        self.a_mat = np.ascontiguousarray(a_mat, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.a_mat.ndim != 2 or self.b.shape != (self.a_mat.shape[0],):
            raise ValueError("inconsistent SOC data")
        self._ata = None

    @property
    def dim(self):
        return self.a_mat.shape[0]

    def ata(self):
        if self._ata is None:
            self._ata = self.a_mat.T @ self.a_mat
        return self._ata

    def assemble(self, x, include_const=True):
        s = self.a_mat @ x
        if include_const:
            s = s + self.b
        return s

    def adjoint(self, z_vec, out):
        out += self.a_mat.T @ z_vec

    def b_norm_sq(self):
        return float(np.linalg.norm(self.b) ** 2)

    def b_dot(self, z_vec):
        return float(self.b @ z_vec)


# ---------------------------------------------------------------------------
# problem / solution containers

@dataclass
class SolverOptions:
    gap_tol: float = 1e-7
    feas_tol: float = 1e-7
    max_iters: int = 100
    step_frac: float = 0.98
    verbose: bool = False

    def __post_init__(self):
        if min(self.gap_tol, self.feas_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.step_frac < 1:
            raise ValueError("step_frac must lie in (0, 1)")


@dataclass
class ConicSolution:
    status: str
    objective: float
    gap: float
    rel_gap: float
    primal_infeas: float
    dual_infeas: float
    iterations: int
    wall_time: float
    x: np.ndarray
    primal: dict
    duals: list
    trace: list = field(default_factory=list)

    def __post_init__(self):
        if self.status not in ("optimal", "max-iters", "numerical-failure"):
            raise ValueError(f"unknown status {self.status!r}")


class ConicProblem:
    """Linear objective over affine slices of PSD cones and norm balls."""

    def __init__(self, variables, cones, c, obj_const=0.0, name=""):
        self.variables = dict(variables)
        self.cones = list(cones)
        self.c = np.asarray(c, dtype=float)
        self.obj_const = float(obj_const)
        self.name = name
        self.n = sum(v.size for v in self.variables.values())
        if self.c.shape != (self.n,):
            raise ValueError("objective length does not match variable count")
        for cone in self.cones:
            if cone.kind == "soc" and cone.a_mat.shape[1] != self.n:
                raise ValueError("SOC map width does not match variable count")

    def unpack(self, x):
        return {name: var.unpack(x) for name, var in self.variables.items()}

    def objective_value(self, x):
        return float(self.c @ x) + self.obj_const

    def adjoint(self, cone_duals):
        out = np.zeros(self.n)
        for cone, z in zip(self.cones, cone_duals):
            cone.adjoint(z, out)
        return out

    def dense_cone_maps(self):
        """Materialize (A, b) per cone with PSD blocks in svec coordinates.

        Expensive; intended for dumps, debugging, and brute-force tests.
        """
        maps = []
        eye = np.eye(self.n)
        for cone in self.cones:
            if cone.kind == "soc":
                maps.append((cone.a_mat.copy(), cone.b.copy(), "soc", cone.dim))
            else:
                cols = [svec(cone.assemble(eye[p], include_const=False)) for p in range(self.n)]
                maps.append((np.stack(cols, axis=1), svec(cone.const), "psd", cone.m))
        return maps


class ProblemBuilder:
    def __init__(self, name=""):
        self.name = name
        self._vars = {}
        self._cones = []
        self._n = 0

    def _add_var(self, name, kind, meta):
        if name in self._vars:
            raise ValueError(f"duplicate variable {name!r}")
        var = VarBlock(name, kind, tuple(meta), self._n, _var_size(kind, tuple(meta)))
        self._vars[name] = var
        self._n += var.size
        return var

    def toeplitz_var(self, name, dims):
        return self._add_var(name, "toeplitz", tuple(int(d) for d in dims))

    def hermitian_var(self, name, m):
        return self._add_var(name, "hermitian", (int(m),))

    def matrix_var(self, name, shape):
        return self._add_var(name, "matrix", (int(shape[0]), int(shape[1])))

    def scalar_var(self, name):
        return self._add_var(name, "scalar", ())

    def add_psd_cone(self, m, placements, const=None):
        cone = PSDConeMap(m, placements, const)
        self._cones.append(cone)
        return cone

    def add_soc_cone(self, a_mat, b):
        cone = SOCConeMap(a_mat, b)
        self._cones.append(cone)
        return cone

    @property
    def n(self):
        return self._n

    def build(self, c, obj_const=0.0):
        return ConicProblem(self._vars, self._cones, c, obj_const, self.name)


# ---------------------------------------------------------------------------
# svec / smat (isometric real coordinates for Hermitian matrices)

@lru_cache(maxsize=64)
def _svec_idx(m):
    iu = np.triu_indices(m, 1)
    return np.arange(m), iu


def svec(a):
    """Real coordinates of a Hermitian matrix: diagonal, then sqrt(2)*(re, im)
    of the upper triangle row-major; preserves the trace inner product."""
    a = np.asarray(a)
    m = a.shape[0]
    diag, iu = _svec_idx(m)
    off = a[iu]
    out = np.empty(m * m)
    out[:m] = a[diag, diag].real
    out[m::2] = np.sqrt(2.0) * off.real
    out[m + 1::2] = np.sqrt(2.0) * off.imag
    return out


def smat(v):
    v = np.asarray(v)
    m = int(round(np.sqrt(v.size)))
    if m * m != v.size:
        raise ValueError("svec length is not a perfect square")
    diag, iu = _svec_idx(m)
    out = np.zeros((m, m), dtype=complex)
    out[diag, diag] = v[:m]
    vals = (v[m::2] + 1j * v[m + 1::2]) / np.sqrt(2.0)
    out[iu] = vals
    out[(iu[1], iu[0])] = vals.conj()
    return out


# ---------------------------------------------------------------------------
# problem dump (external debugging interface)

DUMP_FORMAT_VERSION = 1


def dump_problem(problem, path):
    """Serialize a problem to a single .npz archive.

    Schema (stable across versions; see README):
      meta           JSON string: format version, problem name, variable
                     table (name, kind, meta, offset, size), cone table
                     (kind, size), objective constant.
      c              (n,) float64 objective coefficients.
      cone{i}_A      affine map of cone i; PSD cones use svec coordinates
                     (m*m rows), SOC cones plain coordinates.
      cone{i}_b      constant offset of cone i, same coordinates.
    """
    maps = problem.dense_cone_maps()
    meta = {
        "format_version": DUMP_FORMAT_VERSION,
        "name": problem.name,
        "obj_const": problem.obj_const,
        "variables": [
            {"name": v.name, "kind": v.kind, "meta": list(v.meta),
             "offset": v.offset, "size": v.size}
            for v in problem.variables.values()
        ],
        "cones": [{"kind": kind, "size": size} for (_, _, kind, size) in maps],
    }
    payload = {"meta": np.array(json.dumps(meta)), "c": problem.c}
    for i, (a_mat, b, _, _) in enumerate(maps):
        payload[f"cone{i}_A"] = a_mat
        payload[f"cone{i}_b"] = b
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **payload)


def load_problem_dump(path):
    """Read a dump back as plain arrays (meta dict, c, list of (A, b, kind, size))."""
    with np.load(path, allow_pickle=False) as arc:
        meta = json.loads(str(arc["meta"]))
        c = arc["c"]
        cones = [
            (arc[f"cone{i}_A"], arc[f"cone{i}_b"], entry["kind"], entry["size"])
            for i, entry in enumerate(meta["cones"])
        ]
    return meta, c, cones
