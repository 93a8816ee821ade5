"""Register layout, walk-space functional calculus and stage operators.

Registers, outermost first: clock (m values), flag (two qubits; good = 00,
cont'd = 01, bad = 10), branch qubit, marking ancilla, walk space.  The
spectral backend adds an outer eigen-index u and represents the walk space of
eigenvalue u by its two walk eigenvectors; the matrix backend keeps the full
walk space (block qubit x system) in the computational basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..encodings import BlockEncoding, threshold_quartet, walk_operator
from ..errors import ParameterError
from ..numerics import spectral_decompose

GOOD, CONTD, BAD, SPARE = 0, 1, 2, 3
PLUS = np.array([1.0, 1.0]) / math.sqrt(2)
P_PLUS = np.outer(PLUS, PLUS)
P_MINUS = np.eye(2) - P_PLUS
X = np.array([[0.0, 1.0], [1.0, 0.0]])

# local legs: flag bit 1, flag bit 2, branch, marking ancilla, walk
BIT1, BIT2, BRANCH, ANC, WALK = range(5)


def embed(op, legs, dims):
    """Lift an operator on the listed legs (in that order) to all legs."""
    n = len(dims)
    rest = [i for i in range(n) if i not in legs]
    rest_dim = int(np.prod([dims[i] for i in rest])) if rest else 1
    full = np.kron(op, np.eye(rest_dim))
    order = list(legs) + rest
    T = full.reshape([dims[i] for i in order] * 2)
    perm = [order.index(i) for i in range(n)]
    T = T.transpose(perm + [n + p for p in perm])
    N = int(np.prod(dims))
    return T.reshape(N, N)


# --- walk calculus -----------------------------------------------------------------

class SpectralWalk:
    """Per-eigenvalue walk spaces spanned by the two walk eigenvectors."""

    kind = "spectral"

    def __init__(self, be: BlockEncoding):
        spec = be.spectrum()
        self.eigenvalues = spec.eigenvalues
        self.eigenvectors = spec.eigenvectors
        self.ratios = spec.eigenvalues / be.alpha_A
        self.outer = spec.dim
        self.walk_dim = 2

    def phases(self, u):
        t = math.acos(float(np.clip(self.ratios[u], -1, 1)))
        return np.array([t, -t])

    def basis(self, u):
        return np.eye(2, dtype=complex)

    def system_function(self, u, values):
        """f(A) restricted to the walk space of u, given f(lambda_u) as values[u]."""
        return values[u] * np.eye(2)

    def block_zero_state(self, u, system_vector):
        """Walk-space coordinates of |0>_blk |system_vector> (component along phi_u)."""
        g = np.vdot(self.eigenvectors[:, u], system_vector)
        return g * PLUS.astype(complex)

    def block_zero_component(self, u, walk_vector):
        """Project a walk-space vector on |0>_blk and return its system vector."""
        amp = np.vdot(PLUS, walk_vector)
        return amp * self.eigenvectors[:, u]


class MatrixWalk:
    """Full walk space in the computational basis; phases from a Schur decomposition of W."""

    kind = "matrix"

    def __init__(self, be: BlockEncoding):
        W = walk_operator(be)
        T, Z = sla.schur(W, output="complex")
        self._phases = np.angle(np.diag(T))
        self._basis = Z
        spec = spectral_decompose(be.matrix)
        self.eigenvalues = spec.eigenvalues
        self.eigenvectors = spec.eigenvectors
        self.d = be.system_dim
        self.outer = 1
        self.walk_dim = 2 * self.d

    def phases(self, u):
        return self._phases

    def basis(self, u):
        return self._basis

    def system_function(self, u, values):
        V = self.eigenvectors
        return np.kron(np.eye(2), (V * values) @ V.conj().T)

    def block_zero_state(self, u, system_vector):
        out = np.zeros(self.walk_dim, dtype=complex)
        out[: self.d] = system_vector
        return out

    def block_zero_component(self, u, walk_vector):
        return walk_vector[: self.d]


def make_walk(be, backend):
    if backend == "spectral":
        return SpectralWalk(be)
    if backend == "matrix":
        return MatrixWalk(be)
    raise ParameterError(f"unknown backend {backend!r}")


def quartet_on_walk(walk, u, quartet, sign, snap):
    """sum_v F(sign * theta_v) (x) |v><v| on (qubit (x) walk)."""
    th = walk.phases(u)
    Z = walk.basis(u)
    F = quartet.matrices(sign * th, snap=snap)
    w = th.shape[0]
    out = np.zeros((2, w, 2, w), dtype=complex)
    for a in range(2):
        for b in range(2):
            out[a, :, b, :] = (Z * F[:, a, b]) @ Z.conj().T
    return out.reshape(2 * w, 2 * w)


# --- layout -------------------------------------------------------------------------

class ClockFlagLayout:
    """Index bookkeeping for (outer, clock, flag, branch, ancilla, walk[, extra])."""

    def __init__(self, m, outer, walk_dim, extra=1):
        self.m = m
        self.outer = outer
        self.walk_dim = walk_dim
        self.extra = extra
        self.legs = (2, 2, 2, 2, walk_dim * extra)
        self.block = 16 * walk_dim * extra
        self.dim = outer * m * self.block
        idx = np.arange(self.dim)
        rem = idx % (m * self.block)
        self.clock = rem // self.block
        self.flag = (rem % self.block) // (4 * walk_dim * extra)
        self.outer_index = idx // (m * self.block)

    def offset(self, o, x):
        return (o * self.m + x) * self.block

    def clock_projection(self, j):
        if j == 0:
            return np.zeros(self.dim)
        if j >= self.m:
            return np.ones(self.dim)
        halted = (self.flag == GOOD) | (self.flag == BAD)
        return ((self.clock <= j - 1) & halted).astype(float)

    def flag_projection(self):
        return (self.flag == BAD).astype(float)

    def clock_controlled(self, local_blocks, x):
        """Block diagonal operator applying local_blocks[o] on clock x, identity elsewhere."""
        blocks = []
        eye = sp.identity(self.block, dtype=complex, format="csr")
        for o in range(self.outer):
            for c in range(self.m):
                blocks.append(sp.csr_matrix(local_blocks[o]) if c == x else eye)
        return sp.block_diag(blocks, format="csr")

    def on_every_clock(self, local_blocks):
        blocks = []
        for o in range(self.outer):
            B = sp.csr_matrix(local_blocks[o])
            blocks.extend([B] * self.m)
        return sp.block_diag(blocks, format="csr")

    def increment(self, x):
        """Swap |x, cont'd> with |x+1, cont'd> on every remaining register."""
        perm = np.arange(self.dim)
        span = self.block // 4
        for o in range(self.outer):
            a = self.offset(o, x) + CONTD * span
            b = self.offset(o, x + 1) + CONTD * span
            perm[a:a + span] = np.arange(b, b + span)
            perm[b:b + span] = np.arange(a, a + span)
        return sp.csr_matrix((np.ones(self.dim), (perm, np.arange(self.dim))), shape=(self.dim, self.dim))

    def local_state(self, flag, branch, anc, walk_vec):
        """Vector on one clock block."""
        f = np.zeros(4)
        f[flag] = 1.0
        return np.kron(np.kron(np.kron(f, branch), anc), walk_vec)

    def place(self, o, x, local):
        v = np.zeros(self.dim, dtype=complex)
        v[self.offset(o, x): self.offset(o, x) + self.block] = local
        return v

    def local_view(self, v):
        """Reshape a full vector to (outer, clock, flag, branch, anc, walk*extra)."""
        return v.reshape(self.outer, self.m, 4, 2, 2, self.walk_dim * self.extra)


# --- stage ingredients ---------------------------------------------------------------

def gpe_angles(gamma, rho=3):
    """(theta_0, phi) of the quartet separating |x| >= gamma from |x| <= gamma / rho."""
    if not (0 < gamma < 0.5):
        raise ParameterError("need 0 < gamma < 1/2 in units of alpha_A")
    lo, hi = math.acos(gamma), math.acos(gamma / rho)
    return (lo + hi) / 2, (hi - lo) / 2


def gpe_quartet(stage, eps, rho=3):
    theta0, phi = gpe_angles(3.0 ** (-stage), rho)
    return threshold_quartet(theta0, phi, eps * eps / 8)


def marking_quartet(eps):
    return threshold_quartet(math.pi / 6, math.pi / 6, eps * eps / 2)


def marking_local(walk, u, quartet, snap):
    """|0><0| (x) I + |1><1| (x) (-i V) on (branch, anc, walk)."""
    V = quartet_on_walk(walk, u, quartet, +1, snap)
    n = V.shape[0]
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    out[:n, :n] = np.eye(n)
    out[n:, n:] = -1j * V
    return out


def gpe_local(walk, u, quartet, snap):
    """Branch-controlled quartet on (branch, flag bit 2, walk)."""
    Vp = quartet_on_walk(walk, u, quartet, +1, snap)
    Vm = quartet_on_walk(walk, u, quartet, -1, snap)
    return np.kron(P_PLUS, Vp) + np.kron(P_MINUS, Vm)


def rotation_local(stage, m):
    """good -> (3^j/3^m) good + sqrt(1 - 9^j/9^m) bad, on the two flag bits."""
    c = 3.0 ** (stage - m)
    s = math.sqrt(max(0.0, 1 - c * c))
    R = np.eye(4)
    R[np.ix_([GOOD, BAD], [GOOD, BAD])] = [[c, -s], [s, c]]
    return R


@dataclass
class StageBlocks:
    """Local operators of one stage, one entry per outer index."""

    marking: list | None
    gpe: list | None
    rotation: np.ndarray | None


def xi_values(quartet, ratios, snap):
    """GPE outputs (xi_0, xi_1) at walk phase arccos(ratio)."""
    th = np.arccos(np.clip(ratios, -1, 1))
    fa, fb, fc, fd = quartet.evaluate(th, snap=snap)
    return fa + 1j * fb, 1j * fc - fd
