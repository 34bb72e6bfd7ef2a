"""Fixed real coordinate frame for 1-forms and symmetric 2-tensors.

Every differential object in the quaternionic layer is expanded over the
coordinate order

    (rho, b^1..b^n, t^1..t^n, zeta^0..zeta^n, zetatilde_0..zetatilde_n, sigma)

of dimension 4n + 4.  A 1-form is a length-(4n+4) coefficient vector (complex
allowed); a metric is a real symmetric (4n+4) x (4n+4) matrix.  Products of
1-forms are half-symmetrized, (a.b)(X, Y) = (a(X) b(Y) + a(Y) b(X)) / 2, so
that (dx.dx) has unit coefficient on the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Frame:
    """Index bookkeeping for the 4n+4 real coordinates."""

    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("need at least one modulus")

    @property
    def dim(self) -> int:
        return 4 * self.n + 4

    # index blocks
    @property
    def i_rho(self) -> int:
        return 0

    @property
    def s_b(self) -> slice:
        return slice(1, self.n + 1)

    @property
    def s_t(self) -> slice:
        return slice(self.n + 1, 2 * self.n + 1)

    @property
    def s_zeta(self) -> slice:
        return slice(2 * self.n + 1, 3 * self.n + 2)

    @property
    def s_zetatilde(self) -> slice:
        return slice(3 * self.n + 2, 4 * self.n + 3)

    @property
    def i_sigma(self) -> int:
        return 4 * self.n + 3

    def zero(self, dtype=complex) -> np.ndarray:
        return np.zeros(self.dim, dtype=dtype)

    def basis(self, index: int) -> np.ndarray:
        e = self.zero()
        e[index] = 1.0
        return e

    def d_rho(self) -> np.ndarray:
        return self.basis(self.i_rho)

    def d_sigma(self) -> np.ndarray:
        return self.basis(self.i_sigma)

    def d_b(self) -> np.ndarray:
        """Rows a = 1..n: the coordinate 1-forms db^a, shape (n, dim)."""
        rows = np.zeros((self.n, self.dim), dtype=complex)
        rows[:, self.s_b] = np.eye(self.n)
        return rows

    def d_t(self) -> np.ndarray:
        rows = np.zeros((self.n, self.dim), dtype=complex)
        rows[:, self.s_t] = np.eye(self.n)
        return rows

    def d_z(self) -> np.ndarray:
        """dz^a = db^a + i dt^a, shape (n, dim)."""
        return self.d_b() + 1j * self.d_t()

    def d_zeta(self) -> np.ndarray:
        """Rows I = 0..n: dzeta^I, shape (n+1, dim)."""
        rows = np.zeros((self.n + 1, self.dim), dtype=complex)
        rows[:, self.s_zeta] = np.eye(self.n + 1)
        return rows

    def d_zetatilde(self) -> np.ndarray:
        rows = np.zeros((self.n + 1, self.dim), dtype=complex)
        rows[:, self.s_zetatilde] = np.eye(self.n + 1)
        return rows


def sym(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Half-symmetrized product of two real 1-forms as a matrix."""
    m = np.outer(a, b)
    return 0.5 * (m + m.T)


def herm_square(w: np.ndarray) -> np.ndarray:
    """|w|^2 = w wbar as a real symmetric matrix; exact for any complex w."""
    m = np.outer(w, np.conj(w))
    return 0.5 * (m + m.T).real


def herm_contract(matrix: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """sum_ij M_ij w_i conj(w_j) for a stack of 1-forms, symmetrized.

    rows has shape (k, dim); matrix is (k, k).  The result is the real
    symmetric tensor of the sesquilinear combination; matrix is expected to
    make the scalar value real (Hermitian against the rows), and only the
    symmetric real part is kept.
    """
    e = np.einsum("ij,ix,jy->xy", matrix, rows, np.conj(rows))
    return 0.5 * (e + e.T).real
