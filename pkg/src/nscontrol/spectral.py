"""Dense spectral workspace for cube-truncated fields.

The time integrators work on complex coefficient arrays indexed by the
signed modes of a cube truncation, with conjugate symmetry between a mode
and its negative.  Convection is a vectorized mode-pair convolution with
projection back onto the truncation and onto divergence-free directions;
that combination is the Galerkin closure of the dynamics.

Real coordinates for linear algebra use the deterministic polarization
pair of every canonical mode, giving 4 coordinates per mode pair (cosine
and sine amplitudes along each polarization).  These parameterize exactly
the divergence-free fields of the truncation, and Sobolev weights are
diagonal in them.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import wavevec
from .fields import TrigField
from .wavevec import mode_sort_key


class SpectralBasis:
    """Signed-mode enumeration of the cube |l|_inf <= cutoff with fast
    convection and coordinate maps.  Instances are immutable and cached
    tables make repeated products cheap."""

    def __init__(self, cutoff):
        if cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        self.cutoff = int(cutoff)
        rng = range(-cutoff, cutoff + 1)
        canonical = [
            ell for ell in itertools.product(rng, rng, rng)
            if ell != (0, 0, 0) and wavevec.is_canonical(ell)
        ]
        canonical.sort(key=mode_sort_key)
        self.canonical = canonical
        self.n_pairs = len(canonical)
        signed = canonical + [wavevec.negate(m) for m in canonical]
        self.signed = signed
        self.n_signed = len(signed)
        self.index = {m: i for i, m in enumerate(signed)}
        self.ell = np.array(signed, dtype=float)
        self.lam = np.einsum("ic,ic->i", self.ell, self.ell)
        self.neg = np.array(
            [self.index[wavevec.negate(m)] for m in signed], dtype=np.int64
        )
        pol = np.empty((self.n_pairs, 2, 3))
        for i, m in enumerate(canonical):
            basis = wavevec.polarization_basis(m)
            pol[i, 0] = basis.l_plus
            pol[i, 1] = basis.l_minus
        self.pol = pol
        self._tables = {}
        self.n_coords = 4 * self.n_pairs

    # -- field <-> coefficient array -----------------------------------------

    def encode(self, f, strict=True):
        hat = np.zeros((self.n_signed, 3), dtype=complex)
        n = self.n_pairs
        for ell, (a, b) in f.items():
            i = self.index.get(ell)
            if i is None:
                if strict:
                    raise ValueError(f"mode {ell} outside the cutoff-{self.cutoff} truncation")
                continue
            av = np.array([float(c) for c in a])
            bv = np.array([float(c) for c in b])
            hat[i] = 0.5 * (av - 1j * bv)
            hat[i + n] = 0.5 * (av + 1j * bv)
        return hat

    def decode(self, hat):
        n = self.n_pairs
        coeffs = {}
        a = 2.0 * hat[:n].real
        b = -2.0 * hat[:n].imag
        peak = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
        cut = 1e-14 * peak
        for i, m in enumerate(self.canonical):
            if np.abs(a[i]).max() > cut or np.abs(b[i]).max() > cut:
                coeffs[m] = (tuple(a[i]), tuple(b[i]))
        return TrigField(coeffs, validate=False)

    # -- real polarization coordinates ---------------------------------------

    def coords(self, hat):
        n = self.n_pairs
        a = 2.0 * hat[:n].real
        b = -2.0 * hat[:n].imag
        c = np.empty((n, 4))
        c[:, 0] = np.einsum("ic,ic->i", a, self.pol[:, 0])
        c[:, 1] = np.einsum("ic,ic->i", a, self.pol[:, 1])
        c[:, 2] = np.einsum("ic,ic->i", b, self.pol[:, 0])
        c[:, 3] = np.einsum("ic,ic->i", b, self.pol[:, 1])
        return c.ravel()

    def from_coords(self, x):
        n = self.n_pairs
        c = np.asarray(x, dtype=float).reshape(n, 4)
        a = c[:, 0, None] * self.pol[:, 0] + c[:, 1, None] * self.pol[:, 1]
        b = c[:, 2, None] * self.pol[:, 0] + c[:, 3, None] * self.pol[:, 1]
        hat = np.empty((self.n_signed, 3), dtype=complex)
        hat[:n] = 0.5 * (a - 1j * b)
        hat[n:] = 0.5 * (a + 1j * b)
        return hat

    def field_coords(self, f, strict=True):
        return self.coords(self.encode(f, strict=strict))

    def sobolev_weights(self, k):
        w = self.lam[: self.n_pairs] ** (k / 2.0)
        return np.repeat(w, 4)

    def norm_k(self, hat, k):
        w = self.lam**k
        return float(np.sqrt(2.0 * np.sum(w[:, None] * np.abs(hat) ** 2)))

    # -- convection -----------------------------------------------------------

    def pair_table(self, rows=None, cols=None):
        key = (None if rows is None else tuple(rows),
               None if cols is None else tuple(cols))
        table = self._tables.get(key)
        if table is None:
            ridx = range(self.n_signed) if rows is None else rows
            cidx = range(self.n_signed) if cols is None else cols
            table = np.full((len(ridx), len(cidx)), -1, dtype=np.int64)
            for i, ri in enumerate(ridx):
                li = self.signed[ri]
                for j, cj in enumerate(cidx):
                    m = wavevec.add(li, self.signed[cj])
                    table[i, j] = self.index.get(m, -1)
            self._tables[key] = table
        return table

    def convect(self, u_hat, v_hat, rows=None, cols=None):
        """Projected convection of u against v on the truncation.

        Returns the coefficient array of Pi(<u,grad>v) with products leaving
        the cube dropped (Galerkin closure).  Restricting ``rows``/``cols``
        to the supports of u/v skips structurally zero pairs.
        """
        table = self.pair_table(rows, cols)
        u_sel = u_hat if rows is None else u_hat[list(rows)]
        v_sel = v_hat if cols is None else v_hat[list(cols)]
        ell_c = self.ell if cols is None else self.ell[list(cols)]
        scal = u_sel @ ell_c.T
        terms = (1j * scal)[:, :, None] * v_sel[None, :, :]
        valid = table >= 0
        idx = table[valid]
        tv = terms[valid]
        out = np.empty((self.n_signed, 3), dtype=complex)
        for c in range(3):
            out[:, c] = (
                np.bincount(idx, weights=tv[:, c].real, minlength=self.n_signed)
                + 1j * np.bincount(idx, weights=tv[:, c].imag, minlength=self.n_signed)
            )
        # mode-wise divergence-free projection
        d = np.einsum("ic,ic->i", out, self.ell) / self.lam
        out -= d[:, None] * self.ell
        # enforce conjugate symmetry exactly
        out = 0.5 * (out + np.conj(out[self.neg]))
        return out

    def q_form(self, v_hat, w_hat, v_rows=None, w_rows=None):
        """Symmetrised convection <v,grad>w + <w,grad>v, projected."""
        return (self.convect(v_hat, w_hat, rows=v_rows, cols=w_rows)
                + self.convect(w_hat, v_hat, rows=w_rows, cols=v_rows))

    def support_indices(self, f):
        idx = []
        for ell in f.support():
            i = self.index.get(ell)
            if i is not None:
                idx.append(i)
                idx.append(self.neg[i])
        return sorted(int(i) for i in idx)

    def convection_matrix(self, w_hat, w_rows=None):
        """Real-coordinate matrix of v -> Q(v, w) for a fixed field w."""
        n4 = self.n_coords
        mat = np.empty((n4, n4))
        basis_vec = np.zeros(n4)
        for j in range(n4):
            basis_vec[j] = 1.0
            vh = self.from_coords(basis_vec)
            mat[:, j] = self.coords(self.q_form(vh, w_hat, w_rows=w_rows))
            basis_vec[j] = 0.0
        return mat
