"""Radial 1D solver for the separated mode equations.

Every separated equation of both cavities reduces, for the azimuthal-potential
field family used here, to normal form

    u''(s) + Q(s) u(s) = 0,   s in (0, s_end],

where s measures distance from a regular-singular endpoint (coordinate focus
or axis) at which ``s*Q(s)`` is analytic and the physical solution behaves as
``u ~ s``.  The wall condition at ``s_end`` is of Dirichlet (u = 0) or
Neumann (u' = 0) type depending on the problem.

The propagator is Numerov on a piecewise-uniform "ladder" grid whose step
halves toward the singular endpoint (dyadic ratios, so the three-term
recurrence hands over exactly between segments).  It is vectorized over a
batch of parameter values (frequencies or separation constants), which is
what makes dense eigenvalue scans affordable; node counts, weighted norm
integrals and decimated profile storage are accumulated inside the same
sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "RadialProblem",
    "Segment",
    "PropagationResult",
    "ladder_grid",
    "propagate",
    "NoRootInBracket",
    "ShootingFailure",
    "shoot_eigen",
    "refine_roots",
]


class NoRootInBracket(ValueError):
    """The shooting mismatch does not change sign over the given bracket."""


class ShootingFailure(RuntimeError):
    """Shooting refinement failed to reach the requested mismatch tolerance."""


@dataclass(frozen=True)
class RadialProblem:
    """Normal-form radial problem u'' + Q(s; p) u = 0 with u ~ s at s = 0.

    ``Q`` must broadcast ``Q(s[:, None], params)`` over a 1D parameter batch;
    ``A`` and ``B0`` return the endpoint series data ``A = (sQ)(0)`` and
    ``B0 = (sQ)'(0)`` for the same batch.  ``bc`` names the wall condition
    used in eigenvalue searches ("neumann" for u'(s_end) = 0, "dirichlet"
    for u(s_end) = 0).
    """

    label: str
    s_end: float
    Q: Callable[[np.ndarray, dict], np.ndarray]
    A: Callable[[dict], np.ndarray]
    B0: Callable[[dict], np.ndarray]
    bc: str = "neumann"


@dataclass(frozen=True)
class Segment:
    s0: float
    h: float
    n: int  # number of steps; nodes s0 + j*h, j = 0..n

    @property
    def s1(self) -> float:
        return self.s0 + self.n * self.h


@dataclass
class PropagationResult:
    """Batched outcome of one Numerov sweep."""

    u_end: np.ndarray
    du_end: np.ndarray
    nodes: np.ndarray
    max_abs: np.ndarray
    q_end: np.ndarray | None = None
    last_edge_cross: np.ndarray | None = None
    integrals: list[np.ndarray] = field(default_factory=list)
    s_stored: np.ndarray | None = None
    u_stored: np.ndarray | None = None
    du_stored: np.ndarray | None = None

    def mismatch(self, bc: str) -> np.ndarray:
        """Dimensionless wall mismatch; its sign changes locate modes.

        The derivative condition is scaled by the local wave scale
        sqrt(|Q|) so both mismatch kinds share the amplitude-relative
        1e-10 tolerance.
        """
        if bc == "neumann":
            scale = np.sqrt(np.abs(self.q_end)) if self.q_end is not None else 1.0
            return self.du_end / (self.max_abs * np.maximum(scale, 1e-300))
        if bc == "dirichlet":
            return self.u_end / self.max_abs
        raise ValueError(f"unknown boundary condition {bc!r}")


def _batch_size(params: dict) -> int:
    n = 1
    for v in params.values():
        n = max(n, np.size(v))
    return n


def ladder_grid(problem: RadialProblem, params: dict, ppo: float = 25.0,
                s_end: float | None = None, series_arg: float = 1e-3) -> list[Segment]:
    """Dyadic ladder grid, fine near s = 0, ``ppo`` points per wavelength.

    Built downward from the wall so that every segment's step is exactly
    twice the next finer one; the bottom segment starts within one step of
    the singular endpoint, close enough for the three-term series seed.
    """
    if s_end is None:
        s_end = problem.s_end
    A_max = float(np.max(np.abs(problem.A(params)))) + 1e-300
    B0_max = float(np.max(np.abs(problem.B0(params))))
    probes = np.geomspace(s_end * 1e-3, s_end, 40)
    qv = np.atleast_2d(problem.Q(probes[:, None], params))
    a_over_s = np.reshape(np.abs(problem.A(params)), (1, -1)) / probes[:, None]
    q_flat = max(float(np.max(np.abs(qv) + a_over_s)), B0_max, (2.0 / s_end) ** 2)

    scale = max(A_max, math.sqrt(q_flat))
    h_seed = 0.5 * series_arg / scale          # bottom step small enough for the series
    cstep = 2.0 * math.pi / ppo

    def h_allowed(s):
        return cstep / math.sqrt(A_max / s + q_flat)

    def s_floor(h):
        # smallest s at which step h still resolves the local wavelength
        d = (cstep / h) ** 2 - q_flat
        return A_max / d if d > 0 else 0.0

    h_top = min(h_allowed(s_end), s_end / 8.0)
    # dyadic levels below the top step until the series-seed scale is met
    levels = max(0, int(math.ceil(math.log2(max(h_top / h_seed, 1.0)))))
    h_seed = h_top / 2.0 ** levels

    segs_rev: list[Segment] = []
    s_hi = s_end
    h = h_top
    while True:
        # the wall segment must hold the 5-point end-derivative stencil
        n_min = 6 if not segs_rev else 2
        if h <= h_seed * 1.0000001:
            # bottom segment: start within (0, 2h] of the endpoint, which
            # keeps the 3-term series seed at full accuracy; even step
            # counts keep the in-sweep Simpson rule exact everywhere
            n = max(int(math.ceil(s_hi / h)) - 1, n_min)
            n += n % 2
            while s_hi - n * h <= 0.0 and n > 2:
                n -= 2
            segs_rev.append(Segment(s_hi - n * h, h, n))
            break
        # descend at least geometrically even when the wavelength does not
        # force it, so the seed region is reached in O(log) segments
        lo = max(s_floor(h), 2.0 * h)
        # leave room below for at least two steps of the next (halved) level
        n_cap = int(math.floor(s_hi / h - 1.5))
        n_cap -= n_cap % 2
        n = int(math.ceil((s_hi - lo) / h))
        n += n % 2
        n = min(max(n, n_min), n_cap)
        if n < n_min:
            h *= 0.5  # this level has no room; fold it into finer ones
            continue
        segs_rev.append(Segment(s_hi - n * h, h, n))
        s_hi -= n * h
        h *= 0.5
    return list(reversed(segs_rev))


_END_STENCIL = np.array([3.0, -16.0, 36.0, -48.0, 25.0]) / 12.0


def propagate(problem: RadialProblem, params: dict, grid: Sequence[Segment],
              weights: Sequence[Callable[[float], float]] = (),
              store_stride: int = 0, chunk: int = 384) -> PropagationResult:
    """Numerov sweep from the singular endpoint to the wall, batched.

    ``weights`` are scalar functions W(s); the result accumulates composite
    Simpson values of ``int u(s)^2 W(s) ds`` for each.  ``store_stride``
    keeps every n-th raw sample of u (and a fitted u') for interpolation;
    0 disables storage.
    """
    n_b = _batch_size(params)
    A = np.broadcast_to(np.asarray(problem.A(params), dtype=float), (n_b,)).copy()
    B0 = np.broadcast_to(np.asarray(problem.B0(params), dtype=float), (n_b,)).copy()
    a1 = -0.5 * A
    a2 = (0.5 * A * A - B0) / 6.0

    def q_of(s_arr):
        s_arr = np.atleast_1d(np.asarray(s_arr, dtype=float))
        out = np.asarray(problem.Q(s_arr[:, None], params), dtype=float)
        return np.broadcast_to(out, (s_arr.size, n_b))

    nodes = np.zeros(n_b, dtype=np.int64)
    n_w = len(weights)
    # endpoint sliver [0, s0] from the series seed (8-point Gauss-Legendre)
    s0_seg = grid[0].s0
    gl_x, gl_w = np.polynomial.legendre.leggauss(8)
    s_gl = 0.5 * s0_seg * (gl_x + 1.0)
    w_gl = 0.5 * s0_seg * gl_w
    u_gl = s_gl[:, None] * (1.0 + s_gl[:, None] * (a1[None, :]
                                                   + s_gl[:, None] * a2[None, :]))
    integ = []
    for W in weights:
        wv = np.array([W(s) for s in s_gl])
        integ.append((w_gl * wv) @ (u_gl * u_gl))

    first = grid[0]
    h = first.h
    s0 = first.s0
    u_prev = s0 * (1.0 + s0 * (a1 + s0 * a2))
    u_curr = (s0 + h) * (1.0 + (s0 + h) * (a1 + (s0 + h) * a2))
    qq = q_of([s0, s0 + h])
    q_prev, q_curr = qq[0].copy(), qq[1].copy()
    max_abs = np.maximum(np.abs(u_prev), np.abs(u_curr))

    u_hist: list[np.ndarray] = [u_prev.copy(), u_curr.copy()]
    q_hist: list[np.ndarray] = [q_prev.copy(), q_curr.copy()]

    stored_s: list[float] = []
    stored_u: list[np.ndarray] = []
    tail_u: list[np.ndarray] = []
    global_step = 0

    for i_seg, seg in enumerate(grid):
        if i_seg > 0:
            m = int(round(seg.h / h))
            if m < 1 or abs(seg.h / h - m) > 1e-9:
                raise ValueError("segment steps must be integer multiples")
            h = seg.h
            u_prev = u_hist[-1 - m]
            q_prev = q_hist[-1 - m]
            u_curr = u_hist[-1]
            q_curr = q_hist[-1]
            n_left = seg.n
            pair_phase = 0
        else:
            n_left = seg.n - 1
            pair_phase = 1
        h2 = h * h / 12.0
        # summed-increment form of the recurrence: with y = (1 + h^2 Q/12) u
        # it reads y_{n+1} = y_n + delta_n, delta_n = delta_{n-1} - h^2 Q u,
        # which avoids the 2u - u_prev cancellation and its roundoff growth
        y_curr = u_curr * (1.0 + h2 * q_curr)
        delta = y_curr - u_prev * (1.0 + h2 * q_prev)
        s_start = seg.s1 - n_left * h  # node preceding the first computed one
        last_seg = i_seg == len(grid) - 1
        done = 0
        while done < n_left:
            nblk = min(chunk, n_left - done)
            s_blk = s_start + h * np.arange(done + 1, done + nblk + 1)
            q_blk = q_of(s_blk)
            for j in range(nblk):
                q_next = q_blk[j]
                delta = delta - (h * h) * q_curr * u_curr
                y_curr = y_curr + delta
                u_next = y_curr / (1.0 + h2 * q_next)
                nodes += u_curr * u_next < 0.0
                np.maximum(max_abs, np.abs(u_next), out=max_abs)
                pair_phase += 1
                if pair_phase == 2 and n_w:
                    s_c = s_blk[j]
                    for iw, W in enumerate(weights):
                        integ[iw] += (h / 3.0) * (
                            u_prev * u_prev * W(s_c - 2.0 * h)
                            + 4.0 * u_curr * u_curr * W(s_c - h)
                            + u_next * u_next * W(s_c))
                if pair_phase == 2:
                    pair_phase = 0
                u_prev, q_prev = u_curr, q_curr
                u_curr, q_curr = u_next, q_next
                u_hist.append(u_curr)
                q_hist.append(q_next)
                if len(u_hist) > 12:
                    del u_hist[:-6], q_hist[:-6]
                global_step += 1
                if store_stride and global_step % store_stride == 0:
                    stored_s.append(s_blk[j])
                    stored_u.append(u_curr.astype(np.float64))
                if last_seg and n_left - (done + j) <= 5:
                    tail_u.append(u_curr.copy())
            done += nblk
        if n_w and pair_phase == 1:
            # odd step count: close the last interval with a trapezoid
            for iw, W in enumerate(weights):
                integ[iw] += 0.5 * h * (u_prev * u_prev * W(seg.s1 - h)
                                        + u_curr * u_curr * W(seg.s1))
            pair_phase = 0

    tail = np.stack(tail_u[-5:], axis=0)
    du_end = (_END_STENCIL @ tail.reshape(5, n_b)) / h
    res = PropagationResult(u_end=u_curr, du_end=du_end, nodes=nodes,
                            max_abs=max_abs, q_end=q_curr,
                            last_edge_cross=(u_prev * u_curr < 0.0),
                            integrals=integ)
    if store_stride:
        res.s_stored = np.asarray(stored_s)
        res.u_stored = np.stack(stored_u, axis=0)
        res.du_stored = _stored_derivative(res.s_stored, res.u_stored)
    return res


def _stored_derivative(s, u):
    """Derivative of decimated samples by local 5-point polynomial fits."""
    du = np.empty_like(u)
    n = len(s)
    if n < 5:
        for i in range(n):
            du[i] = np.gradient(u, s, axis=0)[i]
        return du
    e1 = np.eye(5)[1]
    for i in range(n):
        lo = min(max(i - 2, 0), n - 5)
        idx = np.arange(lo, lo + 5)
        x = s[idx] - s[i]
        w = np.linalg.solve(np.vander(x, 5, increasing=True).T, e1)
        du[i] = w @ u[idx]
    return du


def _merge_params(pa: dict, pb: dict) -> dict:
    return {k: np.concatenate([np.atleast_1d(np.asarray(pa[k], dtype=float)),
                               np.atleast_1d(np.asarray(pb[k], dtype=float))])
            for k in pa}


def shoot_eigen(problem: RadialProblem, params_of: Callable[[float], dict],
                bracket: tuple[float, float], bc: str | None = None,
                ppo: float = 120.0, tol: float = 1e-10,
                max_iter: int = 200):
    """Refine one eigenvalue by safeguarded secant on the wall mismatch.

    ``params_of`` maps the searched scalar (frequency or separation
    constant) to the problem parameter dict.  The bracket must straddle a
    sign change; refinement stops once the normalized mismatch magnitude
    falls below ``tol``.  Returns ``(eigenvalue, PropagationResult)`` with
    stored profile samples.

    Raises :class:`NoRootInBracket` or :class:`ShootingFailure`.
    """
    if bc is None:
        bc = problem.bc
    grid = ladder_grid(problem, _merge_params(params_of(bracket[0]),
                                              params_of(bracket[1])), ppo=ppo)

    def m(x):
        return float(propagate(problem, params_of(x), grid).mismatch(bc)[0])

    a, b = float(bracket[0]), float(bracket[1])
    fa, fb = m(a), m(b)
    if fa == 0.0:
        b, fb = a, fa
    if np.sign(fa) == np.sign(fb) and fa != 0.0:
        raise NoRootInBracket(f"no sign change in {bracket} for {problem.label}")
    c, fc = b, fb
    side = 0
    for _ in range(max_iter):
        c = b - fb * (b - a) / (fb - fa) if fb != fa else 0.5 * (a + b)
        if not (min(a, b) < c < max(a, b)):
            c = 0.5 * (a + b)
        fc = m(c)
        if np.sign(fc) == np.sign(fa):
            a, fa = c, fc
            if side == 1:
                fb *= 0.5  # Illinois: damp the stale endpoint
            side = 1
        else:
            b, fb = c, fc
            if side == -1:
                fa *= 0.5
            side = -1
        if abs(fc) < tol or abs(b - a) < 4.0 * np.finfo(float).eps * max(abs(a), abs(b)):
            break
    best = min(((abs(fa), a), (abs(fb), b), (abs(fc), c)))
    if best[0] > tol:
        raise ShootingFailure(
            f"mismatch {best[0]:.3e} above tolerance {tol:.1e} for {problem.label}")
    x = best[1]
    res = propagate(problem, params_of(x), grid, store_stride=1)
    return x, res


def refine_roots(mismatch_batch: Callable[[np.ndarray], np.ndarray],
                 x_lo: np.ndarray, x_hi: np.ndarray,
                 f_lo: np.ndarray, f_hi: np.ndarray,
                 iters: int = 40, rtol: float = 1e-12) -> np.ndarray:
    """Vectorized safeguarded secant for many bracketed roots at once."""
    a = np.array(x_lo, dtype=float)
    b = np.array(x_hi, dtype=float)
    fa = np.array(f_lo, dtype=float)
    fb = np.array(f_hi, dtype=float)
    side = np.zeros(len(a), dtype=np.int8)
    for _ in range(iters):
        denom = np.where(fb != fa, fb - fa, 1.0)
        c = b - fb * (b - a) / denom
        mid = 0.5 * (a + b)
        bad = ~((c > np.minimum(a, b)) & (c < np.maximum(a, b)))
        c = np.where(bad, mid, c)
        fc = mismatch_batch(c)
        left = np.sign(fc) == np.sign(fa)
        fb = np.where(left & (side == 1), 0.5 * fb, fb)  # Illinois damping
        fa = np.where(~left & (side == -1), 0.5 * fa, fa)
        a = np.where(left, c, a)
        fa = np.where(left, fc, fa)
        b = np.where(left, b, c)
        fb = np.where(left, fb, fc)
        side = np.where(left, 1, -1).astype(np.int8)
        if np.all(np.abs(b - a) <= rtol * np.maximum(np.abs(a), np.abs(b))):
            break
    return 0.5 * (a + b)
