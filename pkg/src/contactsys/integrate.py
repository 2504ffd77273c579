"""Batched adaptive Runge-Kutta integration with constraint projection.

Every trajectory in a batch keeps its own time and step size; only the rows
still running are advanced, so thousands of orbits cost a handful of
vectorized right-hand-side calls per step. The method is the Dormand-Prince
8(5,3) pair. After each accepted step the state is projected back onto the
constraint set and the size of that correction is added to the error budget.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .errors import ConstraintDriftError, StepSizeUnderflowError

_S = _dop.N_STAGES
_A = _dop.A[:_S, :_S]
_B = _dop.B
_E3 = _dop.E3
_E5 = _dop.E5
_ERR_EXP = -1.0 / 8.0


@dataclass
class SectionEvent:
    """Terminal event: first upward zero of ``g`` that ``accept`` admits.

    ``g(Y, rows)`` and ``accept(Y, rows)`` receive the states of the listed
    batch rows. Crossings earlier than ``t_min`` are ignored.
    """

    g: Callable
    accept: Callable
    t_min: object = 0.0
    xtol: float = 1e-13


@dataclass
class BatchResult:
    y: np.ndarray
    t: np.ndarray
    error_budget: np.ndarray
    projection_total: np.ndarray
    samples: Optional[np.ndarray] = None
    event_t: Optional[np.ndarray] = None
    event_y: Optional[np.ndarray] = None
    steps: Optional[list] = None
    nfev: int = 0
    nsteps: int = 0


def _rk_step(rhs, Y, F0, h):
    m, d = Y.shape
    K = np.empty((_S + 1, m, d))
    K[0] = F0
    for s in range(1, _S):
        dy = np.tensordot(_A[s, :s], K[:s], axes=(0, 0))
        K[s] = rhs(Y + h[:, None] * dy)
    Ynew = Y + h[:, None] * np.tensordot(_B, K[:_S], axes=(0, 0))
    K[_S] = rhs(Ynew)
    return Ynew, K


def _error_norm(K, h, Y, Ynew, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(Y), np.abs(Ynew))
    e5 = np.tensordot(_E5, K, axes=(0, 0)) / scale
    e3 = np.tensordot(_E3, K, axes=(0, 0)) / scale
    n5 = np.sum(e5 * e5, axis=1)
    n3 = np.sum(e3 * e3, axis=1)
    denom = n5 + 0.01 * n3
    safe = np.where(denom > 0, denom, 1.0)
    out = np.abs(h) * n5 / np.sqrt(safe * Y.shape[1])
    return np.where(denom > 0, out, 0.0), scale


def _refine_crossing(rhs, Y0, F0, h, g, rows, xtol, max_iter=80):
    """Illinois iteration for the step fraction where ``g`` changes sign."""
    lo = np.zeros(len(rows))
    hi = np.ones(len(rows))
    g_lo = g(Y0, rows)
    Yh, _ = _rk_step(rhs, Y0, F0, h)
    g_hi = g(Yh, rows)
    Ybest = Yh.copy()
    theta = np.ones(len(rows))
    side = np.zeros(len(rows), dtype=int)
    for _ in range(max_iter):
        todo = (hi - lo) * h > xtol
        if not todo.any():
            break
        denom = g_hi - g_lo
        th = np.where(denom != 0, lo - g_lo * (hi - lo) / np.where(denom != 0, denom, 1.0), 0.5 * (lo + hi))
        # keep strictly inside the bracket
        th = np.clip(th, lo + 0.01 * (hi - lo), hi - 0.01 * (hi - lo))
        sub = np.nonzero(todo)[0]
        Yt, _ = _rk_step(rhs, Y0[sub], F0[sub], th[sub] * h[sub])
        gt = g(Yt, rows[sub])
        theta[sub] = th[sub]
        Ybest[sub] = Yt
        upper = gt >= 0
        i_up, i_lo = sub[upper], sub[~upper]
        hi[i_up], g_hi[i_up] = th[i_up], gt[upper]
        g_lo[i_up[side[i_up] == 1]] *= 0.5
        side[i_up] = 1
        lo[i_lo], g_lo[i_lo] = th[i_lo], gt[~upper]
        g_hi[i_lo[side[i_lo] == -1]] *= 0.5
        side[i_lo] = -1
        exact = np.abs(gt) == 0
        hi[sub[exact]] = lo[sub[exact]] = th[sub[exact]]
    return theta, Ybest


def integrate(rhs, X0, t_end, tol, *, project=None, residual=None, record_times=None,
              event=None, keep_steps=False, max_steps=200000, h_init=None, max_step=0.5):
    """Integrate the autonomous system ``dY/dt = rhs(Y)`` for a batch of states.

    Parameters
    ----------
    rhs : callable
        ``(M, D) -> (M, D)``.
    X0 : ndarray, shape (N, D)
    t_end : float or ndarray, shape (N,)
        Non-negative end times.
    tol : float
        Relative and absolute local tolerance.
    project : callable, optional
        Maps states back onto the constraint set after every accepted step.
    residual : callable, optional
        Constraint residual ``(M, D) -> (M,)``; values above ``100 * tol``
        before projection raise :class:`ConstraintDriftError`.
    record_times : sequence of float, optional
        Common output times; the states are stored in ``result.samples``.
    event : SectionEvent, optional
        Terminal section crossing; rows stop at their first admitted crossing.
    max_step : float
        Cap on the step size; keeps trial stages near the constraint set.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    n, d = X0.shape
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (n,)).copy()
    if np.any(t_end < 0):
        raise ValueError("end times must be non-negative")
    rtol = atol = float(tol)
    R = np.array(sorted(record_times), dtype=float) if record_times is not None else np.empty(0)
    samples = np.full((n, len(R), d), np.nan) if len(R) else None
    rec = np.zeros(n, dtype=int)
    if len(R):
        at0 = R <= 0.0
        samples[:, at0] = X0[:, None, :]
        rec[:] = int(at0.sum())

    Y = X0.copy()
    t = np.zeros(n)
    F = rhs(Y)
    nfev = 1
    h0 = h_init if h_init is not None else float(np.clip(0.5 * tol ** (1.0 / 8.0), 1e-4, 0.5))
    h = np.full(n, min(h0, max_step))
    budget = np.zeros(n)
    proj = np.zeros(n)
    active = t_end > 0
    steps = [[(0.0, X0[i].copy())] for i in range(n)] if keep_steps else None

    ev_t = ev_y = g_prev = None
    t_min = None
    if event is not None:
        ev_t = np.full(n, np.nan)
        ev_y = np.full((n, d), np.nan)
        g_prev = event.g(Y, np.arange(n))
        t_min = np.broadcast_to(np.asarray(event.t_min, dtype=float), (n,))

    nsteps = 0
    while active.any():
        nsteps += 1
        if nsteps > max_steps:
            raise StepSizeUnderflowError(f"step budget of {max_steps} exhausted")
        idx = np.nonzero(active)[0]
        ti = t[idx]
        stop = t_end[idx].copy()
        if len(R):
            pending = rec[idx] < len(R)
            stop[pending] = np.minimum(stop[pending], R[rec[idx][pending]])
        h_want = h[idx]
        room = stop - ti
        hit = h_want >= room * (1 - 1e-12)
        hi = np.where(hit, room, h_want)

        Ynew, K = _rk_step(rhs, Y[idx], F[idx], hi)
        nfev += _S
        err, scale = _error_norm(K, hi, Y[idx], Ynew, rtol, atol)
        finite = np.all(np.isfinite(Ynew), axis=1) & np.isfinite(err)
        err = np.where(finite, err, np.inf)
        acc = err <= 1.0
        with np.errstate(divide="ignore"):
            factor = np.where(err == 0, 10.0, np.clip(0.9 * err ** _ERR_EXP, 0.2, 10.0))
        factor = np.where(acc, factor, np.minimum(factor, 0.9))
        factor = np.where(finite, factor, 0.2)
        h_next = np.where(acc & hit, np.maximum(h_want, hi * factor), hi * factor)
        h_next = np.minimum(h_next, max_step)
        h[idx] = h_next
        small = h_next < 1e-14 * np.maximum(1.0, np.abs(ti))
        if np.any(small & ~acc):
            raise StepSizeUnderflowError(
                f"step size underflow at t = {ti[small & ~acc][0]:.6g}")
        if not acc.any():
            continue

        ia = idx[acc]
        Ya = Ynew[acc]
        if residual is not None:
            r = residual(Ya)
            if np.any(r > 100 * tol):
                raise ConstraintDriftError(
                    f"constraint drift {r.max():.3e} exceeds 100 x tol = {100 * tol:.1e}")
        if project is not None:
            Yp = project(Ya)
            dp = np.linalg.norm(Yp - Ya, axis=1)
        else:
            Yp, dp = Ya, np.zeros(len(ia))
        local = err[acc] * np.sqrt(np.mean(scale[acc] ** 2, axis=1))
        budget[ia] += local + dp
        proj[ia] += dp
        t_new = np.where(hit[acc], stop[acc], ti[acc] + hi[acc])
        Fa = K[_S][acc]

        done_event = np.zeros(len(ia), dtype=bool)
        if event is not None:
            g_new = event.g(Yp, ia)
            cand = (g_prev[ia] < 0) & (g_new >= 0) & (t_new > t_min[ia])
            if cand.any():
                # refine first: admissibility is judged at the crossing itself
                ci = np.nonzero(cand)[0]
                rows = ia[ci]
                theta, Yc = _refine_crossing(rhs, Y[rows], F[rows], hi[acc][ci], event.g, rows, event.xtol)
                if project is not None:
                    Yc = project(Yc)
                ok = event.accept(Yc, rows)
                ci, rows, theta, Yc = ci[ok], rows[ok], theta[ok], Yc[ok]
                if len(ci):
                    ev_t[rows] = ti[acc][ci] + theta * hi[acc][ci]
                    ev_y[rows] = Yc
                    done_event[ci] = True
            g_prev[ia] = g_new

        Y[ia] = Yp
        F[ia] = Fa
        t[ia] = t_new
        if keep_steps:
            for j, row in enumerate(ia):
                steps[row].append((float(t_new[j]), Yp[j].copy()))
        if len(R):
            for j, row in enumerate(ia):
                while rec[row] < len(R) and R[rec[row]] <= t_new[j] * (1 + 1e-14):
                    samples[row, rec[row]] = Yp[j]
                    rec[row] += 1
        fin = (t_new >= t_end[ia]) | done_event
        if event is not None:
            for j in np.nonzero(done_event)[0]:
                row = ia[j]
                t[row] = ev_t[row]
                Y[row] = ev_y[row]
                if keep_steps:
                    steps[row][-1] = (float(ev_t[row]), ev_y[row].copy())
        active[ia[fin]] = False

    return BatchResult(y=Y, t=t, error_budget=budget, projection_total=proj, samples=samples,
                       event_t=ev_t, event_y=ev_y, steps=steps, nfev=nfev, nsteps=nsteps)
