"""Constrained conditional SMC.

Builds a fresh particle system that contains a fixed reference trajectory and,
unlike plain conditional SMC, also reconstructs the base variates that
generate it: the state variate of each reference particle is obtained by
inverting the propagation map and the resampling uniform of each reference
slot is drawn inside the cumulative-weight interval of its fixed parent.  The
returned inputs therefore replay the whole system through :func:`run_smc`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateConstraintError, ModelEvaluationError, SingularModelError
from .hilbert import DEFAULT_ORDER
from .rng import RandomInputs, Stream, draw_inputs
from .smc import _run, _use_kernel, constrained_uniform, cumulative_weights
from .ssm import ParticleSystem, Trajectory

_MAX_NUDGE = 8


@dataclass
class CcsmcRun:
    system: ParticleSystem
    inputs: RandomInputs
    log_z_hat: float


def constrained_multinomial(stream: Stream, sorted_weights, zeta_inv, fixed_child, fixed_parent):
    """One constrained resampling step.

    Free slots get fresh uniforms; the slot ``fixed_child`` gets a uniform
    inside the interval of the parent's *sorted* position, so after unsorting
    its ancestor is ``fixed_parent``.  Returns ``(v_a, a_sorted)``.
    """
    w = np.asarray(sorted_weights, dtype=np.float64)
    v = stream.uniform(len(w))
    F = cumulative_weights(w)
    s = int(np.asarray(zeta_inv)[fixed_parent])
    v[fixed_child] = constrained_uniform(F, s, v[fixed_child])
    return v, np.searchsorted(F, v, side="left")


def _propagate_path(model, theta, kern, v, ref, y):
    """States reached from ``v`` along the reference path, per engine."""
    T = len(ref)
    if kern is not None:
        code, p = kern
        xp = np.empty(T)
        xp[1:] = ref[:-1]
        yp = np.empty(T)
        yp[1:] = y[:-1]
        first = np.zeros(T, dtype=np.bool_)
        first[0] = True
        return _kernels.prop_path(code, p, np.ascontiguousarray(v), xp, yp, first)
    out = np.empty_like(ref)
    out[:1] = model.propagate_initial(theta, v[:1])
    if T > 1:
        out[1:] = model.propagate(theta, v[1:], ref[:-1], y[:-1])
    return out


def invert_reference(model, theta, ref, y, u, kern=None) -> np.ndarray:
    """State variates that reproduce ``ref`` exactly under the chosen engine.

    The analytic inverse is checked by forward propagation; residual mismatches
    are repaired by stepping the variate one ulp at a time.  A state that is
    still unreachable raises :class:`SingularModelError` naming ``t``.
    """
    ref = np.asarray(ref, dtype=np.float64)
    T = len(ref)
    with np.errstate(all="ignore"):
        v = np.empty_like(ref)
        v[:1] = model.invert_initial(theta, ref[:1], u[:1])
        if T > 1:
            v[1:] = model.invert(theta, ref[1:], ref[:-1], y[:-1], u[1:])
    if not np.all(np.isfinite(v)):
        t = int(np.flatnonzero(~np.isfinite(v).reshape(T, -1).all(axis=1))[0])
        raise SingularModelError("reference state cannot be inverted", t)
    x = _propagate_path(model, theta, kern, v, ref, y)
    bad = x != ref
    if ref.ndim == 1:
        # each entry only feeds its own state (parents come from ref)
        for i in np.flatnonzero(bad):
            for k in range(1, _MAX_NUDGE + 1):
                for direction in (np.inf, -np.inf):
                    c = v[i]
                    for _ in range(k):
                        c = np.nextafter(c, direction)
                    trial = v.copy()
                    trial[i] = c
                    if _propagate_path(model, theta, kern, trial, ref, y)[i] == ref[i]:
                        v[i] = c
                        bad[i] = False
                        break
                if not bad[i]:
                    break
    if np.any(bad):
        t = int(np.flatnonzero(bad.reshape(T, -1).any(axis=1))[0])
        raise SingularModelError("reference state has no exact preimage", t)
    return v


def run_ccsmc(model, theta, y, N, reference: Trajectory, stream: Stream, sort=True,
              engine="auto", order=DEFAULT_ORDER) -> CcsmcRun:
    """Conditional SMC that keeps ``reference`` and rebuilds its random inputs.

    Draws, in this order from ``stream``: the full ``(T, N)`` state variates,
    the ``(T-1, N)`` resampling uniforms and ``T`` auxiliary uniforms for
    models whose inverse needs them (discrete states).  Entries of the
    reference slots are then overwritten by their constrained values.

    Raises:
        SingularModelError: the reference path cannot be inverted.
        DegenerateConstraintError: a fixed parent carries zero weight.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    T = len(y)
    j = np.asarray(reference.j, dtype=np.int64)
    ref = np.asarray(reference.x_path, dtype=np.float64)
    if N < 2:
        raise ValueError("conditional SMC needs N >= 2")
    if len(j) != T or len(ref) != T:
        raise ValueError("reference trajectory length does not match y")
    if np.any(j < 0) or np.any(j >= N):
        raise ValueError("reference indices out of range")
    inputs = draw_inputs(stream, T, N, model.state_dim)
    u_inv = stream.uniform(T)
    kern = _use_kernel(model, theta, engine)
    inputs.v_x[np.arange(T), j] = invert_reference(model, theta, ref, y, u_inv, kern)
    system = _run(model, theta, y, inputs, sort, engine, order, jref=j)
    # verify both constraints
    rows = np.arange(T)
    if not np.array_equal(system.x[rows, j], ref):
        t = int(np.flatnonzero(np.any((system.x[rows, j] != ref).reshape(T, -1), axis=1))[0])
        raise ModelEvaluationError("reference path not reproduced", t)
    if T > 1 and not np.array_equal(system.a[rows[:-1], j[1:]], j[:-1]):
        t = int(np.flatnonzero(system.a[rows[:-1], j[1:]] != j[:-1])[0]) + 1
        raise DegenerateConstraintError(t)
    return CcsmcRun(system, inputs, system.log_z_hat)
