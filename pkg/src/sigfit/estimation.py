"""Parameter estimation for grouped FPLM curves.

Three layers:

* ``self_start`` -- data-driven starting values for one group;
* ``fit_nls`` -- per-group Levenberg-Marquardt least squares;
* ``fit_nlme`` -- nonlinear mixed-effects fit over all groups, alternating a
  penalized nonlinear least-squares step for (beta, b_i) with a restricted
  likelihood (EM) update of (Sigma, sigma^2) on the model linearized around
  the current estimates.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from sigfit import _core
from sigfit.errors import DegenerateSeries, GroupNotFound, InsufficientGroups
from sigfit.growth import FplmParams

log = logging.getLogger(__name__)

MIN_POINTS = 8
BOUNDARY_CHECK = 25
ALL_RANDOM = (True, True, True, True)


@dataclass(frozen=True)
class GroupObservations:
    group_id: str
    t: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "z", z)
        if t.ndim != 1 or t.shape != z.shape:
            raise DegenerateSeries(f"{self.group_id}: t and z must be 1-d and of equal length")
        if t.size < MIN_POINTS:
            raise DegenerateSeries(f"{self.group_id}: {t.size} points, need at least {MIN_POINTS}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(z))):
            raise DegenerateSeries(f"{self.group_id}: non-finite observations")
        if np.any(np.diff(t) <= 0):
            raise DegenerateSeries(f"{self.group_id}: time index must be strictly increasing")

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class SolverControls:
    """Tolerances and iteration caps for the least-squares and mixed-model solvers."""

    lm_lambda0: float = 1e-3
    lm_factor: float = 10.0
    lm_lambda_max: float = 1e16
    rss_rtol: float = 1e-10
    grad_tol: float = 1e-8
    max_iter: int = 200
    outer_tol: float = 1e-6
    max_outer: int = 50
    em_tol: float = 1e-9
    em_max_iter: int = 5000
    full_sigma: bool = False


@dataclass
class NlsFit:
    params: FplmParams
    rss: float
    jacobian_at_opt: np.ndarray
    covariance: np.ndarray
    converged: bool
    iterations: int
    ridge_added: bool = False
    rss_history: list = field(default_factory=list)


@dataclass
class NlmeModel:
    beta: np.ndarray
    b: dict
    sigma: np.ndarray
    sigma2: float
    random_mask: tuple
    loglik_linearized: float
    converged: bool
    iterations: int
    groups: list = field(default_factory=list)
    beta_cov: np.ndarray | None = None
    phi_cov: dict = field(default_factory=dict)
    nls_fits: dict = field(default_factory=dict)
    objective_trace: list = field(default_factory=list)
    excluded: dict = field(default_factory=dict)
    flags: set = field(default_factory=set)

    def params(self, group_id: str) -> FplmParams:
        if group_id not in self.b:
            raise GroupNotFound(f"group {group_id!r} is not in the model")
        return FplmParams.from_array(self.beta + self.b[group_id])


# ---------------------------------------------------------------------------
# Levenberg-Marquardt core
# ---------------------------------------------------------------------------

@dataclass
class _LMResult:
    x: np.ndarray
    r: np.ndarray
    jac: np.ndarray
    converged: bool
    iterations: int
    ridge_added: bool
    history: list


def _levenberg_marquardt(
    fun: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    x0: np.ndarray,
    ctrl: SolverControls,
    feasible: Callable[[np.ndarray], bool] | None = None,
) -> _LMResult:
    """Minimize ``||r(x)||^2`` with Marquardt-scaled damping.

    ``fun`` returns the residual vector and its Jacobian.  Steps that leave the
    feasible set or fail to reduce the sum of squares are rejected and the
    damping is raised; only strictly improving steps are accepted.
    """
    x = np.array(x0, dtype=float)
    r, jac = fun(x)
    rss = float(r @ r)
    lam = ctrl.lm_lambda0
    history = [rss]
    ridge_added = False
    converged = False
    it = 0
    while it < ctrl.max_iter:
        it += 1
        g = jac.T @ r
        if np.max(np.abs(g)) < ctrl.grad_tol:
            converged = True
            break
        a = jac.T @ jac
        scale = np.diag(a).copy()
        scale[scale <= 0] = 1.0
        accepted = False
        while lam <= ctrl.lm_lambda_max:
            m = a + lam * np.diag(scale)
            try:
                chol = np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                ridge_added = True
                m = m + 1e-10 * np.max(scale) * np.eye(m.shape[0])
                chol = np.linalg.cholesky(m)
            step = -_cho_solve(chol, g)
            x_new = x + step
            if not np.all(np.isfinite(x_new)) or (feasible is not None and not feasible(x_new)):
                lam *= ctrl.lm_factor
                continue
            r_new, jac_new = fun(x_new)
            rss_new = float(r_new @ r_new)
            if np.isfinite(rss_new) and rss_new < rss:
                accepted = True
                break
            lam *= ctrl.lm_factor
        if not accepted:
            # no reduction possible at machine precision
            converged = True
            break
        rel = (rss - rss_new) / rss
        x, r, jac, rss = x_new, r_new, jac_new, rss_new
        history.append(rss)
        lam = max(lam / ctrl.lm_factor, 1e-15)
        if rel < ctrl.rss_rtol:
            converged = True
            break
    return _LMResult(x, r, jac, converged, it, ridge_added, history)


def _cho_solve(chol, rhs):
    y = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, y)


# ---------------------------------------------------------------------------
# Single-group fits
# ---------------------------------------------------------------------------

def _first_crossing(t, z, level):
    idx = np.flatnonzero(z >= level)
    if idx.size == 0:
        return float(t[-1])
    j = int(idx[0])
    if j == 0:
        return float(t[0])
    z0, z1 = z[j - 1], z[j]
    if z1 == z0:
        return float(t[j])
    return float(t[j - 1] + (level - z0) / (z1 - z0) * (t[j] - t[j - 1]))


def self_start(obs: GroupObservations) -> FplmParams:
    """Starting values read off the data's range and quartile crossings."""
    t, z = obs.t, obs.z
    lo, hi = float(np.min(z)), float(np.max(z))
    span = hi - lo
    if not span > 0:
        raise DegenerateSeries(f"{obs.group_id}: flat series, cannot start a sigmoid fit")
    mid = 0.5 * (lo + hi)
    phi3 = float(t[np.argmin(np.abs(z - mid))])
    t25 = _first_crossing(t, z, lo + 0.25 * span)
    t75 = _first_crossing(t, z, lo + 0.75 * span)
    phi4 = max((t75 - t25) / (2.0 * math.log(3.0)), 0.5)
    return FplmParams(lo - 0.05 * span, hi + 0.05 * span, phi3, phi4)


def fit_nls(obs: GroupObservations, init: FplmParams | None = None,
            ctrl: SolverControls | None = None) -> NlsFit:
    """Least-squares FPLM fit of one group; phi4 is optimized on the log scale."""
    ctrl = ctrl or SolverControls()
    init = init or self_start(obs)
    t, z = obs.t, obs.z

    def natural(x):
        return np.array([x[0], x[1], x[2], math.exp(x[3])])

    def fun(x):
        phi = natural(x)
        f, jac = _core.fplm_value_jac(phi, t)
        jac = -jac
        jac[:, 3] *= phi[3]
        return z - f, jac

    def feasible(x):
        return x[1] > x[0] and abs(x[3]) < 700

    x0 = np.array([init.phi1, init.phi2, init.phi3, math.log(init.phi4)])
    res = _levenberg_marquardt(fun, x0, ctrl, feasible)
    phi = natural(res.x)
    _, jac = _core.fplm_value_jac(phi, t)
    rss = float(res.r @ res.r)
    dof = max(t.size - 4, 1)
    jtj = jac.T @ jac
    ridge = res.ridge_added
    try:
        cov = (rss / dof) * np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        ridge = True
        cov = (rss / dof) * np.linalg.inv(jtj + 1e-10 * np.max(np.diag(jtj)) * np.eye(4))
    cov = 0.5 * (cov + cov.T)
    return NlsFit(
        params=FplmParams.from_array(phi),
        rss=rss,
        jacobian_at_opt=jac,
        covariance=cov,
        converged=res.converged,
        iterations=res.iterations,
        ridge_added=ridge,
        rss_history=res.history,
    )


# ---------------------------------------------------------------------------
# Linearized mixed model (variance-component step)
# ---------------------------------------------------------------------------

class _LinearizedLMM:
    """First-order expansion of the NLME model around (beta, b_i).

    Working response ``w_i = z_i - f(phi_i) + X_i phi_i`` with ``X_i`` the
    curve Jacobian at ``phi_i`` and ``Z_i = X_i S`` its random-effect columns.
    Everything is expressed through the per-group least-squares summary
    ``(phi_hat_i, P_i = X_i'X_i, rss_i)`` of the linearized data, in the
    two-stage form ``X'V^-1 X = (sigma2 P^-1 + S Sigma S')^-1``, which avoids
    the cancellation of the textbook Woodbury expressions when Sigma is large
    compared with the within-group sampling variance.  All per-group algebra
    is batched over groups in 4 x 4 / q x q space.
    """

    def __init__(self, groups, phis, mask):
        self.mask = np.asarray(mask, dtype=bool)
        m = self.mask
        sel = np.eye(4)[:, m]
        self.sel = sel
        n, phi_hat, p_inv, root, rss = [], [], [], [], []
        for obs, phi in zip(groups, phis):
            f, x = _core.fplm_value_jac(phi, obs.t)
            w = obs.z - f + x @ phi
            # equilibrated QR: P = X'X = (R D^-1)'(R D^-1), P^-1 = D R^-1 R^-T D
            d = 1.0 / np.sqrt(np.einsum("ij,ij->j", x, x))
            q_mat, r = np.linalg.qr(x * d)
            r_inv = np.linalg.solve(r, np.eye(4))
            coef = d * (r_inv @ (q_mat.T @ w))
            n.append(w.size)
            phi_hat.append(coef)
            p_inv.append((d[:, None] * (r_inv @ r_inv.T)) * d[None, :])
            root.append(r / d[None, :])
            e = w - x @ coef
            rss.append(float(e @ e))
        self.n = np.array(n, dtype=float)
        self.phi_hat = np.array(phi_hat)
        self.p_inv = _sym(np.array(p_inv))
        self.root = np.array(root)
        self.rss_perp = np.array(rss)
        g_idx = np.arange(len(n))
        rnd, fix = m, ~m
        # G = Z'Z = P[W, W]; its inverse and M = G^-1 Z'X follow from P^-1 by
        # block inversion, so P itself (condition number squared) is never formed
        self.m_mat = np.zeros((len(n), int(m.sum()), 4))
        self.m_mat[:, :, rnd] = np.eye(int(m.sum()))
        self.e_perp = np.zeros_like(self.p_inv)  # X' (I - Z G^-1 Z') X
        g_inv = self.p_inv[:, rnd][:, :, rnd]
        if fix.any():
            pff_inv = np.linalg.inv(self.p_inv[:, fix][:, :, fix])
            pwf = self.p_inv[:, rnd][:, :, fix]
            g_inv = g_inv - pwf @ pff_inv @ _t(pwf)
            self.m_mat[:, :, fix] = -pwf @ pff_inv
            self.e_perp[np.ix_(g_idx, fix, fix)] = pff_inv
        self.g_inv = _sym(g_inv)

    def solve(self, sigma, sigma2):
        """GLS beta, BLUPs and the conditional moments needed by EM and inference."""
        sel = self.sel
        s_sig_s = sel @ sigma @ sel.T
        wmat = _sym(np.linalg.inv(sigma2 * self.p_inv + s_sig_s))  # X'V^-1X per group
        cbeta = _sym(np.linalg.inv(wmat.sum(axis=0)))
        beta = cbeta @ np.einsum("gab,gb->a", wmat, self.phi_hat)
        delta = self.phi_hat - beta
        zvx = sel.T @ wmat  # Z'V^-1X, (g, q, 4)
        sz = sigma @ zvx
        b_hat = np.einsum("gab,gb->ga", sz, delta)
        h = _sym(np.linalg.inv(sigma2 * self.g_inv + sigma))
        # Var(b | w) at known beta: sigma2 (G + sigma2 Sigma^-1)^-1 = sigma2 Sigma H G^-1
        cond_b = _sym(sigma2 * (sigma @ h @ self.g_inv))
        b_var = _sym(cond_b + sz @ cbeta @ _t(sz))
        r = delta - b_hat @ sel.T
        fit_r = np.einsum("gab,gb->ga", self.root, r)
        ss = self.rss_perp + np.einsum("ga,ga->g", fit_r, fit_r)
        # sigma2 n_i - sigma2^2 tr(P_ii), assembled from nonnegative pieces
        hm = h @ self.m_mat
        xv2x_s4 = self.e_perp + sigma2**2 * (_t(hm) @ self.g_inv @ hm)  # sigma2^2 X'V^-2X
        em_trace = sigma2 * np.einsum("gab,ba->g", h, sigma) + np.einsum("ab,gba->g", cbeta, xv2x_s4)
        return _LMMSolution(wmat, zvx, cond_b, h, cbeta, beta, b_hat, b_var, ss, em_trace, delta)

    def em(self, sigma, sigma2, ctrl, sigma_floor, sigma2_floor, sigma_negl, sigma2_negl):
        """Iterate the REML EM updates to convergence on this linearization.

        Changes are measured relative to ``|value| + negligible``, so
        components shrinking towards zero do not stall the iteration.  EM
        approaches a zero variance component only sublinearly; every
        ``BOUNDARY_CHECK`` iterations the components that keep shrinking are
        tried at their floor and kept there if the restricted likelihood does
        not decrease.
        """
        n_total = float(self.n.sum())
        n_groups = self.n.size
        projected = False
        checkpoint = np.diag(sigma).copy()
        for it in range(1, ctrl.em_max_iter + 1):
            sol = self.solve(sigma, sigma2)
            b = sol.b_hat
            new = (b.T @ b + sol.b_var.sum(axis=0)) / n_groups
            if ctrl.full_sigma:
                new, hit = _project_psd(new)
                projected |= hit
            else:
                new = np.diag(np.diag(new))
            new = _floor_diag(new, sigma_floor)
            new_s2 = float(sol.ss.sum() + sol.em_trace.sum()) / n_total
            new_s2 = max(new_s2, sigma2_floor)
            d_sig = np.max(np.abs(np.diag(new) - np.diag(sigma)) / (np.diag(sigma) + sigma_negl))
            d_s2 = abs(new_s2 - sigma2) / (sigma2 + sigma2_negl)
            sigma, sigma2 = new, new_s2
            if max(d_sig, d_s2) < ctrl.em_tol:
                break
            if it % BOUNDARY_CHECK == 0:
                diag = np.diag(sigma)
                shrinking = (diag < 0.9 * checkpoint) & (diag > sigma_floor)
                if shrinking.any():
                    sigma = self._try_boundary(sigma, sigma2, shrinking, sigma_floor)
                checkpoint = np.diag(sigma).copy()
        return sigma, sigma2, projected

    def _try_boundary(self, sigma, sigma2, shrinking, sigma_floor):
        base = self.reml_loglik(sigma, sigma2)
        candidates = [shrinking]
        if shrinking.sum() > 1:
            candidates += [np.eye(shrinking.size, dtype=bool)[k] for k in np.flatnonzero(shrinking)]
        for sel in candidates:
            trial = sigma.copy()
            trial[sel, :] = 0.0
            trial[:, sel] = 0.0
            trial = _floor_diag(trial, sigma_floor)
            if self.reml_loglik(trial, sigma2) >= base:
                return trial
        return sigma

    def reml_loglik(self, sigma, sigma2):
        """Restricted log-likelihood of the linearized model."""
        sol = self.solve(sigma, sigma2)
        q = self.g_inv.shape[1]
        # log|V_i| = (n_i - q) log sigma2 + log|G_i| - log|H_i|
        _, ld_g_inv = np.linalg.slogdet(self.g_inv)
        _, ld_h = np.linalg.slogdet(sol.h)
        logdet_v = float(np.sum((self.n - q) * math.log(sigma2) - ld_g_inv - ld_h))
        quad = float(self.rss_perp.sum()) / sigma2 + float(np.einsum("ga,gab,gb->", sol.delta, sol.wmat, sol.delta))
        _, ld_cbeta = np.linalg.slogdet(sol.cbeta)
        return -0.5 * (logdet_v - ld_cbeta + quad + (self.n.sum() - 4) * math.log(2 * math.pi))


@dataclass
class _LMMSolution:
    wmat: np.ndarray  # X_i' V_i^-1 X_i
    zvx: np.ndarray  # Z_i' V_i^-1 X_i
    cond_b: np.ndarray  # Var(b_i | w_i) at known beta
    h: np.ndarray
    cbeta: np.ndarray
    beta: np.ndarray
    b_hat: np.ndarray
    b_var: np.ndarray  # Var(b_i | w) including beta uncertainty
    ss: np.ndarray  # ||w_i - X_i beta - Z_i b_i||^2
    em_trace: np.ndarray  # sigma2 n_i - sigma2^2 tr(P_ii)
    delta: np.ndarray  # phi_hat_i - beta


def _sym(a):
    return 0.5 * (a + _t(a))


def _t(a):
    return np.swapaxes(a, -1, -2)


def _floor_diag(sigma, floor):
    out = sigma.copy()
    d = np.diag(out)
    np.fill_diagonal(out, np.maximum(d, floor))
    return out


def _nearest_psd(a):
    a = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(a)
    if vals.min() >= 0:
        return a
    return (vecs * np.maximum(vals, 0.0)) @ vecs.T


def _project_psd(sigma):
    sigma = 0.5 * (sigma + sigma.T)
    vals, vecs = np.linalg.eigh(sigma)
    floor = 1e-10 * max(float(np.trace(sigma)), 0.0)
    if vals.min() >= floor:
        return sigma, False
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T, True


# ---------------------------------------------------------------------------
# Penalized nonlinear least squares (fixed + random effects)
# ---------------------------------------------------------------------------

def _pnls(groups, beta, b_masked, sigma, sigma2, mask, ctrl):
    """Jointly minimize sum_i ||z_i - f(beta + b_i)||^2 / sigma2 + b_i' Sigma^-1 b_i."""
    m = len(groups)
    q = int(mask.sum())
    prec = np.linalg.inv(sigma)
    root = np.linalg.cholesky(0.5 * (prec + prec.T)).T  # prec = root' root
    inv_sd = 1.0 / math.sqrt(sigma2)
    sizes = [g.t.size for g in groups]
    n_rows = sum(sizes) + m * q
    n_cols = 4 + m * q

    def unpack(x):
        return x[:4], x[4:].reshape(m, q)

    def fun(x):
        beta_, bm = unpack(x)
        r = np.empty(n_rows)
        jac = np.zeros((n_rows, n_cols))
        row = 0
        for i, obs in enumerate(groups):
            phi = beta_.copy()
            phi[mask] += bm[i]
            f, jf = _core.fplm_value_jac(phi, obs.t)
            n = sizes[i]
            r[row:row + n] = (obs.z - f) * inv_sd
            jac[row:row + n, :4] = -jf * inv_sd
            jac[row:row + n, 4 + i * q:4 + (i + 1) * q] = -jf[:, mask] * inv_sd
            row += n
        for i in range(m):
            r[row:row + q] = root @ bm[i]
            jac[row:row + q, 4 + i * q:4 + (i + 1) * q] = root
            row += q
        return r, jac

    def feasible(x):
        beta_, bm = unpack(x)
        phis = np.repeat(beta_[None, :], m, axis=0)
        phis[:, mask] += bm
        return bool(np.all(phis[:, 3] > 0) and np.all(phis[:, 1] > phis[:, 0]))

    x0 = np.concatenate([beta, b_masked.ravel()])
    r0, _ = fun(x0)
    res = _levenberg_marquardt(fun, x0, ctrl, feasible)
    beta_new, bm_new = unpack(res.x)
    return beta_new.copy(), bm_new.copy(), float(r0 @ r0), float(res.r @ res.r), res


def _group_phis(beta, b_masked, mask):
    phis = np.repeat(beta[None, :], b_masked.shape[0], axis=0)
    phis[:, mask] += b_masked
    return phis


# ---------------------------------------------------------------------------
# Mixed-effects driver
# ---------------------------------------------------------------------------

def fit_nlme(groups: Sequence[GroupObservations], random_mask=ALL_RANDOM,
             ctrl: SolverControls | None = None) -> NlmeModel:
    """Fit the FPLM nonlinear mixed-effects model to all groups.

    Groups whose series cannot be fitted (too short, flat) are dropped with a
    warning.  Raises ``InsufficientGroups`` when fewer than three remain.
    """
    ctrl = ctrl or SolverControls()
    mask = np.asarray(random_mask, dtype=bool)
    if mask.shape != (4,) or not mask.any():
        raise ValueError("random_mask needs four flags with at least one set")
    if len(groups) < 3:
        raise InsufficientGroups(f"need at least 3 groups, got {len(groups)}")

    kept, fits, excluded = [], {}, {}
    for obs in groups:
        try:
            fits[obs.group_id] = fit_nls(obs, self_start(obs), ctrl)
            kept.append(obs)
        except DegenerateSeries as exc:
            excluded[obs.group_id] = str(exc)
            warnings.warn(f"excluding group: {exc}", stacklevel=2)
    if len(kept) < 3:
        raise InsufficientGroups(f"only {len(kept)} usable groups after exclusions")
    ids = [g.group_id for g in kept]
    flags = set()

    phis0 = np.array([fits[g].params.as_array() for g in ids])
    beta = phis0.mean(axis=0)
    scale2 = 1.0 + beta**2
    sigma_floor = 1e-12 * scale2[mask]
    z2 = np.mean(np.concatenate([g.z for g in kept]) ** 2)
    sigma2_floor = max(1e-20 * z2, 1e-300)
    # variance levels treated as zero when judging convergence
    sigma_negl = 1e-8 * scale2[mask]
    sigma2_negl = 1e-10 * z2

    cov0 = np.atleast_2d(np.cov(phis0[:, mask], rowvar=False, ddof=1))
    if ctrl.full_sigma:
        if np.linalg.cond(cov0 + np.diag(sigma_floor)) > 1e10:
            cov0 = np.diag(np.diag(cov0))
    else:
        cov0 = np.diag(np.diag(cov0))
    sigma = _floor_diag(cov0, sigma_floor)
    dof = sum(len(g) - 4 for g in kept)
    sigma2 = max(sum(fits[g].rss for g in ids) / dof, sigma2_floor)
    b_masked = (phis0 - beta)[:, mask]

    trace = []
    converged = False
    it = 0
    for it in range(1, ctrl.max_outer + 1):
        old = np.concatenate([beta, np.diag(sigma), [sigma2]])
        beta, b_masked, obj_before, obj_after, res = _pnls(kept, beta, b_masked, sigma, sigma2, mask, ctrl)
        if res.ridge_added:
            flags.add("ridge")
        if obj_after > obj_before:
            raise AssertionError(f"penalized objective increased: {obj_before} -> {obj_after}")
        trace.append((obj_before, obj_after))
        lmm = _LinearizedLMM(kept, _group_phis(beta, b_masked, mask), mask)
        sigma, sigma2, projected = lmm.em(sigma, sigma2, ctrl, sigma_floor, sigma2_floor, sigma_negl, sigma2_negl)
        if projected:
            flags.add("psd_projected")
        new = np.concatenate([beta, np.diag(sigma), [sigma2]])
        floor = np.concatenate([1e-12 * scale2, sigma_negl, [sigma2_negl]])
        change = np.max(np.abs(new - old) / (np.abs(old) + floor))
        log.debug("outer %d: objective %.6g -> %.6g, change %.3g", it, obj_before, obj_after, change)
        if change < ctrl.outer_tol:
            converged = True
            break

    # inference quantities at the final estimates
    phis = _group_phis(beta, b_masked, mask)
    lmm = _LinearizedLMM(kept, phis, mask)
    sol = lmm.solve(sigma, sigma2)
    cbeta = sol.cbeta
    sel = np.eye(4)[:, mask]
    phi_cov = {}
    for gid, zvx, cond_b in zip(ids, sol.zvx, sol.cond_b):
        g = np.eye(4) - sel @ sigma @ zvx
        phi_cov[gid] = _nearest_psd(g @ cbeta @ g.T + sel @ cond_b @ sel.T)
    loglik = lmm.reml_loglik(sigma, sigma2)

    full_sigma = np.zeros((4, 4))
    full_sigma[np.ix_(mask, mask)] = sigma
    b = {}
    for gid, bm in zip(ids, b_masked):
        vec = np.zeros(4)
        vec[mask] = bm
        b[gid] = vec
    return NlmeModel(
        beta=beta,
        b=b,
        sigma=full_sigma,
        sigma2=float(sigma2),
        random_mask=tuple(bool(v) for v in mask),
        loglik_linearized=float(loglik),
        converged=converged,
        iterations=it,
        groups=ids,
        beta_cov=cbeta,
        phi_cov=phi_cov,
        nls_fits=fits,
        objective_trace=trace,
        excluded=excluded,
        flags=flags,
    )


def predict_group(m: NlmeModel, group_id: str, t_grid) -> np.ndarray:
    """Transformed-scale curve of one group at arbitrary day indices."""
    phi = m.params(group_id).as_array()
    return _core.fplm_value(phi, np.atleast_1d(np.asarray(t_grid, dtype=float)))
