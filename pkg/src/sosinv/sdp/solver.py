"""Primal-dual interior point method for :class:`SDPInstance`.

Infeasible-start path following with Nesterov-Todd scaling and a
Mehrotra predictor-corrector.  Free scalars stay in the Newton system as
an augmented (saddle point) block instead of being split.  Rows are
normalized to unit Euclidean norm before solving; reported residuals are
relative to that normalized problem:

* primal  ``||b - A(x)|| / (1 + ||b||)``
* dual    ``||c - A^T(lam) - z|| / (1 + ||c||)``
* gap     ``max(|pobj - dobj|, <X, Z>) / (1 + |pobj| + |dobj|)``
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .problem import SDPInstance, SDPSolution, Status

log = logging.getLogger(__name__)

DIVERGENCE = 1e10  # objective magnitude treated as divergence
RAY_LOOSE = 1e-6  # ray ratio accepted once the iterates diverge


@dataclass(frozen=True)
class SolverOptions:
    eps_primal: float = 1e-8
    eps_dual: float = 1e-8
    eps_gap: float = 1e-8
    max_iter: int = 200
    eps_infeasible: float = 1e-8

    @property
    def eps_psd(self) -> float:
        return 10.0 * self.eps_primal

    @classmethod
    def from_mapping(cls, values: dict) -> "SolverOptions":
        fields = cls.__dataclass_fields__
        kwargs = {}
        for key, val in values.items():
            if key not in fields:
                raise KeyError(f"unknown solver option {key!r}")
            kwargs[key] = int(val) if key == "max_iter" else float(val)
        return cls(**kwargs)


def _sym(M):
    return (M + M.T) * 0.5


def _max_step(L, dM) -> float:
    """Largest alpha with L L^T + alpha dM PSD (inf when unbounded)."""
    Y = sla.solve_triangular(L, dM, lower=True)
    Y = sla.solve_triangular(L, Y.T, lower=True)
    lmin = sla.eigh(_sym(Y), eigvals_only=True, subset_by_index=[0, 0])[0]
    return np.inf if lmin >= 0 else -1.0 / lmin


class _IPM:
    def __init__(self, inst: SDPInstance, opts: SolverOptions):
        self.inst = inst
        self.opts = opts
        m = inst.m
        sq = np.asarray(inst.A_free.multiply(inst.A_free).sum(axis=1)).ravel()
        sq += np.asarray(inst.A_lin.multiply(inst.A_lin).sum(axis=1)).ravel()
        for A in inst.A_psd:
            sq += np.asarray(A.multiply(A).sum(axis=1)).ravel()
        norms = np.sqrt(sq)
        self.empty_rows = np.flatnonzero(norms == 0)
        self.keep = np.flatnonzero(norms > 0)
        self.row_norm = norms[self.keep]
        D = sp.diags(1.0 / self.row_norm)
        take = lambda A: sp.csr_matrix(D @ A.tocsr()[self.keep])
        self.b = inst.b[self.keep] / self.row_norm
        self.Af = take(inst.A_free)
        self.Al = take(inst.A_lin)
        self.cf = inst.c_free
        self.cl = inst.c_lin
        self.sizes = inst.block_sizes
        self.A = []
        self.AT = []
        self.rows = []
        self.dense = []
        self.rowsub = []
        for A in inst.A_psd:
            Ak = take(A)
            self.A.append(Ak)
            self.AT.append(sp.csr_matrix(Ak.T))
            rows = np.flatnonzero(np.diff(Ak.indptr) > 0)
            self.rows.append(rows)
            sub = Ak[rows]
            self.rowsub.append(sub)
            n = int(round(np.sqrt(Ak.shape[1])))
            self.dense.append(sub.toarray().reshape(len(rows), n, n))
        self.C = inst.C_psd
        self.opts_reg = 1e-12
        self.mk = len(self.keep)
        self.nf = inst.n_free
        self.nl = inst.n_lin
        self.nu = sum(self.sizes) + self.nl  # barrier parameter normalizer
        self.norm_b = np.linalg.norm(self.b)
        self.norm_c = np.sqrt(sum(np.sum(C * C) for C in self.C) + self.cf @ self.cf + self.cl @ self.cl)
        del m

    # -- operators on the normalized problem
    def Aop(self, y, Xs, s):
        out = self.Af @ y + self.Al @ s
        for Ak, X in zip(self.A, Xs):
            out += Ak @ X.ravel()
        return out

    def ATop(self, lam):
        mats = [(AT @ lam).reshape(n, n) for AT, n in zip(self.AT, self.sizes)]
        return mats, self.Al.T @ lam, self.Af.T @ lam

    def initial_point(self):
        Xs, Zs = [], []
        absb = np.abs(self.b)
        for Ak, C, n in zip(self.A, self.C, self.sizes):
            rn = np.sqrt(np.asarray(Ak.multiply(Ak).sum(axis=1)).ravel())
            xi = max(10.0, np.sqrt(n), n * np.max((1 + absb) / (1 + rn), initial=1.0))
            eta = max(10.0, np.sqrt(n), np.max(rn, initial=0.0), np.linalg.norm(C))
            Xs.append(xi * np.eye(n))
            Zs.append(eta * np.eye(n))
        if self.nl:
            rn = np.sqrt(np.asarray(self.Al.multiply(self.Al).sum(axis=0)).ravel())
            xi = max(10.0, np.max((1 + absb)), 1.0)
            eta = max(10.0, np.max(rn, initial=0.0), np.max(np.abs(self.cl), initial=0.0))
            s = np.full(self.nl, xi)
            z = np.full(self.nl, eta)
        else:
            s = np.zeros(0)
            z = np.zeros(0)
        return np.zeros(self.nf), Xs, s, np.zeros(self.mk), Zs, z

    def run(self) -> SDPSolution:
        opts = self.opts
        t0 = time.perf_counter()
        y, Xs, s, lam, Zs, z = self.initial_point()
        best = None
        status = None
        message = ""
        stall = 0
        it = 0
        dual_ray = primal_ray = np.inf
        for it in range(opts.max_iter + 1):
            rp = self.b - self.Aop(y, Xs, s)
            ATl, ATl_lin, ATl_free = self.ATop(lam)
            Rd = [C - M - Z for C, M, Z in zip(self.C, ATl, Zs)]
            rdl = self.cl - ATl_lin - z
            rf = self.cf - ATl_free
            pobj = float(self.cf @ y + self.cl @ s + sum(np.sum(C * X) for C, X in zip(self.C, Xs)))
            dobj = float(self.b @ lam)
            xz = float(sum(np.sum(X * Z) for X, Z in zip(Xs, Zs)) + s @ z)
            mu = xz / self.nu if self.nu else 0.0
            pinf = np.linalg.norm(rp) / (1 + self.norm_b)
            dnorm = np.sqrt(sum(np.sum(R * R) for R in Rd) + rdl @ rdl + rf @ rf)
            dinf = dnorm / (1 + self.norm_c)
            gap = max(abs(pobj - dobj), xz) / (1 + abs(pobj) + abs(dobj))
            # primal-feasible iterates win: they carry a usable certificate
            err = (pinf > opts.eps_primal, max(pinf / opts.eps_primal, dinf / opts.eps_dual, gap / opts.eps_gap))
            if best is None or err < best[0]:
                best = (err, it, y.copy(), [X.copy() for X in Xs], s.copy(), lam.copy(),
                        [Z.copy() for Z in Zs], z.copy(), pobj, dobj, pinf, dinf, gap)
            log.debug("it %3d pobj %+.10e dobj %+.10e pinf %.2e dinf %.2e gap %.2e mu %.2e ray %.1e",
                      it, pobj, dobj, pinf, dinf, gap, mu, dual_ray)
            if pinf <= opts.eps_primal and dinf <= opts.eps_dual and gap <= opts.eps_gap:
                status = Status.OPTIMAL
                break
            # infeasibility certificates from diverging iterates
            if dobj > 0:
                ray = np.sqrt(sum(np.sum((C - R) ** 2) for C, R in zip(self.C, Rd))
                              + np.sum((self.cl - rdl) ** 2) + np.sum((self.cf - rf) ** 2)) / dobj
                dual_ray = min(dual_ray, ray)
                if ray < opts.eps_infeasible and pinf > opts.eps_primal:
                    status, message = Status.INFEASIBLE, f"dual ray found (ratio {ray:.1e}): primal infeasible"
                    break
            if pobj < 0:
                ray = np.linalg.norm(self.b - rp) / -pobj
                primal_ray = min(primal_ray, ray)
                if ray < opts.eps_infeasible and dinf > opts.eps_dual:
                    status, message = Status.UNBOUNDED, f"primal ray found (ratio {ray:.1e}): dual infeasible"
                    break
            if max(abs(pobj), abs(dobj)) > DIVERGENCE:
                # rounding noise grows with the iterates, so the rays above
                # rarely reach eps_infeasible; accept a looser ratio here
                if dobj > DIVERGENCE and dual_ray < RAY_LOOSE:
                    status = Status.INFEASIBLE
                    message = f"dual objective diverges (best ray ratio {dual_ray:.1e}): primal infeasible"
                elif pobj < -DIVERGENCE and primal_ray < RAY_LOOSE:
                    status = Status.UNBOUNDED
                    message = f"primal objective diverges (best ray ratio {primal_ray:.1e}): dual infeasible"
                else:
                    status = Status.NUMERICAL_FAILURE
                    message = (f"iterates diverge (best dual ray ratio {dual_ray:.1e}, "
                               f"primal ray ratio {primal_ray:.1e})")
                break
            if it == opts.max_iter:
                status, message = Status.ITERATION_LIMIT, "iteration limit reached"
                break
            try:
                step = self.step(y, Xs, s, lam, Zs, z, rp, Rd, rdl, rf, mu)
            except (np.linalg.LinAlgError, sla.LinAlgError, ValueError) as exc:
                status, message = Status.NUMERICAL_FAILURE, f"linear algebra breakdown: {exc}"
                break
            y, Xs, s, lam, Zs, z, ap, ad = step
            if max(ap, ad) < 1e-10:
                stall += 1
                if stall >= 3:
                    status, message = Status.NUMERICAL_FAILURE, "step lengths collapsed"
                    break
            else:
                stall = 0
        return self.finish(status, message, best, it, time.perf_counter() - t0)

    def finish(self, status, message, best, it, elapsed) -> SDPSolution:
        opts = self.opts
        _, _, y, Xs, s, lam, Zs, z, pobj, dobj, pinf, dinf, gap = best
        if status in (Status.INFEASIBLE, Status.UNBOUNDED):
            return SDPSolution(status, iterations=it, wall_time=elapsed, message=message)
        if status is not Status.OPTIMAL:
            if pinf <= opts.eps_primal:
                message = f"{message}; best iterate is primal feasible (gap {gap:.2e})"
                status = Status.FEASIBLE
        lam_full = np.zeros(self.inst.m)
        lam_full[self.keep] = lam / self.row_norm
        sol = SDPSolution(
            status=status, y=y, X=Xs, s=s, lam=lam_full, Z=Zs, z=z,
            objective=pobj, dual_objective=dobj, primal_residual=pinf,
            dual_residual=dinf, gap=gap, iterations=it, wall_time=elapsed, message=message.strip("; "),
        )
        if status.has_point:
            worst = min((np.linalg.eigvalsh(X)[0] for X in Xs), default=0.0)
            if self.nl:
                worst = min(worst, float(s.min()))
            if worst < -opts.eps_psd:
                sol.status = Status.NUMERICAL_FAILURE
                sol.message = f"returned block has eigenvalue {worst:.3e}"
        else:
            sol.objective = None
            sol.dual_objective = None
        return sol

    # -- one predictor-corrector iteration
    def step(self, y, Xs, s, lam, Zs, z, rp, Rd, rdl, rf, mu):
        scal = []
        for X, Z in zip(Xs, Zs):
            L = np.linalg.cholesky(X)
            R = np.linalg.cholesky(Z)
            U, sv, Vt = np.linalg.svd(R.T @ L)
            isq = 1.0 / np.sqrt(sv)
            G = (L @ Vt.T) * isq[None, :]
            Ginv = (U.T @ R.T) * isq[:, None]
            W = _sym(G @ G.T)
            scal.append((L, R, G, Ginv, W, sv))
        wl = s / z if self.nl else s

        mtot = self.mk + self.nf
        K = np.zeros((mtot, mtot))
        M = K[: self.mk, : self.mk]
        for (_, _, _, _, W, _), rows, sub, dense in zip(scal, self.rows, self.rowsub, self.dense):
            if not len(rows):
                continue
            r, n, _ = dense.shape
            T1 = (dense.reshape(r * n, n) @ W).reshape(r, n, n)
            T2 = (np.ascontiguousarray(T1.transpose(0, 2, 1)).reshape(r * n, n) @ W)
            Mk = sub @ T2.reshape(r, n * n).T
            M[np.ix_(rows, rows)] += Mk
        if self.nl:
            M += (self.Al @ sp.diags(wl) @ self.Al.T).toarray()
        if self.nf:
            Af = self.Af.toarray()
            K[: self.mk, self.mk:] = Af
            K[self.mk:, : self.mk] = Af.T
        K[: self.mk, : self.mk] = _sym(M)
        # symmetric equilibration before the LU; pivoting alone cannot cope
        # with the spread of diag(M) near the end of the run
        dg = np.abs(np.diag(K)).copy()
        if self.nf:
            Dl = 1.0 / np.sqrt(np.maximum(dg[: self.mk], 1e-300))
            colf = np.sqrt(np.asarray((sp.diags(Dl) @ self.Af).multiply(sp.diags(Dl) @ self.Af).sum(axis=0)).ravel())
            Df = 1.0 / np.maximum(colf, 1e-300)
            Dk = np.concatenate([Dl, Df])
        else:
            Dk = 1.0 / np.sqrt(np.maximum(dg, 1e-300))
        Ks = K * Dk[:, None] * Dk[None, :]
        # quasi-definite regularization; the refinement below works against K
        reg = np.full(mtot, self.opts_reg)
        reg[self.mk:] *= -1.0
        lu = sla.lu_factor(Ks + np.diag(reg), check_finite=True)

        def ksolve(rhs):
            return Dk * sla.lu_solve(lu, Dk * rhs)

        def newton(rp_, rf_, Rd_, rdl_, GKGt, rcl):
            h = rp_.copy()
            for (_, _, _, _, W, _), Ak, R_, P in zip(scal, self.A, Rd_, GKGt):
                h -= Ak @ (P - W @ R_ @ W).ravel()
            if self.nl:
                h -= self.Al @ (rcl / z - wl * rdl_)
            rhs = np.concatenate([h, rf_])
            sol = ksolve(rhs)
            res = rhs - K @ sol
            rn = np.linalg.norm(Dk * res)
            for _ in range(4):
                cand = sol + ksolve(res)
                cres = rhs - K @ cand
                cn = np.linalg.norm(Dk * cres)
                if not cn < 0.5 * rn:
                    if cn < rn:
                        sol, res, rn = cand, cres, cn
                    break
                sol, res, rn = cand, cres, cn
            dlam, dy = sol[: self.mk], sol[self.mk:]
            ATd, ATd_lin, ATd_free = self.ATop(dlam)
            dZ = [_sym(R_ - M_) for R_, M_ in zip(Rd_, ATd)]
            dX = [_sym(P - W @ dZk @ W) for (_, _, _, _, W, _), P, dZk in zip(scal, GKGt, dZ)]
            if self.nl:
                dz = rdl_ - ATd_lin
                ds = (rcl - s * dz) / z
            else:
                dz = ds = np.zeros(0)
            return [dy, dX, ds, dlam, dZ, dz], ATd_free

        zero_R = [np.zeros_like(X) for X in Xs]
        zero_l = np.zeros(self.nl)

        def solve_dir(GKGt, rcl):
            d, ATd_free = newton(rp, rf, Rd, rdl, GKGt, rcl)
            # the reduced system loses accuracy through W; refine on the
            # primal rows and free-variable dual rows of the full system
            scale = 1.0 + np.linalg.norm(rp) + np.linalg.norm(rf)
            for _ in range(3):
                ep = rp - self.Aop(d[0], d[1], d[2])
                ef = rf - ATd_free
                err = np.sqrt(ep @ ep + ef @ ef)
                if err <= 1e-14 * scale:
                    break
                c, cf = newton(ep, ef, zero_R, zero_l, zero_R, zero_l)
                ep2 = ep - self.Aop(c[0], c[1], c[2])
                ef2 = ef - cf
                if not np.sqrt(ep2 @ ep2 + ef2 @ ef2) < err:
                    break
                d = [d[0] + c[0], [a + b_ for a, b_ in zip(d[1], c[1])], d[2] + c[2],
                     d[3] + c[3], [a + b_ for a, b_ in zip(d[4], c[4])], d[5] + c[5]]
                ATd_free = ATd_free + cf
            ep = rp - self.Aop(d[0], d[1], d[2])
            if log.isEnabledFor(logging.DEBUG):
                ep = rp - self.Aop(d[0], d[1], d[2])
                log.debug("    dir err %.2e", np.linalg.norm(ep))
            return tuple(d)

        def max_steps(dX, ds, dZ, dz):
            ap = ad = np.inf
            for (L, R, *_), dXk, dZk in zip(scal, dX, dZ):
                ap = min(ap, _max_step(L, dXk))
                ad = min(ad, _max_step(R, dZk))
            if self.nl:
                neg = ds < 0
                if neg.any():
                    ap = min(ap, np.min(-s[neg] / ds[neg]))
                neg = dz < 0
                if neg.any():
                    ad = min(ad, np.min(-z[neg] / dz[neg]))
            return ap, ad

        # predictor
        pred = solve_dir([-X for X in Xs], -s * z)
        dy, dX, ds, dlam, dZ, dz = pred
        ap, ad = max_steps(dX, ds, dZ, dz)
        ap, ad = min(1.0, ap), min(1.0, ad)
        if self.nu:
            xz_aff = sum(np.sum((X + ap * a) * (Z + ad * b_)) for X, a, Z, b_ in zip(Xs, dX, Zs, dZ))
            xz_aff += (s + ap * ds) @ (z + ad * dz)
            expon = max(1.0, 3.0 * min(ap, ad) ** 2)
            sigma = min(1.0, max(0.0, xz_aff / (mu * self.nu)) ** expon) if mu > 0 else 0.0
        else:
            sigma = 0.0
        gamma = 0.9 + 0.09 * min(ap, ad)

        # corrector
        GKGt = []
        for (_, _, G, Ginv, _, d), dXk, dZk in zip(scal, dX, dZ):
            dXt = Ginv @ dXk @ Ginv.T
            dZt = G.T @ dZk @ G
            Rt = -_sym(dXt @ dZt)
            Rt[np.diag_indices_from(Rt)] += sigma * mu - d * d
            Kt = Rt / (0.5 * (d[:, None] + d[None, :]))
            GKGt.append(_sym(G @ Kt @ G.T))
        rcl = sigma * mu - s * z - ds * dz
        dy, dX, ds, dlam, dZ, dz = solve_dir(GKGt, rcl)
        ap, ad = max_steps(dX, ds, dZ, dz)
        ap = _pd_step(Xs, dX, min(1.0, gamma * ap))
        ad = _pd_step(Zs, dZ, min(1.0, gamma * ad))
        y = y + ap * dy
        Xs = [X + ap * d_ for X, d_ in zip(Xs, dX)]
        s = s + ap * ds
        lam = lam + ad * dlam
        Zs = [Z + ad * d_ for Z, d_ in zip(Zs, dZ)]
        z = z + ad * dz
        return y, Xs, s, lam, Zs, z, ap, ad


def _pd_step(Ms, dMs, alpha: float) -> float:
    """Shrink ``alpha`` until every ``M + alpha dM`` factors; rounding can defeat the eigenvalue bound."""
    for _ in range(30):
        try:
            for M, dM in zip(Ms, dMs):
                np.linalg.cholesky(M + alpha * dM)
            return alpha
        except np.linalg.LinAlgError:
            alpha *= 0.5
    return 0.0


def solve(inst: SDPInstance, opts: SolverOptions | None = None) -> SDPSolution:
    """Solve ``inst``; never reports optimality it has not reached."""
    opts = opts or SolverOptions()
    ipm = _IPM(inst, opts)
    bad = ipm.empty_rows[inst.b[ipm.empty_rows] != 0]
    if len(bad):
        return SDPSolution(Status.INFEASIBLE, message=f"row {int(bad[0])} is empty with nonzero rhs")
    return ipm.run()
