"""Second-order bias of the maximum likelihood estimator.

Two independent routes to the O(1/n) bias vector B(zeta):

* :func:`cox_snell_bias` — the matrix form built from the diagonal
  auxiliary matrices M1..M6 / N1..N3, evaluated as a weighted least
  squares fit, which is both fast and numerically stable;
* :func:`brute_force_bias` — a direct evaluation of the classical
  triple-sum cumulant expression, cubic in the number of parameters and
  intended as a cross-check for small models only.

The same ingredient vectors feed :func:`modified_score`, whose root is
the preventive (Firth-type) bias-corrected estimator.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SingularInformationError
from .likelihood import information, information_inverse, score
from .special_fn import tetragamma

MAX_BRUTE_FORCE_PARAMS = 6


@dataclass
class BiasIngredients:
    """Per-observation vectors entering the bias and modified score.

    All arrays of length n except the inverse-information blocks.
    """

    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    m4: np.ndarray
    m5: np.ndarray
    m6: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    n3: np.ndarray
    F: np.ndarray
    G: np.ndarray
    p_bb: np.ndarray
    p_bt: np.ndarray
    p_tt: np.ndarray
    k_inv: np.ndarray


def _third_order_coeffs(ctx):
    """The psi''-based scalars c, d, e plus psi''((1-mu)phi), psi''(mu*phi)."""
    mu, phi = ctx.mu, ctx.phi
    omu = 1.0 - mu
    t_q = tetragamma(omu * phi)
    t_p = tetragamma(mu * phi)
    c = t_q - t_p
    d = t_q * omu ** 2 - t_p * mu ** 2
    e = tetragamma(phi) - t_p * mu ** 3 - t_q * omu ** 3
    return c, d, e, t_q, t_p


def ingredients(ctx):
    """Compute M/N diagonals, trace vectors F, G and the P projections.

    Requires an order-2 context (predictor Hessians and S1/S2 present).
    """
    if ctx.order < 2:
        raise ValueError("bias ingredients need a context built with order >= 2")
    mu, phi = ctx.mu, ctx.phi
    T1, T2, S1, S2 = ctx.T1, ctx.T2, ctx.S1, ctx.S2
    a, b = ctx.a, ctx.b
    pp = ctx.psi1_q                       # psi'((1-mu)*phi)
    c, d, e, ppp, _ = _third_order_coeffs(ctx)   # ppp = psi''((1-mu)*phi)

    m1 = 0.5 * phi ** 2 * (phi * c * T1 ** 3 - a * T1 * S1)
    # Both halves of m2 carry the 1/2: it is half the difference between
    # the mixed cumulant derivative and the mixed third cumulant.
    m2 = 0.5 * (phi ** 2 * (mu * c - ppp) * T1 ** 2 * T2
                + phi * (pp - a * mu) * S1 * T2)
    m3 = -0.5 * phi * ((2.0 * a + phi * ppp - phi * mu * c) * T1 ** 2 * T2
                       + (pp - mu * a) * S1 * T2)
    m4 = 0.5 * ((d * phi + 2.0 * pp - 2.0 * mu * a) * T1 * T2 ** 2
                - phi * (pp - mu * a) * T1 * S2)
    m5 = 0.5 * phi * (d * T1 * T2 ** 2 + (pp - mu * a) * T1 * S2)
    m6 = 0.5 * (e * T2 ** 3 - b * T2 * S2)
    n1 = 0.5 * phi ** 2 * a * T1 ** 2
    n2 = 0.5 * phi * (pp - a * mu) * T1 * T2
    n3 = 0.5 * b * T2 ** 2

    k_inv = information_inverse(ctx)
    k = ctx.spec.k
    k_bb = k_inv[:k, :k]
    k_bt = k_inv[:k, k:]
    k_tt = k_inv[k:, k:]
    X, Z = ctx.Xt, ctx.Zt
    p_bb = np.einsum("ij,jk,ik->i", X, k_bb, X)
    p_bt = np.einsum("ij,jk,ik->i", X, k_bt, Z)
    p_tt = np.einsum("ij,jk,ik->i", Z, k_tt, Z)
    F = np.einsum("ijk,jk->i", ctx.Xhess, k_bb)
    G = np.einsum("ijk,jk->i", ctx.Zhess, k_tt)
    return BiasIngredients(m1=m1, m2=m2, m3=m3, m4=m4, m5=m5, m6=m6,
                           n1=n1, n2=n2, n3=n3, F=F, G=G,
                           p_bb=p_bb, p_bt=p_bt, p_tt=p_tt, k_inv=k_inv)


def omega_vectors(ctx, ing=None):
    """The two length-2n correction vectors (curvature part, trace part).

    The second one is identically zero when both predictors are linear in
    their parameters.
    """
    if ing is None:
        ing = ingredients(ctx)
    w1_top = ing.m1 * ing.p_bb + (ing.m2 + ing.m3) * ing.p_bt + ing.m5 * ing.p_tt
    w1_bot = ing.m2 * ing.p_bb + (ing.m4 + ing.m5) * ing.p_bt + ing.m6 * ing.p_tt
    w2_top = ing.n2 * ing.G - ing.n1 * ing.F
    w2_bot = ing.n2 * ing.F - ing.n3 * ing.G
    omega1 = np.concatenate([w1_top, w1_bot])
    omega2 = np.concatenate([w2_top, w2_bot])
    return omega1, omega2


def _w_half_factors(ctx):
    """Per-observation symmetric square roots of the 2x2 weight blocks.

    For symmetric positive definite A the principal square root is
    (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A)); its determinant is
    sqrt(det A), giving the inverse root in closed form too.
    """
    wbb, wbt, wtt = ctx.w_bb, ctx.w_bt, ctx.w_tt
    det = wbb * wtt - wbt ** 2
    if np.any(det <= 0.0) or np.any(wbb <= 0.0):
        raise SingularInformationError(
            "per-observation information block is not positive definite")
    s = np.sqrt(det)
    t = np.sqrt(wbb + wtt + 2.0 * s)
    r11 = (wbb + s) / t
    r12 = wbt / t
    r22 = (wtt + s) / t
    det_r = s
    i11 = r22 / det_r
    i12 = -r12 / det_r
    i22 = r11 / det_r
    return (r11, r12, r22), (i11, i12, i22)


def cox_snell_bias(ctx, ing=None):
    """O(1/n) bias of the MLE of the joint parameter vector.

    Solved as the weighted least-squares regression of the correction
    vector on the stacked local design matrix, via a QR-based solve on
    half-weighted quantities rather than forming the normal equations.
    """
    if ing is None:
        ing = ingredients(ctx)
    omega1, omega2 = omega_vectors(ctx, ing)
    omega = omega1 + omega2
    n = ctx.data.n
    k, h = ctx.spec.k, ctx.spec.h
    (r11, r12, r22), (i11, i12, i22) = _w_half_factors(ctx)
    X, Z = ctx.Xt, ctx.Zt
    # Half-weighted stacked design: rows i and n+i mix the X and Z rows
    # through the 2x2 root of the weight block of observation i.
    A = np.zeros((2 * n, k + h))
    A[:n, :k] = r11[:, None] * X
    A[:n, k:] = r12[:, None] * Z
    A[n:, :k] = r12[:, None] * X
    A[n:, k:] = r22[:, None] * Z
    w_top, w_bot = omega[:n], omega[n:]
    rhs = np.concatenate([i11 * w_top + i12 * w_bot,
                          i12 * w_top + i22 * w_bot])
    sol, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < k + h:
        raise SingularInformationError(
            "half-weighted design is rank deficient in the bias solve")
    return sol


def modified_score(ctx, ing=None):
    """Score plus the bias-removing penalty term (preventive method).

    Equals U(zeta) + K(zeta) B(zeta) but is assembled directly from the
    stacked design and the correction vectors, avoiding the explicit
    inverse.
    """
    if ing is None:
        ing = ingredients(ctx)
    omega1, omega2 = omega_vectors(ctx, ing)
    omega = omega1 + omega2
    n = ctx.data.n
    pen = np.concatenate([ctx.Xt.T @ omega[:n], ctx.Zt.T @ omega[n:]])
    return score(ctx) + pen


# --- brute-force cumulant route ------------------------------------------

def _cumulant_tensors(ctx):
    """All third-order cumulants and second-order cumulant derivatives.

    Returned as dense tensors with lower beta indices first; mixed
    tensors use the index order of their names (b = mean parameter,
    t = precision parameter).
    """
    mu, phi = ctx.mu, ctx.phi
    T1, T2, S1, S2 = ctx.T1, ctx.T2, ctx.S1, ctx.S2
    a, b = ctx.a, ctx.b
    pp = ctx.psi1_q
    c, d, e, ppp, _ = _third_order_coeffs(ctx)
    gx, hx = ctx.Xt, ctx.Xhess
    gz, hz = ctx.Zt, ctx.Zhess

    def t3(coef, u1, u2, u3):
        return np.einsum("i,ir,is,iu->rsu", coef, u1, u2, u3)

    def t_hess_g(coef, hmat, gvec):
        # sum_i coef_i * hess_i[ab] * grad_i[c] -> (a, b, c)
        return np.einsum("i,irs,iu->rsu", coef, hmat, gvec)

    kap_bbb = (t3(phi ** 2 * (phi * c * T1 ** 3 - 3.0 * a * T1 * S1), gx, gx, gx)
               - t_hess_g(phi ** 2 * a * T1 ** 2, hx, gx)
               - t_hess_g(phi ** 2 * a * T1 ** 2, hx, gx).transpose(0, 2, 1)
               - t_hess_g(phi ** 2 * a * T1 ** 2, hx, gx).transpose(2, 1, 0))
    kap_bbt = (t3(-phi * (2.0 * a + phi * ppp - phi * mu * c) * T1 ** 2 * T2,
                  gx, gx, gz)
               + t3(phi * (pp - mu * a) * S1 * T2, gx, gx, gz)
               + t_hess_g(phi * (pp - mu * a) * T1 * T2, hx, gz))
    kap_btt = (t3((pp - mu * a) * (2.0 * T1 * T2 ** 2 + phi * T1 * S2), gx, gz, gz)
               + t3(phi * d * T1 * T2 ** 2, gx, gz, gz)
               + np.einsum("i,ir,isu->rsu", phi * (pp - mu * a) * T1 * T2, gx, hz))
    kap_ttt = (t3(e * T2 ** 3 - 3.0 * b * S2 * T2, gz, gz, gz)
               - t_hess_g(b * T2 ** 2, hz, gz)
               - t_hess_g(b * T2 ** 2, hz, gz).transpose(0, 2, 1)
               - t_hess_g(b * T2 ** 2, hz, gz).transpose(2, 1, 0))

    dk_bb_b = (-t3(phi ** 2 * (2.0 * a * T1 * S1 - phi * c * T1 ** 3), gx, gx, gx)
               - t_hess_g(phi ** 2 * a * T1 ** 2, hx, gx).transpose(0, 2, 1)
               - t_hess_g(phi ** 2 * a * T1 ** 2, hx, gx).transpose(2, 1, 0))
    dk_bb_t = t3(-(phi ** 2 * (ppp - mu * c) + 2.0 * phi * a) * T1 ** 2 * T2,
                 gx, gx, gz)
    dk_tt_b = t3((d * phi + 2.0 * pp - 2.0 * mu * a) * T1 * T2 ** 2, gz, gz, gx)
    dk_tt_t = (t3(e * T2 ** 3 - 2.0 * b * T2 * S2, gz, gz, gz)
               - t_hess_g(b * T2 ** 2, hz, gz).transpose(0, 2, 1)
               - t_hess_g(b * T2 ** 2, hz, gz).transpose(2, 1, 0))
    dk_bt_b = (t3(phi * (phi * mu * c - phi * ppp - a) * T1 ** 2 * T2, gx, gz, gx)
               + t3(phi * (pp - a * mu) * S1 * T2, gx, gz, gx)
               + np.einsum("i,iru,is->rsu", phi * (pp - a * mu) * T1 * T2, hx, gz))
    dk_bt_t = (t3((pp - a * mu + phi * d) * T1 * T2 ** 2, gx, gz, gz)
               + t3(phi * (pp - a * mu) * T1 * S2, gx, gz, gz)
               + np.einsum("i,ir,isu->rsu", phi * (pp - a * mu) * T1 * T2, gx, hz))

    return dict(kap_bbb=kap_bbb, kap_bbt=kap_bbt, kap_btt=kap_btt, kap_ttt=kap_ttt,
                dk_bb_b=dk_bb_b, dk_bb_t=dk_bb_t, dk_tt_b=dk_tt_b, dk_tt_t=dk_tt_t,
                dk_bt_b=dk_bt_b, dk_bt_t=dk_bt_t)


def brute_force_bias(ctx):
    """O(1/n) bias via the eight raw triple sums over cumulants.

    Dimension-guarded: the tensor route is only meant to validate the
    matrix implementation on small models.
    """
    k, h = ctx.spec.k, ctx.spec.h
    if k + h > MAX_BRUTE_FORCE_PARAMS:
        raise ValueError(
            f"brute-force bias limited to {MAX_BRUTE_FORCE_PARAMS} parameters, "
            f"model has {k + h}")
    if ctx.order < 2:
        raise ValueError("brute-force bias needs a context built with order >= 2")
    t = _cumulant_tensors(ctx)
    k_inv = information_inverse(ctx)
    kb = k_inv[:, :k]       # kappa^{a r}, r a mean index
    kt = k_inv[:, k:]       # kappa^{a R}, R a precision index
    k_bb = k_inv[:k, :k]
    k_bt = k_inv[:k, k:]
    k_tt = k_inv[k:, k:]

    # Third-order joint cumulants are symmetric under any index
    # permutation; derivative cumulants are symmetric only in the two
    # differentiated indices, so mixed cases are transposes of the
    # tensors above.
    out = np.einsum("pr,su,rsu->p", kb, k_bb, t["dk_bb_b"] - 0.5 * t["kap_bbb"])
    out += (np.einsum("pR,su,sRu->p", kt, k_bb, t["dk_bt_b"])
            - 0.5 * np.einsum("pR,su,suR->p", kt, k_bb, t["kap_bbt"]))
    out += (np.einsum("pr,Su,rSu->p", kb, k_bt.T, t["dk_bt_b"])
            - 0.5 * np.einsum("pr,Su,ruS->p", kb, k_bt.T, t["kap_bbt"]))
    out += np.einsum("pr,sU,rsU->p", kb, k_bt, t["dk_bb_t"] - 0.5 * t["kap_bbt"])
    out += (np.einsum("pR,Su,RSu->p", kt, k_bt.T, t["dk_tt_b"])
            - 0.5 * np.einsum("pR,Su,uRS->p", kt, k_bt.T, t["kap_btt"]))
    out += np.einsum("pR,sU,sRU->p", kt, k_bt, t["dk_bt_t"] - 0.5 * t["kap_btt"])
    out += np.einsum("pr,SU,rSU->p", kb, k_tt, t["dk_bt_t"] - 0.5 * t["kap_btt"])
    out += np.einsum("pR,SU,RSU->p", kt, k_tt, t["dk_tt_t"] - 0.5 * t["kap_ttt"])
    return out


def penalty_via_information(ctx, ing=None):
    """K(zeta) B(zeta) — the textbook form of the score penalty.

    Algebraically identical to the stacked-design form used in
    :func:`modified_score`; kept for cross-checking.
    """
    if ing is None:
        ing = ingredients(ctx)
    return information(ctx) @ cox_snell_bias(ctx, ing)
