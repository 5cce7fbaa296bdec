"""Reference (numpy) implementation of the hot kernels.

Selected automatically when the compiled extension is unavailable.  The
signatures mirror ``_kernels.pyx`` exactly.

Profile conventions: cells ``i = 0..N-1``; ``a`` is the log of the radial
metric factor and ``c = c0 + lam * eta`` the log-ratio, so the fibre radius is
``exp(a + c) h(x)``.  ``lam`` is a scalar unknown evolved alongside ``a``; it
absorbs the change of the conformal modulus so the gauge vector field closes
at both poles.  Boundary codes: 0 even reflection, 1 Dirichlet (value on the
face), 2 periodic.

``static`` is the tuple ``(c0, c0x, c0xx, eta, etax, etaxx, hph, hpph, ih, hh, Hk)``
with ``hph = h'/h``, ``hpph = h''/h``, ``ih = 1/h``, ``hh = h`` and ``Hk`` the
cell integral of ``h^k``.
"""
import numpy as np

EVEN, DIRICHLET, PERIODIC = 0, 1, 2


def _extend(a, left_code, right_code, left_val, right_val):
    n = a.shape[0]
    e = np.empty(n + 2)
    e[1:-1] = a
    if left_code == PERIODIC:
        e[0] = a[-1]
        e[-1] = a[0]
        return e
    e[0] = 2.0 * left_val - a[0] if left_code == DIRICHLET else a[0]
    e[-1] = 2.0 * right_val - a[-1] if right_code == DIRICHLET else a[-1]
    return e


def warped_fields(a, lam, static, k, kappa, poles, dx,
                  left_code, right_code, left_val, right_val):
    """Return ``(K_rad, K_tan, v, a_t, lam_t)``."""
    c0, c0x, c0xx, eta, etax, etaxx, hph, hpph, ih, hh, _ = static
    e = _extend(a, left_code, right_code, left_val, right_val)
    c = c0 + lam * eta
    cx = c0x + lam * etax
    cxx = c0xx + lam * etaxx
    ax = (e[2:] - e[:-2]) / (2.0 * dx)
    axx = (e[2:] - 2.0 * a + e[:-2]) / (dx * dx)
    bx = ax + cx
    bxx = axx + cxx
    e2a = np.exp(-2.0 * a)
    emc = np.exp(-c)
    P2 = np.expm1(-2.0 * c) * ih * ih if poles else emc * emc
    krad = -e2a * (cx * (hph + bx) + bxx + bx * hph + hpph)
    ktan = e2a * (P2 + kappa - 2.0 * bx * hph - bx * bx)
    rate = 0.0
    if k >= 2:
        F = (k - 1) * (krad - ktan) * emc * ih
        G = emc * eta * ih
        sG = G.sum()
        if sG > 0:
            rate = float(F.sum() / sG)
        F = F - rate * G
        I = np.empty_like(F)
        I[0] = 0.5 * dx * F[0]
        I[1:] = I[0] + np.cumsum(0.5 * dx * (F[:-1] + F[1:]))
        v = hh * np.exp(c) * I
    else:
        v = np.zeros_like(a)
    at = -krad - (k - 1) * ktan - rate * eta + v * (bx + hph)
    return krad, ktan, v, at, rate


def _volume(a, lam, static, k):
    c0, eta, Hk = static[0], static[3], static[10]
    return float(np.sum(np.exp((k + 1) * a + k * (c0 + lam * eta)) * Hk))


def _rate(a, lam, static, k, kappa, poles, dx, lc, rc, lv, rv, normalized):
    krad, ktan, _, at, rate = warped_fields(a, lam, static, k, kappa, poles, dx, lc, rc, lv, rv)
    if normalized:
        R = 2.0 * k * krad + k * (k - 1) * ktan
        w = np.exp((k + 1) * a + k * (static[0] + lam * static[3])) * static[10]
        at = at + (w @ R) / w.sum() / (k + 1)
    return at, rate


def rk4_step(a, lam, static, k, kappa, poles, dx,
             left_code, right_code, lvals, rvals, dt, normalized):
    """One classical RK4 step; ``lvals``/``rvals`` hold boundary values at t, t+dt/2, t+dt."""
    args = (static, k, kappa, poles, dx, left_code, right_code)
    k1, q1 = _rate(a, lam, *args, lvals[0], rvals[0], normalized)
    k2, q2 = _rate(a + 0.5 * dt * k1, lam + 0.5 * dt * q1, *args, lvals[1], rvals[1], normalized)
    k3, q3 = _rate(a + 0.5 * dt * k2, lam + 0.5 * dt * q2, *args, lvals[1], rvals[1], normalized)
    k4, q4 = _rate(a + dt * k3, lam + dt * q3, *args, lvals[2], rvals[2], normalized)
    return (a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
            lam + (dt / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4))


def evolve(a, lam, static, k, kappa, poles, dx, left_code, right_code, boundary,
           t, t_target, dt_max, c_cfl, dt_min, ceiling, normalized, max_steps):
    """Adaptive RK4 from ``t`` to ``t_target``; see the compiled version for the contract."""
    cur = np.array(a, dtype=float)
    geo = (static, k, kappa, poles, dx, left_code, right_code)
    vol0 = _volume(cur, lam, static, k)
    steps, status, dt = 0, 0, 0.0
    bc = boundary if boundary is not None else (lambda _t: (0.0, 0.0))
    while t < t_target:
        if steps >= max_steps:
            status = 3
            break
        l0, r0 = bc(t)
        kr, kt, _, _, _ = warped_fields(cur, lam, *geo, l0, r0)
        rmax = float(np.max(np.abs(2.0 * k * kr + k * (k - 1) * kt)))
        dt = min(dt_max, c_cfl * (np.exp(cur.min()) * dx) ** 2)
        if rmax > 0:
            dt = min(dt, c_cfl / rmax)
        last = t + dt >= t_target - 1e-12 * max(1.0, abs(t_target))
        if last:
            dt = t_target - t
        if dt < dt_min:
            status = 2
            break
        l1, r1 = bc(t + 0.5 * dt)
        l2, r2 = bc(t + dt)
        trial, lam_new = rk4_step(cur, lam, *geo, (l0, l1, l2), (r0, r1, r2), dt, normalized)
        if normalized:
            trial = trial + np.log(vol0 / _volume(trial, lam_new, static, k)) / (k + 1)
        kr, kt, _, _, _ = warped_fields(trial, lam_new, *geo, l2, r2)
        sec = float(np.max(np.abs(kr)))
        if k >= 2:
            sec = max(sec, float(np.max(np.abs(kt))))
        if not sec <= ceiling:
            status = 1
            break
        cur, lam = trial, lam_new
        t = t_target if last else t + dt
        steps += 1
    return cur, lam, t, steps, status, dt


# ---------------------------------------------------------------------------
# L-geodesic shooting on a space-time table
#
# ``table`` has shape (2M + 1, 7, N): rows are s = j * hs / 2 (RK4 stage
# points of M steps of size hs), fields are a, a_tau, R, R_tau, v, v_tau and
# the radial Ricci eigenvalue; v and v_tau are odd under reflection at a
# pole, the rest even.  ``poles`` is 2 when both ends are poles (sphere base)
# and 1 otherwise; then paths beyond ``xmax`` fail.

_ODD = (False, False, False, False, True, True, False)


def _locate(x, dx, N, poles):
    """Fold x into the fundamental interval; return (x, flip) with flip = -1 after an odd reflection."""
    x = np.asarray(x, dtype=float)
    flip = np.ones_like(x)
    if poles == 2:
        period = 2.0 * N * dx
        x = np.mod(x, period)
        over = x > N * dx
        x = np.where(over, period - x, x)
        flip = np.where(over, -1.0, 1.0)
    else:
        neg = x < 0
        x = np.where(neg, -x, x)
        flip = np.where(neg, -1.0, 1.0)
    return x, flip


def _interp(row, x, dx, N, odd, poles):
    """Catmull-Rom value and x-derivative of one field at folded points."""
    xi = x / dx - 0.5
    i = np.floor(xi).astype(int)
    t = xi - i
    sign = -1.0 if odd else 1.0
    vals = []
    for off in (-1, 0, 1, 2):
        j = i + off
        s = np.ones_like(t)
        low = j < 0
        j = np.where(low, -1 - j, j)
        s = np.where(low, sign, s)
        high = j > N - 1
        if poles == 2:
            s = np.where(high, s * sign, s)
        j = np.where(high, 2 * N - 1 - j, j)
        j = np.clip(j, 0, N - 1)
        vals.append(s * row[j])
    p0, p1, p2, p3 = vals
    c1 = 0.5 * (p2 - p0)
    c2 = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3
    c3 = 0.5 * (p3 - p0) + 1.5 * (p1 - p2)
    val = p1 + t * (c1 + t * (c2 + t * c3))
    der = (c1 + t * (2.0 * c2 + 3.0 * t * c3)) / dx
    return val, der


def _geo_rhs(table, r, s, x, y, dx, N, poles):
    xf, flip = _locate(x, dx, N, poles)
    q = {}
    for f, name in enumerate(("a", "at", "R", "Rt", "v", "vt", "ric")):
        val, der = _interp(table[r, f], xf, dx, N, _ODD[f], poles)
        if _ODD[f]:
            q[name], q[name + "_x"] = flip * val, der
        else:
            q[name], q[name + "_x"] = val, flip * der
    a, ax, at = q["a"], q["a_x"], q["at"]
    R, Rx, Rt = q["R"], q["R_x"], q["Rt"]
    v, vx, vt, ric = q["v"], q["v_x"], q["vt"], q["ric"]
    w = y - 2.0 * s * v
    psi2 = np.exp(2.0 * a)
    ys = (2.0 * s * s * Rx / psi2 + ax * w * w - 2.0 * s * w * vx
          - 2.0 * (ax * y + 2.0 * s * at) * w + 2.0 * v + 2.0 * s * vx * y + 4.0 * s * s * vt)
    Ls = 2.0 * s * s * R + 0.5 * psi2 * w * w
    Ks = (-2.0 * s**4 * (Rt + v * Rx) - 2.0 * s * s * R - 2.0 * s**3 * Rx * w
          + s * s * ric * psi2 * w * w)
    return x * 0 + y, ys, Ls, Ks


def _geo_integrate(table, hs, M, dx, N, poles, xmax, y0, record):
    y = np.array(y0, dtype=float)
    x = np.zeros_like(y)
    L = np.zeros_like(y)
    K = np.zeros_like(y)
    ok = np.ones(y.shape, dtype=bool)
    path = [np.stack([x, y, L, K])] if record else None
    for j in range(M):
        s0 = j * hs
        k1 = _geo_rhs(table, 2 * j, s0, x, y, dx, N, poles)
        k2 = _geo_rhs(table, 2 * j + 1, s0 + 0.5 * hs, x + 0.5 * hs * k1[0], y + 0.5 * hs * k1[1], dx, N, poles)
        k3 = _geo_rhs(table, 2 * j + 1, s0 + 0.5 * hs, x + 0.5 * hs * k2[0], y + 0.5 * hs * k2[1], dx, N, poles)
        k4 = _geo_rhs(table, 2 * j + 2, s0 + hs, x + hs * k3[0], y + hs * k3[1], dx, N, poles)
        x = x + hs / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y = y + hs / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        L = L + hs / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        K = K + hs / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        if poles != 2:
            ok &= np.abs(x) <= xmax
        ok &= np.isfinite(x) & np.isfinite(y)
        if record:
            path.append(np.stack([x, y, L, K]))
    if record:
        return np.array(path)
    return x, y, L, K, ok


def shoot_many(table, hs, M, dx, poles, xmax, y0):
    """Integrate meridional L-geodesics from the pole for each initial s-velocity in ``y0``.

    Returns (x, y, L, K, ok) at s = M * hs.
    """
    table = np.asarray(table, dtype=float)
    return _geo_integrate(table, hs, M, dx, table.shape[2], poles, xmax, np.atleast_1d(y0), False)


def shoot_path(table, hs, M, dx, poles, xmax, y0):
    """Nodes (M + 1, 4) of (x, y, L, K) for a single initial velocity."""
    table = np.asarray(table, dtype=float)
    return _geo_integrate(table, hs, M, dx, table.shape[2], poles, xmax, np.atleast_1d(float(y0)), True)[:, :, 0]
