# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_kernels_py`` for the contract."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, fabs, fmax, log

cnp.import_array()

cdef enum:
    EVEN = 0
    DIRICHLET = 1
    PERIODIC = 2


cdef struct Geo:
    const double* c0
    const double* c0x
    const double* c0xx
    const double* eta
    const double* etax
    const double* etaxx
    const double* hph
    const double* hpph
    const double* ih
    const double* hh
    const double* Hk
    int n, k, poles, lc, rc
    double kappa, dx


cdef struct Work:
    double* krad
    double* ktan
    double* v
    double* at
    double* F
    double* G
    double* bxs
    double* emc


cdef double _fields(const double* a, double lam, Geo* g, double lv, double rv, Work* w) noexcept nogil:
    """Fill curvatures, gauge field and rates; return d(lam)/dt."""
    cdef Py_ssize_t n = g.n, i
    cdef int k = g.k
    cdef double aL, aR, ax, axx, bx, bxx, c, cx, cxx, emc, e2a, sF = 0.0, sG = 0.0, rate = 0.0, I, Fp, F
    cdef double inv2dx = 0.5 / g.dx, invdx2 = 1.0 / (g.dx * g.dx), P2
    for i in range(n):
        if i == 0:
            if g.lc == PERIODIC:
                aL = a[n - 1]
            elif g.lc == DIRICHLET:
                aL = 2.0 * lv - a[0]
            else:
                aL = a[0]
        else:
            aL = a[i - 1]
        if i == n - 1:
            if g.rc == PERIODIC:
                aR = a[0]
            elif g.rc == DIRICHLET:
                aR = 2.0 * rv - a[n - 1]
            else:
                aR = a[n - 1]
        else:
            aR = a[i + 1]
        c = g.c0[i] + lam * g.eta[i]
        cx = g.c0x[i] + lam * g.etax[i]
        cxx = g.c0xx[i] + lam * g.etaxx[i]
        ax = (aR - aL) * inv2dx
        axx = (aR - 2.0 * a[i] + aL) * invdx2
        bx = ax + cx
        bxx = axx + cxx
        w.bxs[i] = bx
        e2a = exp(-2.0 * a[i])
        emc = exp(-c)
        w.emc[i] = emc
        if g.poles:
            P2 = expm1(-2.0 * c) * g.ih[i] * g.ih[i]
        else:
            P2 = emc * emc
        w.krad[i] = -e2a * (cx * (g.hph[i] + bx) + bxx + bx * g.hph[i] + g.hpph[i])
        w.ktan[i] = e2a * (P2 + g.kappa - 2.0 * bx * g.hph[i] - bx * bx)
        if k >= 2:
            w.F[i] = (k - 1) * (w.krad[i] - w.ktan[i]) * emc * g.ih[i]
            w.G[i] = emc * g.eta[i] * g.ih[i]
            sF += w.F[i]
            sG += w.G[i]
    if k >= 2 and sG > 0:
        rate = sF / sG
    I = 0.0
    Fp = 0.0
    for i in range(n):
        if k >= 2:
            F = w.F[i] - rate * w.G[i]
            if i == 0:
                I = 0.5 * g.dx * F
            else:
                I += 0.5 * g.dx * (Fp + F)
            Fp = F
            w.v[i] = g.hh[i] / w.emc[i] * I
        else:
            w.v[i] = 0.0
        w.at[i] = (-w.krad[i] - (k - 1) * w.ktan[i] - rate * g.eta[i]
                   + w.v[i] * (w.bxs[i] + g.hph[i]))
    return rate


cdef double _rate(const double* a, double lam, Geo* g, double lv, double rv, bint normalized,
                  Work* w) noexcept nogil:
    cdef Py_ssize_t i
    cdef double wt, sw = 0.0, swr = 0.0, shift, lamdot
    cdef int k = g.k
    lamdot = _fields(a, lam, g, lv, rv, w)
    if normalized:
        for i in range(g.n):
            wt = exp((k + 1) * a[i] + k * (g.c0[i] + lam * g.eta[i])) * g.Hk[i]
            sw += wt
            swr += wt * (2.0 * k * w.krad[i] + k * (k - 1) * w.ktan[i])
        shift = swr / sw / (k + 1)
        for i in range(g.n):
            w.at[i] += shift
    return lamdot


cdef double _rk4(double* a, double lam, Geo* g, double l0, double l1, double l2,
                 double r0, double r1, double r2, double dt, bint normalized,
                 double* tmp, double* acc, Work* w) noexcept nogil:
    """Advance ``a`` in place; return the new ``lam``."""
    cdef Py_ssize_t n = g.n, i
    cdef double q1, q2, q3, q4
    q1 = _rate(a, lam, g, l0, r0, normalized, w)
    for i in range(n):
        acc[i] = w.at[i]
        tmp[i] = a[i] + 0.5 * dt * w.at[i]
    q2 = _rate(tmp, lam + 0.5 * dt * q1, g, l1, r1, normalized, w)
    for i in range(n):
        acc[i] += 2.0 * w.at[i]
        tmp[i] = a[i] + 0.5 * dt * w.at[i]
    q3 = _rate(tmp, lam + 0.5 * dt * q2, g, l1, r1, normalized, w)
    for i in range(n):
        acc[i] += 2.0 * w.at[i]
        tmp[i] = a[i] + dt * w.at[i]
    q4 = _rate(tmp, lam + dt * q3, g, l2, r2, normalized, w)
    for i in range(n):
        a[i] = a[i] + (dt / 6.0) * (acc[i] + w.at[i])
    return lam + (dt / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4)


cdef double _volume(const double* a, double lam, Geo* g) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(g.n):
        s += exp((g.k + 1) * a[i] + g.k * (g.c0[i] + lam * g.eta[i])) * g.Hk[i]
    return s


cdef class _Ctx:
    """Keeps the static arrays alive and exposes them as a Geo struct."""
    cdef Geo geo
    cdef object keep
    cdef double[:, ::1] work

    def __init__(self, static, int k, double kappa, int poles, double dx, int lc, int rc):
        arrs = [np.ascontiguousarray(x, dtype=np.float64) for x in static]
        self.keep = arrs
        cdef double[::1] m
        n = arrs[0].shape[0]
        ptrs = []
        for x in arrs:
            if x.shape[0] != n:
                raise ValueError("static arrays must share the grid length")
        m = arrs[0]; self.geo.c0 = &m[0]
        m = arrs[1]; self.geo.c0x = &m[0]
        m = arrs[2]; self.geo.c0xx = &m[0]
        m = arrs[3]; self.geo.eta = &m[0]
        m = arrs[4]; self.geo.etax = &m[0]
        m = arrs[5]; self.geo.etaxx = &m[0]
        m = arrs[6]; self.geo.hph = &m[0]
        m = arrs[7]; self.geo.hpph = &m[0]
        m = arrs[8]; self.geo.ih = &m[0]
        m = arrs[9]; self.geo.hh = &m[0]
        m = arrs[10]; self.geo.Hk = &m[0]
        self.geo.n = n
        self.geo.k = k
        self.geo.poles = poles
        self.geo.lc = lc
        self.geo.rc = rc
        self.geo.kappa = kappa
        self.geo.dx = dx
        self.work = np.zeros((10, n))

    cdef void bind(self, Work* w):
        w.krad = &self.work[0, 0]
        w.ktan = &self.work[1, 0]
        w.v = &self.work[2, 0]
        w.at = &self.work[3, 0]
        w.F = &self.work[4, 0]
        w.G = &self.work[5, 0]
        w.bxs = &self.work[6, 0]
        w.emc = &self.work[7, 0]


def warped_fields(a, double lam, static, int k, double kappa, int poles, double dx,
                  int left_code, int right_code, double left_val, double right_val):
    """(K_rad, K_tan, v, a_t, lam_t); see the reference implementation."""
    cdef _Ctx ctx = _Ctx(static, k, kappa, poles, dx, left_code, right_code)
    cdef Work w
    ctx.bind(&w)
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double rate = _fields(&av[0], lam, &ctx.geo, left_val, right_val, &w)
    W = np.asarray(ctx.work)
    return W[0].copy(), W[1].copy(), W[2].copy(), W[3].copy(), rate


def rk4_step(a, double lam, static, int k, double kappa, int poles, double dx,
             int left_code, int right_code, lvals, rvals, double dt, bint normalized):
    cdef _Ctx ctx = _Ctx(static, k, kappa, poles, dx, left_code, right_code)
    cdef Work w
    ctx.bind(&w)
    out = np.array(a, dtype=np.float64, copy=True)
    cdef double[::1] o = out
    cdef double[:, ::1] scratch = np.empty((2, o.shape[0]))
    cdef double l0 = lvals[0], l1 = lvals[1], l2 = lvals[2]
    cdef double r0 = rvals[0], r1 = rvals[1], r2 = rvals[2]
    with nogil:
        lam = _rk4(&o[0], lam, &ctx.geo, l0, l1, l2, r0, r1, r2, dt, normalized,
                   &scratch[0, 0], &scratch[1, 0], &w)
    return out, lam


def evolve(a, double lam, static, int k, double kappa, int poles, double dx,
           int left_code, int right_code, boundary, double t, double t_target,
           double dt_max, double c_cfl, double dt_min, double ceiling, bint normalized,
           long max_steps):
    """Adaptive RK4 from ``t`` to ``t_target``.

    Returns ``(a, lam, t, steps, status, dt)`` with status 0 (target reached),
    1 (the next step would exceed the curvature ceiling; ``a`` is the last
    state below it and ``dt`` the rejected step), 2 (step underflow) or
    3 (step budget exhausted).
    """
    cdef _Ctx ctx = _Ctx(static, k, kappa, poles, dx, left_code, right_code)
    cdef Work w
    ctx.bind(&w)
    cdef Geo* g = &ctx.geo
    cdef Py_ssize_t n = g.n, i
    cur_arr = np.array(a, dtype=np.float64, copy=True)
    cdef double[::1] cur = cur_arr
    cdef double[:, ::1] scratch = np.empty((3, n))
    cdef double* trial = &scratch[0, 0]
    cdef double l0 = 0, l1 = 0, l2 = 0, r0 = 0, r1 = 0, r2 = 0
    cdef double dt = 0.0, amin, rmax, R, sec, vol0, vol1, shift, lam_new
    cdef long steps = 0
    cdef int status = 0
    cdef bint use_bc = boundary is not None
    cdef bint last, fresh = False
    vol0 = _volume(&cur[0], lam, g)
    while t < t_target:
        if steps >= max_steps:
            status = 3
            break
        if use_bc:
            l0, r0 = boundary(t)
        if not fresh:
            _fields(&cur[0], lam, g, l0, r0, &w)
        amin = cur[0]
        rmax = 0.0
        for i in range(n):
            if cur[i] < amin:
                amin = cur[i]
            R = fabs(2.0 * k * w.krad[i] + k * (k - 1) * w.ktan[i])
            if R > rmax:
                rmax = R
        dt = c_cfl * (exp(amin) * dx) ** 2
        if dt > dt_max:
            dt = dt_max
        if rmax > 0 and c_cfl / rmax < dt:
            dt = c_cfl / rmax
        last = t + dt >= t_target - 1e-12 * fmax(1.0, fabs(t_target))
        if last:
            dt = t_target - t
        if dt < dt_min:
            status = 2
            break
        if use_bc:
            l1, r1 = boundary(t + 0.5 * dt)
            l2, r2 = boundary(t + dt)
        with nogil:
            for i in range(n):
                trial[i] = cur[i]
            lam_new = _rk4(trial, lam, g, l0, l1, l2, r0, r1, r2, dt, normalized,
                           &scratch[1, 0], &scratch[2, 0], &w)
            if normalized:
                vol1 = _volume(trial, lam_new, g)
                shift = log(vol0 / vol1) / (k + 1)
                for i in range(n):
                    trial[i] += shift
            _fields(trial, lam_new, g, l2, r2, &w)
            sec = 0.0
            for i in range(n):
                if fabs(w.krad[i]) > sec:
                    sec = fabs(w.krad[i])
                if k >= 2 and fabs(w.ktan[i]) > sec:
                    sec = fabs(w.ktan[i])
        if not (sec <= ceiling):
            status = 1
            break
        for i in range(n):
            cur[i] = trial[i]
        lam = lam_new
        fresh = True
        t = t_target if last else t + dt
        steps += 1
    return cur_arr, lam, t, steps, status, dt


# ---------------------------------------------------------------------------
# L-geodesic shooting (table layout documented in _kernels_py)

cdef struct Tab:
    const double* data
    Py_ssize_t N, F
    double dx
    int poles


cdef inline void _cr(const double* row, Py_ssize_t N, double x, double dx, bint odd, int poles,
                     double* val, double* der) noexcept nogil:
    cdef double xi = x / dx - 0.5, t, p[4], sgn, c1, c2, c3
    cdef Py_ssize_t i0, j, m
    i0 = <Py_ssize_t>(xi) if xi >= 0 else <Py_ssize_t>(xi) - 1
    t = xi - i0
    for m in range(4):
        j = i0 - 1 + m
        sgn = 1.0
        if j < 0:
            j = -1 - j
            if odd:
                sgn = -1.0
        if j > N - 1:
            if poles == 2 and odd:
                sgn = -sgn
            j = 2 * N - 1 - j
        if j < 0:
            j = 0
        if j > N - 1:
            j = N - 1
        p[m] = sgn * row[j]
    c1 = 0.5 * (p[2] - p[0])
    c2 = p[0] - 2.5 * p[1] + 2.0 * p[2] - 0.5 * p[3]
    c3 = 0.5 * (p[3] - p[0]) + 1.5 * (p[1] - p[2])
    val[0] = p[1] + t * (c1 + t * (c2 + t * c3))
    der[0] = (c1 + t * (2.0 * c2 + 3.0 * t * c3)) / dx


cdef void _geo_rhs(Tab* tb, Py_ssize_t r, double s, double x, double y, double* out) noexcept nogil:
    cdef double q[7]
    cdef double qx[7]
    cdef double flip = 1.0, period, w, psi2, val, der
    cdef int f
    cdef const double* row
    if tb.poles == 2:
        period = 2.0 * tb.N * tb.dx
        x = x - period * (<double>(<long>(x / period)))
        if x < 0:
            x += period
        if x > tb.N * tb.dx:
            x = period - x
            flip = -1.0
    elif x < 0:
        x = -x
        flip = -1.0
    for f in range(7):
        row = tb.data + (r * tb.F + f) * tb.N
        _cr(row, tb.N, x, tb.dx, f == 4 or f == 5, tb.poles, &val, &der)
        if f == 4 or f == 5:
            q[f] = flip * val
            qx[f] = der
        else:
            q[f] = val
            qx[f] = flip * der
    # q: a, a_tau, R, R_tau, v, v_tau, ric
    w = y - 2.0 * s * q[4]
    psi2 = exp(2.0 * q[0])
    out[0] = y
    out[1] = (2.0 * s * s * qx[2] / psi2 + qx[0] * w * w - 2.0 * s * w * qx[4]
              - 2.0 * (qx[0] * y + 2.0 * s * q[1]) * w + 2.0 * q[4] + 2.0 * s * qx[4] * y
              + 4.0 * s * s * q[5])
    out[2] = 2.0 * s * s * q[2] + 0.5 * psi2 * w * w
    out[3] = (-2.0 * s * s * s * s * (q[3] + q[4] * qx[2]) - 2.0 * s * s * q[2]
              - 2.0 * s * s * s * qx[2] * w + s * s * q[6] * psi2 * w * w)


cdef bint _geo_one(Tab* tb, double hs, int M, double xmax, double y0, double* st,
                   double* rec) noexcept nogil:
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double s0, h6 = hs / 6.0
    cdef int j, m
    cdef bint ok = True
    st[0] = 0.0
    st[1] = y0
    st[2] = 0.0
    st[3] = 0.0
    if rec != NULL:
        for m in range(4):
            rec[m] = st[m]
    for j in range(M):
        s0 = j * hs
        _geo_rhs(tb, 2 * j, s0, st[0], st[1], k1)
        _geo_rhs(tb, 2 * j + 1, s0 + 0.5 * hs, st[0] + 0.5 * hs * k1[0], st[1] + 0.5 * hs * k1[1], k2)
        _geo_rhs(tb, 2 * j + 1, s0 + 0.5 * hs, st[0] + 0.5 * hs * k2[0], st[1] + 0.5 * hs * k2[1], k3)
        _geo_rhs(tb, 2 * j + 2, s0 + hs, st[0] + hs * k3[0], st[1] + hs * k3[1], k4)
        for m in range(4):
            st[m] += h6 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m])
        if tb.poles != 2 and fabs(st[0]) > xmax:
            ok = False
        if not (fabs(st[0]) < 1e300 and fabs(st[1]) < 1e300):
            ok = False
            break
        if rec != NULL:
            for m in range(4):
                rec[4 * (j + 1) + m] = st[m]
    return ok


cdef Tab _tab(cnp.ndarray[double, ndim=3, mode="c"] table, double dx, int poles):
    cdef Tab tb
    tb.data = &table[0, 0, 0]
    tb.F = table.shape[1]
    tb.N = table.shape[2]
    tb.dx = dx
    tb.poles = poles
    return tb


def shoot_many(table, double hs, int M, double dx, int poles, double xmax, y0):
    cdef cnp.ndarray[double, ndim=3, mode="c"] T = np.ascontiguousarray(table, dtype=np.float64)
    if T.shape[0] < 2 * M + 1 or T.shape[1] != 7:
        raise ValueError("table shape does not match the step count")
    cdef double[::1] y = np.ascontiguousarray(np.atleast_1d(y0), dtype=np.float64)
    cdef Py_ssize_t m = y.shape[0], i
    out = np.empty((4, m))
    okarr = np.empty(m, dtype=bool)
    cdef double[:, ::1] o = out
    cdef double st[4]
    cdef Tab tb = _tab(T, dx, poles)
    cdef bint ok
    for i in range(m):
        with nogil:
            ok = _geo_one(&tb, hs, M, xmax, y[i], st, NULL)
        o[0, i] = st[0]
        o[1, i] = st[1]
        o[2, i] = st[2]
        o[3, i] = st[3]
        okarr[i] = ok
    return out[0], out[1], out[2], out[3], okarr


def shoot_path(table, double hs, int M, double dx, int poles, double xmax, double y0):
    cdef cnp.ndarray[double, ndim=3, mode="c"] T = np.ascontiguousarray(table, dtype=np.float64)
    if T.shape[0] < 2 * M + 1 or T.shape[1] != 7:
        raise ValueError("table shape does not match the step count")
    rec = np.full((M + 1, 4), np.nan)
    cdef double[:, ::1] r = rec
    cdef double st[4]
    cdef Tab tb = _tab(T, dx, poles)
    _geo_one(&tb, hs, M, xmax, y0, st, &r[0, 0])
    return rec
