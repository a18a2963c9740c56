# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: dense contractions, the augmented right-hand side and a
fixed-step RK4 driver for models implemented natively.

Mirrors ``_pykernels``; layout of the flat state is documented in ``_layout``.
"""
import numpy as np

from libc.math cimport sqrt, isfinite, INFINITY
from libc.stdlib cimport malloc, free
from libc.string cimport memset

from tensorsysid.errors import IntegrationError

NAME = "native"


# ---------------------------------------------------------------------------
# contraction primitives on raw row-major buffers

cdef inline void _mm(int r, int s, int c, const double* A, const double* B,
                     double* R, bint acc) noexcept nogil:
    # R (r x c) (+)= A (r x s) B (s x c)
    cdef int i, k, j
    cdef double a
    if not acc:
        memset(R, 0, r * c * sizeof(double))
    for i in range(r):
        for k in range(s):
            a = A[i * s + k]
            if a != 0.0:
                for j in range(c):
                    R[i * c + j] += a * B[k * c + j]


cdef inline void _mid(int a, int b, int c, int J, const double* T, const double* B,
                      double* R, bint acc) noexcept nogil:
    # R[i, j, k] (+)= sum_m B[m, j] T[i, m, k];  T: a x b x c, B: b x J, R: a x J x c
    cdef int i, m, j, k
    cdef double bv
    if not acc:
        memset(R, 0, a * J * c * sizeof(double))
    for i in range(a):
        for m in range(b):
            for j in range(J):
                bv = B[m * J + j]
                if bv != 0.0:
                    for k in range(c):
                        R[(i * J + j) * c + k] += bv * T[(i * b + m) * c + k]


cdef void _rhs_core(int n, int m, int order, const double* fx, const double* fp,
                    const double* fxx, const double* fxp, const double* fpx,
                    const double* fpp, const double* y, double* out,
                    double* scratch) noexcept nogil:
    # out[0:n] (= f) is written by the caller
    cdef int o_phi = n
    cdef int o_th = o_phi + n * n
    cdef int o_phi1 = o_th + n * m
    cdef int o_th1 = o_phi1 + n * n * n
    cdef int o_chi1 = o_th1 + n * m * m
    cdef int o_chi2 = o_chi1 + n * n * m
    cdef int i
    cdef double* s_phi = scratch              # n*n*n : fxx_imb phi_bk
    cdef double* s_th = scratch + n * n * n   # n*n*m : fxx_imb theta_bk
    if order < 1:
        return
    _mm(n, n, n, fx, y + o_phi, out + o_phi, False)
    _mm(n, n, m, fx, y + o_th, out + o_th, False)
    for i in range(n * m):
        out[o_th + i] += fp[i]
    if order < 2:
        return

    _mm(n * n, n, n, fxx, y + o_phi, s_phi, False)
    _mm(n * n, n, m, fxx, y + o_th, s_th, False)

    # phi1
    _mm(n, n, n * n, fx, y + o_phi1, out + o_phi1, False)
    _mid(n, n, n, n, s_phi, y + o_phi, out + o_phi1, True)
    # theta1
    _mm(n, n, m * m, fx, y + o_th1, out + o_th1, False)
    _mid(n, n, m, m, s_th, y + o_th, out + o_th1, True)
    _mm(n * m, n, m, fpx, y + o_th, out + o_th1, True)
    _mid(n, n, m, m, fxp, y + o_th, out + o_th1, True)
    for i in range(n * m * m):
        out[o_th1 + i] += fpp[i]
    # chi1
    _mm(n, n, n * m, fx, y + o_chi1, out + o_chi1, False)
    _mid(n, n, m, n, s_th, y + o_phi, out + o_chi1, True)
    _mid(n, n, m, n, fxp, y + o_phi, out + o_chi1, True)
    # chi2
    _mm(n, n, m * n, fx, y + o_chi2, out + o_chi2, False)
    _mid(n, n, n, m, s_phi, y + o_th, out + o_chi2, True)
    _mm(n * m, n, n, fpx, y + o_phi, out + o_chi2, True)


cdef inline int _size(int n, int m, int order) noexcept nogil:
    if order == 0:
        return n
    if order == 1:
        return n + n * n + n * m
    return n + n * n + n * m + n * n * n + n * m * m + 2 * n * n * m


# ---------------------------------------------------------------------------
# Python-visible tensor-core kernels

def mat_mul(const double[:, ::1] A, const double[:, ::1] B):
    cdef int a = A.shape[0], b = A.shape[1], c = B.shape[1]
    out = np.empty((a, c))
    cdef double[:, ::1] R = out
    if a * c:
        _mm(a, b, c, &A[0, 0] if a * b else NULL, &B[0, 0] if b * c else NULL,
            &R[0, 0], False)
    return out


def contract_last2(const double[:, :, ::1] T, const double[:, ::1] B,
                   const double[:, ::1] C):
    cdef int a = T.shape[0], b = T.shape[1], c = T.shape[2]
    cdef int J = B.shape[1], K = C.shape[1]
    out = np.zeros((a, J, K))
    if a * J * K == 0 or b * c == 0:
        return out
    cdef double[:, :, ::1] R = out
    cdef double[::1] s = np.empty(a * b * K)
    _mm(a * b, c, K, &T[0, 0, 0], &C[0, 0], &s[0], False)
    _mid(a, b, K, J, &s[0], &B[0, 0], &R[0, 0, 0], False)
    return out


def contract_first(const double[:, ::1] A, const double[:, :, ::1] T):
    cdef int a = A.shape[0], m = A.shape[1]
    cdef int j = T.shape[1], k = T.shape[2]
    out = np.zeros((a, j, k))
    if a * j * k == 0 or m == 0:
        return out
    cdef double[:, :, ::1] R = out
    _mm(a, m, j * k, &A[0, 0], &T[0, 0, 0], &R[0, 0, 0], False)
    return out


cdef const double* _ptr(object arr, object keep):
    cdef const double[::1] v
    if arr is None:
        return NULL
    v = np.ascontiguousarray(arr, dtype=np.float64).ravel()
    keep.append(v)
    if v.shape[0] == 0:
        return NULL
    return &v[0]


def augmented_rhs(int n, int m, int order, f, fx, fp, fxx, fxp, fpx, fpp,
                  const double[::1] y, double[::1] out):
    """Write the time derivative of the flat augmented state ``y`` into ``out``."""
    cdef list keep = []
    cdef const double* pf = _ptr(f, keep)
    cdef int i
    for i in range(n):
        out[i] = pf[i]
    cdef double[::1] scratch = np.empty(n * n * n + n * n * m + 1)
    _rhs_core(n, m, order, _ptr(fx, keep), _ptr(fp, keep), _ptr(fxx, keep),
              _ptr(fxp, keep), _ptr(fpx, keep), _ptr(fpp, keep), &y[0], &out[0],
              &scratch[0])
    return np.asarray(out)


# ---------------------------------------------------------------------------
# native models

cdef class NativeDynamics:
    """Base for models whose flow derivatives are evaluated in C.

    ``flow`` must write every structurally nonzero entry on every call; the
    driver zero-initialises the derivative buffers once.
    """
    cdef readonly int n, m
    cdef readonly double floor

    def __cinit__(self, *args, **kwargs):
        self.floor = -INFINITY

    cdef void flow(self, double t, const double* x, const double* p, double u,
                   int order, double* f, double* fx, double* fp, double* fxx,
                   double* fxp, double* fpx, double* fpp) noexcept nogil:
        pass

    def evaluate(self, double t, x, p, double u, int order=2):
        """Evaluate the flow derivatives from Python (testing aid)."""
        cdef int n = self.n, m = self.m
        cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
        cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
        f = np.zeros(n); fx = np.zeros((n, n)); fp = np.zeros((n, m))
        fxx = np.zeros((n, n, n)); fxp = np.zeros((n, n, m))
        fpx = np.zeros((n, m, n)); fpp = np.zeros((n, m, m))
        cdef double[::1] bf = f.ravel(), bfx = fx.ravel(), bfp = fp.ravel()
        cdef double[::1] bfxx = fxx.ravel(), bfxp = fxp.ravel()
        cdef double[::1] bfpx = fpx.ravel(), bfpp = fpp.ravel()
        self.flow(t, &xv[0], &pv[0] if m > 0 else NULL, u, order, &bf[0], &bfx[0], &bfp[0],
                  &bfxx[0], &bfxp[0], &bfpx[0], &bfpp[0])
        return f, fx, fp, fxx, fxp, fpx, fpp


cdef class NativeSilverbox(NativeDynamics):
    # x = (y, ydot), p = (m, d, a, b)
    cdef readonly bint inverse_mass

    def __init__(self, bint inverse_mass=False):
        self.n = 2
        self.m = 4
        self.inverse_mass = inverse_mass

    cdef void flow(self, double t, const double* x, const double* p, double u,
                   int order, double* f, double* fx, double* fp, double* fxx,
                   double* fxp, double* fpx, double* fpp) noexcept nogil:
        cdef double x1 = x[0], x2 = x[1]
        cdef double ms = p[0], d = p[1], a = p[2], b = p[3]
        cdef double im = 1.0 / ms
        cdef double q = d * x2 + a * x1 + b * x1 * x1 * x1
        cdef double qm = q - u if self.inverse_mass else q
        cdef double k1 = a + 3.0 * b * x1 * x1
        f[0] = x2
        f[1] = -qm * im if self.inverse_mass else u - q * im
        if order < 1:
            return
        fx[1] = 1.0
        fx[2] = -k1 * im
        fx[3] = -d * im
        # fp row 1: (n, m) -> index 1*4 + k
        fp[4] = qm * im * im
        fp[5] = -x2 * im
        fp[6] = -x1 * im
        fp[7] = -x1 * x1 * x1 * im
        if order < 2:
            return
        # fxx[1, 0, 0]
        fxx[4] = -6.0 * b * x1 * im
        # fxp[1, a, k] -> 8 + a*4 + k ; fpx[1, k, a] -> 8 + k*2 + a
        fxp[8] = k1 * im * im
        fxp[10] = -im
        fxp[11] = -3.0 * x1 * x1 * im
        fxp[12] = d * im * im
        fxp[13] = -im
        fpx[8] = fxp[8]
        fpx[12] = fxp[10]
        fpx[14] = fxp[11]
        fpx[9] = fxp[12]
        fpx[11] = fxp[13]
        # fpp[1, j, k] -> 16 + j*4 + k
        fpp[16] = -2.0 * qm * im * im * im
        fpp[17] = x2 * im * im
        fpp[20] = fpp[17]
        fpp[18] = x1 * im * im
        fpp[24] = fpp[18]
        fpp[19] = x1 * x1 * x1 * im * im
        fpp[28] = fpp[19]


cdef class NativeTwoTank(NativeDynamics):
    # x = (level 1, level 2), p = (p1, p2, p3, p4)
    cdef readonly double eps

    def __init__(self, double eps=1e-12):
        self.n = 2
        self.m = 4
        self.eps = eps
        self.floor = eps

    cdef void flow(self, double t, const double* x, const double* p, double u,
                   int order, double* f, double* fx, double* fp, double* fxx,
                   double* fxp, double* fpx, double* fpp) noexcept nogil:
        cdef double x1 = x[0] if x[0] > self.eps else self.eps
        cdef double x2 = x[1] if x[1] > self.eps else self.eps
        cdef double s1 = sqrt(x1), s2 = sqrt(x2)
        cdef double d1 = 0.5 / s1, d2 = 0.5 / s2
        cdef double dd1 = -0.25 / (x1 * s1), dd2 = -0.25 / (x2 * s2)
        f[0] = -p[0] * s1 + p[1] * u
        f[1] = -p[2] * s2 + p[3] * s1
        if order < 1:
            return
        fx[0] = -p[0] * d1
        fx[2] = p[3] * d1
        fx[3] = -p[2] * d2
        fp[0] = -s1
        fp[1] = u
        fp[6] = -s2
        fp[7] = s1
        if order < 2:
            return
        fxx[0] = -p[0] * dd1
        fxx[4] = p[3] * dd1
        fxx[7] = -p[2] * dd2
        # fxp[i, a, k] -> i*8 + a*4 + k ; fpx[i, k, a] -> i*8 + k*2 + a
        fxp[0] = -d1
        fxp[8 + 4 + 2] = -d2
        fxp[8 + 3] = d1
        fpx[0] = -d1
        fpx[8 + 2 * 2 + 1] = -d2
        fpx[8 + 3 * 2] = d1


# ---------------------------------------------------------------------------
# RK4 driver

def integrate_native(NativeDynamics dyn, x0, p, u_hold, times, int substeps,
                     int order):
    """Fixed-step RK4 of the augmented system for a native model.

    Returns ``(data, clamp_hits)`` where ``data`` has one flat augmented state
    per sample time.
    """
    cdef int n = dyn.n, m = dyn.m
    cdef int L = _size(n, m, order)
    cdef const double[::1] xv = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[::1] uv = np.ascontiguousarray(u_hold, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef int P1 = tv.shape[0]
    data = np.empty((P1, L))
    if P1 == 0:
        return data, 0
    cdef double[:, ::1] D = data

    cdef int nbuf = 7 * L + n + n * n + n * m + n * n * n + 2 * n * n * m + n * m * m \
        + n * n * n + n * n * m + 1
    cdef double* buf = <double*> malloc(nbuf * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    memset(buf, 0, nbuf * sizeof(double))
    cdef double* y = buf
    cdef double* yt = y + L
    cdef double* k1 = yt + L
    cdef double* k2 = k1 + L
    cdef double* k3 = k2 + L
    cdef double* k4 = k3 + L
    cdef double* spare = k4 + L
    cdef double* f = spare + L
    cdef double* fx = f + n
    cdef double* fp = fx + n * n
    cdef double* fxx = fp + n * m
    cdef double* fxp = fxx + n * n * n
    cdef double* fpx = fxp + n * n * m
    cdef double* fpp = fpx + n * m * n
    cdef double* scratch = fpp + n * m * m

    cdef int i, h, s, stage, bad_h = -1, bad_s = -1
    cdef long hits = 0
    cdef double t0, dt, t, u, floor = dyn.floor
    cdef const double* pp = &pv[0] if m > 0 else NULL
    cdef double* ks[4]
    ks[0] = k1; ks[1] = k2; ks[2] = k3; ks[3] = k4
    cdef double cst[4]
    cst[0] = 0.0; cst[1] = 0.5; cst[2] = 0.5; cst[3] = 1.0

    for i in range(n):
        y[i] = xv[i]
    if order >= 1:
        for i in range(n):
            y[n + i * n + i] = 1.0
    for i in range(L):
        D[0, i] = y[i]

    try:
        with nogil:
            for h in range(P1 - 1):
                t0 = tv[h]
                dt = (tv[h + 1] - t0) / substeps
                u = uv[h]
                for s in range(substeps):
                    t = t0 + s * dt
                    for stage in range(4):
                        if stage == 0:
                            for i in range(L):
                                yt[i] = y[i]
                        else:
                            for i in range(L):
                                yt[i] = y[i] + (cst[stage] * dt) * ks[stage - 1][i]
                        for i in range(n):
                            if yt[i] < floor:
                                hits += 1
                                break
                        dyn.flow(t + cst[stage] * dt, yt, pp, u, order,
                                 f, fx, fp, fxx, fxp, fpx, fpp)
                        for i in range(n):
                            ks[stage][i] = f[i]
                        _rhs_core(n, m, order, fx, fp, fxx, fxp, fpx, fpp, yt,
                                  ks[stage], scratch)
                    for i in range(L):
                        y[i] = y[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    for i in range(L):
                        if not isfinite(y[i]):
                            bad_h = h
                            bad_s = s
                            break
                    if bad_h >= 0:
                        break
                if bad_h >= 0:
                    break
                for i in range(L):
                    D[h + 1, i] = y[i]
    finally:
        free(buf)
    if bad_h >= 0:
        t = tv[bad_h] + bad_s * (tv[bad_h + 1] - tv[bad_h]) / substeps
        raise IntegrationError(
            f"non-finite augmented state at t={t:.9g} "
            f"(interval {bad_h}, substep {bad_s})",
            time=t, interval=bad_h, substep=bad_s)
    return data, hits
