# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fixed-step RK4 loop for the four-compartment model.

Must stay operation-for-operation identical to ``_kernels_py.integrate``;
the test suite compares the two bitwise.
"""

from libc.math cimport isfinite, fabs

cdef enum:
    STATUS_OK = 0
    STATUS_NEGATIVE = 1
    STATUS_OVERFLOW = 2


cdef inline void _rhs(double x0, double lam_rem, double mu, double k, double a, double g1,
                      double ab, double delta, double c,
                      double x, double y, double d, double v,
                      double* out) noexcept nogil:
    out[0] = mu * (x0 - x) + lam_rem - k * v * x
    out[1] = k * v * x - delta * y
    out[2] = a * y + g1 * d - ab * d - delta * d
    out[3] = ab * d - c * v


def integrate(double[::1] p, double[::1] y0, double h, Py_ssize_t nsteps,
              Py_ssize_t output_every, bint clamp, double neg_tol,
              double[:, ::1] out):
    """Advance ``nsteps`` RK4 steps, writing every ``output_every``-th state.

    Returns ``(status, step, nrec)``: status 0 ok, 1 negativity, 2 overflow;
    ``step`` is the index of the offending step (or ``nsteps``); ``nrec`` the
    number of rows written to ``out``. The terminal state is always recorded.
    """
    cdef double lam = p[0], mu = p[1], k = p[2], a = p[3], beta = p[4]
    cdef double delta = p[5], c = p[6], alpha = p[7], gamma = p[8]
    # lam - mu X written as mu (x0 - X) so it vanishes exactly at X = x0
    cdef double x0 = lam / mu if mu > 0.0 else 0.0
    cdef double lam_rem = 0.0 if mu > 0.0 else lam
    cdef double g1 = gamma * (1 - alpha)
    cdef double ab = alpha * beta
    cdef double hh = 0.5 * h
    cdef double h6 = h / 6.0
    cdef double y[4]
    cdef double s[4]
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double scale[4]
    cdef Py_ssize_t i, j, n, nrec = 0
    cdef int status = STATUS_OK
    cdef Py_ssize_t fail_step = nsteps
    cdef double mag

    for j in range(4):
        y[j] = y0[j]
        scale[j] = fabs(y[j]) if fabs(y[j]) > 1.0 else 1.0
        out[0, j] = y[j]
    nrec = 1

    with nogil:
        for n in range(nsteps):
            _rhs(x0, lam_rem, mu, k, a, g1, ab, delta, c, y[0], y[1], y[2], y[3], k1)
            for j in range(4):
                s[j] = y[j] + hh * k1[j]
            _rhs(x0, lam_rem, mu, k, a, g1, ab, delta, c, s[0], s[1], s[2], s[3], k2)
            for j in range(4):
                s[j] = y[j] + hh * k2[j]
            _rhs(x0, lam_rem, mu, k, a, g1, ab, delta, c, s[0], s[1], s[2], s[3], k3)
            for j in range(4):
                s[j] = y[j] + h * k3[j]
            _rhs(x0, lam_rem, mu, k, a, g1, ab, delta, c, s[0], s[1], s[2], s[3], k4)
            for j in range(4):
                y[j] = y[j] + h6 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])

            for j in range(4):
                if not isfinite(y[j]):
                    status = STATUS_OVERFLOW
                if y[j] < 0.0:
                    if clamp:
                        y[j] = 0.0
                    elif y[j] < -neg_tol * scale[j]:
                        status = STATUS_NEGATIVE
                mag = fabs(y[j])
                if mag > scale[j]:
                    scale[j] = mag
            if status != STATUS_OK:
                fail_step = n + 1
                break
            if (n + 1) % output_every == 0 or n + 1 == nsteps:
                for j in range(4):
                    out[nrec, j] = y[j]
                nrec += 1

    return status, fail_step, nrec
