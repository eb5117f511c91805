# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled gate kernel.

C mirror of ``_gatekernel_py.run_gates``.  The arithmetic (operation order,
libm calls) matches the pure-Python kernel statement for statement and the
extension is built with -ffp-contract=off, so both kernels consume the same
uniforms and produce bit-identical gate sequences.  Keep in lockstep with
``_gatekernel_py.py``, which documents the per-gate draw order.
"""

from libc.math cimport M_PI, cos, exp, log1p, pow, sqrt

cdef double TWO_PI = 2.0 * M_PI
cdef long WALK_CAP = 4096


cdef class _Cursor:
    """Direct view on a RandomStream's buffer with C-side cursor."""

    cdef object stream
    cdef double[::1] buf
    cdef Py_ssize_t pos
    cdef Py_ssize_t n

    def __init__(self, stream):
        self.stream = stream
        self.buf = stream.buffer()
        self.pos = stream.pos
        self.n = self.buf.shape[0]

    cdef double next(self):
        cdef double u
        if self.pos >= self.n:
            self.buf = self.stream.refill()
            self.n = self.buf.shape[0]
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


cdef long _poisson_inv(double mu, _Cursor cur):
    cdef double u, pmf, cdf
    cdef long k = 0
    u = cur.next()
    pmf = exp(-mu)
    cdf = pmf
    while u > cdf and k < WALK_CAP:
        k += 1
        pmf = pmf * (mu / k)
        cdf = cdf + pmf
    return k


cdef long _binom_inv(long n, double p, _Cursor cur):
    cdef double u, nd, odds, pmf, cdf, k
    u = cur.next()
    nd = <double>n
    odds = p / (1.0 - p)
    pmf = pow(1.0 - p, nd)
    cdf = pmf
    k = 0.0
    while u > cdf and k < nd:
        pmf = pmf * (((nd - k) / (k + 1.0)) * odds)
        k = k + 1.0
        cdf = cdf + pmf
    return <long>k


cdef double _positive_normal(double mean, double sd, _Cursor cur):
    cdef double u1, u2, r, amp
    while True:
        u1 = cur.next()
        u2 = cur.next()
        r = sqrt(-2.0 * log1p(-u1))
        amp = mean + sd * (r * cos(TWO_PI * u2))
        if amp > 0.0:
            return amp


def run_gates(long long n_gates, long divisor, double mu, double qe,
              double p_eta, double dark_prob, double trap_release,
              double trap_fill, double sigma_av, mean_table, double slope,
              long traps0, stream,
              out_n_incident=None, out_n_detected=None, out_n_dark=None,
              out_n_afterpulse=None, out_amplitude=None):
    """Simulate ``n_gates`` gates; see the pure-Python kernel for semantics."""
    cdef bint records = out_amplitude is not None
    cdef double[::1] table = mean_table
    cdef Py_ssize_t tlast = table.shape[0] - 1

    cdef int[::1] o_inc
    cdef int[::1] o_det
    cdef signed char[::1] o_dark
    cdef int[::1] o_ap
    cdef double[::1] o_amp
    if records:
        o_inc = out_n_incident
        o_det = out_n_detected
        o_dark = out_n_dark
        o_ap = out_n_afterpulse
        o_amp = out_amplitude

    cdef _Cursor cur = _Cursor(stream)

    cdef bint has_mu = mu > 0.0
    cdef long traps = traps0
    cdef long phase = 0
    cdef long long n_illum = 0, clicks_illum = 0, clicks_dark = 0
    cdef long long det_total = 0, dark_total = 0, ap_total = 0

    cdef long long i
    cdef long n_inc, n_det, n_dark, n_ap, k_car
    cdef bint illum
    cdef double mean, sd, amp

    for i in range(n_gates):
        illum = phase == 0 and has_mu
        phase += 1
        if phase == divisor:
            phase = 0

        # 1. incident photons
        n_inc = 0
        if illum:
            n_illum += 1
            n_inc = _poisson_inv(mu, cur)

        # 2. absorption thinning
        n_det = n_inc
        if n_det > 0 and qe < 1.0:
            if qe <= 0.0:
                n_det = 0
            else:
                n_det = _binom_inv(n_det, qe, cur)

        # 3. avalanche trigger thinning
        if n_det > 0 and p_eta < 1.0:
            if p_eta <= 0.0:
                n_det = 0
            else:
                n_det = _binom_inv(n_det, p_eta, cur)

        # 4. dark carrier
        n_dark = 0
        if dark_prob > 0.0:
            if cur.next() < dark_prob:
                n_dark = 1

        # 5. trap releases -> afterpulse carriers
        n_ap = 0
        if traps > 0 and trap_release > 0.0:
            if trap_release >= 1.0:
                n_ap = traps
            else:
                n_ap = _binom_inv(traps, trap_release, cur)
            traps -= n_ap

        # 6. avalanche amplitude and trap filling
        k_car = n_det + n_dark + n_ap
        amp = 0.0
        if k_car > 0:
            if k_car <= tlast:
                mean = table[k_car]
            else:
                mean = table[tlast] + (k_car - tlast) * slope
            sd = sigma_av * sqrt(<double>k_car)
            if sd > 0.0:
                amp = _positive_normal(mean, sd, cur)
            else:
                amp = mean
            if trap_fill > 0.0:
                traps += _poisson_inv(trap_fill, cur)
            if illum:
                clicks_illum += 1
            else:
                clicks_dark += 1

        det_total += n_det
        dark_total += n_dark
        ap_total += n_ap

        if records:
            o_inc[i] = n_inc
            o_det[i] = n_det
            o_dark[i] = <signed char>n_dark
            o_ap[i] = n_ap
            o_amp[i] = amp

    stream.sync_pos(cur.pos)
    return (int(n_illum), int(clicks_illum), int(clicks_dark),
            int(det_total), int(dark_total), int(ap_total), int(traps))
