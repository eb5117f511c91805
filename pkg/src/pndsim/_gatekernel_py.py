"""Pure-Python gate kernel.

Reference implementation of the gate-by-gate avalanche Monte Carlo.  The
compiled kernel (``_gatekernel.pyx``) mirrors this algorithm statement for
statement; both consume the stream's uniforms in the same order and are
bit-identical (asserted by tests).  Keep any change here in lockstep with the
.pyx file.

Per-gate draw order, with ``T`` the trap occupancy entering the gate:

1. illuminated gate and ``mu > 0``: one uniform -> Poisson(mu) incident count;
2. incident > 0 and 0 < qe < 1: one uniform -> Binomial absorption thinning;
3. absorbed > 0 and 0 < p_eta < 1: one uniform -> Binomial trigger thinning;
4. ``dark_prob > 0``: one uniform -> Bernoulli dark carrier;
5. ``T > 0`` and 0 < release < 1: one uniform -> Binomial(T, release) trap
   releases; every released carrier fires an afterpulse avalanche;
6. ``k = detected + dark + afterpulses``; if ``k > 0``: Box-Muller pairs of
   uniforms until the Normal(mean_k, sigma_av * sqrt(k)) draw is positive,
   then (if ``trap_fill > 0``) one uniform -> Poisson(trap_fill) new traps.

Binomial/Poisson variates use CDF inversion by sequential search (exact for
the small counts involved); see :mod:`pndsim.samplers` for the scalar
reference of the same recurrences.
"""

from __future__ import annotations

from math import cos, exp, log1p, pi, pow, sqrt

_TWO_PI = 2.0 * pi
_WALK_CAP = 4096


def run_gates(n_gates, divisor, mu, qe, p_eta, dark_prob, trap_release,
              trap_fill, sigma_av, mean_table, slope, traps0, stream,
              out_n_incident=None, out_n_detected=None, out_n_dark=None,
              out_n_afterpulse=None, out_amplitude=None):
    """Simulate ``n_gates`` gates; return the counting summary tuple.

    When the ``out_*`` arrays are supplied they receive the per-gate record
    columns.  Returns ``(n_illuminated, clicks_illuminated,
    clicks_unilluminated, detected_total, dark_total, afterpulse_total,
    final_traps)``.
    """
    records = out_amplitude is not None

    buf = stream.buffer().tolist()
    pos = stream.pos
    nbuf = len(buf)
    refill = stream.refill

    table = list(mean_table)
    tlast = len(table) - 1

    traps = traps0
    has_mu = mu > 0.0
    phase = 0

    n_illum = 0
    clicks_illum = 0
    clicks_dark = 0
    det_total = 0
    dark_total = 0
    ap_total = 0

    for i in range(n_gates):
        illum = phase == 0 and has_mu
        phase += 1
        if phase == divisor:
            phase = 0

        # 1. incident photons
        n_inc = 0
        if illum:
            n_illum += 1
            if pos >= nbuf:
                buf = refill().tolist()
                nbuf = len(buf)
                pos = 0
            u = buf[pos]
            pos += 1
            pmf = exp(-mu)
            cdf = pmf
            while u > cdf and n_inc < _WALK_CAP:
                n_inc += 1
                pmf = pmf * (mu / n_inc)
                cdf = cdf + pmf

        # 2. absorption thinning
        n_det = n_inc
        if n_det > 0 and qe < 1.0:
            if qe <= 0.0:
                n_det = 0
            else:
                if pos >= nbuf:
                    buf = refill().tolist()
                    nbuf = len(buf)
                    pos = 0
                u = buf[pos]
                pos += 1
                nd = float(n_det)
                odds = qe / (1.0 - qe)
                pmf = pow(1.0 - qe, nd)
                cdf = pmf
                k = 0.0
                while u > cdf and k < nd:
                    pmf = pmf * (((nd - k) / (k + 1.0)) * odds)
                    k = k + 1.0
                    cdf = cdf + pmf
                n_det = int(k)

        # 3. avalanche trigger thinning
        if n_det > 0 and p_eta < 1.0:
            if p_eta <= 0.0:
                n_det = 0
            else:
                if pos >= nbuf:
                    buf = refill().tolist()
                    nbuf = len(buf)
                    pos = 0
                u = buf[pos]
                pos += 1
                nd = float(n_det)
                odds = p_eta / (1.0 - p_eta)
                pmf = pow(1.0 - p_eta, nd)
                cdf = pmf
                k = 0.0
                while u > cdf and k < nd:
                    pmf = pmf * (((nd - k) / (k + 1.0)) * odds)
                    k = k + 1.0
                    cdf = cdf + pmf
                n_det = int(k)

        # 4. dark carrier
        n_dark = 0
        if dark_prob > 0.0:
            if pos >= nbuf:
                buf = refill().tolist()
                nbuf = len(buf)
                pos = 0
            u = buf[pos]
            pos += 1
            if u < dark_prob:
                n_dark = 1

        # 5. trap releases -> afterpulse carriers
        n_ap = 0
        if traps > 0 and trap_release > 0.0:
            if trap_release >= 1.0:
                n_ap = traps
            else:
                if pos >= nbuf:
                    buf = refill().tolist()
                    nbuf = len(buf)
                    pos = 0
                u = buf[pos]
                pos += 1
                nd = float(traps)
                odds = trap_release / (1.0 - trap_release)
                pmf = pow(1.0 - trap_release, nd)
                cdf = pmf
                k = 0.0
                while u > cdf and k < nd:
                    pmf = pmf * (((nd - k) / (k + 1.0)) * odds)
                    k = k + 1.0
                    cdf = cdf + pmf
                n_ap = int(k)
            traps -= n_ap

        # 6. avalanche amplitude and trap filling
        k_car = n_det + n_dark + n_ap
        amp = 0.0
        if k_car > 0:
            if k_car <= tlast:
                mean = table[k_car]
            else:
                mean = table[tlast] + (k_car - tlast) * slope
            sd = sigma_av * sqrt(k_car)
            if sd > 0.0:
                while True:
                    if pos >= nbuf:
                        buf = refill().tolist()
                        nbuf = len(buf)
                        pos = 0
                    u1 = buf[pos]
                    pos += 1
                    if pos >= nbuf:
                        buf = refill().tolist()
                        nbuf = len(buf)
                        pos = 0
                    u2 = buf[pos]
                    pos += 1
                    r = sqrt(-2.0 * log1p(-u1))
                    amp = mean + sd * (r * cos(_TWO_PI * u2))
                    if amp > 0.0:
                        break
            else:
                amp = mean
            if trap_fill > 0.0:
                if pos >= nbuf:
                    buf = refill().tolist()
                    nbuf = len(buf)
                    pos = 0
                u = buf[pos]
                pos += 1
                pmf = exp(-trap_fill)
                cdf = pmf
                kf = 0
                while u > cdf and kf < _WALK_CAP:
                    kf += 1
                    pmf = pmf * (trap_fill / kf)
                    cdf = cdf + pmf
                traps += kf
            if illum:
                clicks_illum += 1
            else:
                clicks_dark += 1

        det_total += n_det
        dark_total += n_dark
        ap_total += n_ap

        if records:
            out_n_incident[i] = n_inc
            out_n_detected[i] = n_det
            out_n_dark[i] = n_dark
            out_n_afterpulse[i] = n_ap
            out_amplitude[i] = amp

    stream.sync_pos(pos)
    return (n_illum, clicks_illum, clicks_dark, det_total, dark_total,
            ap_total, traps)
