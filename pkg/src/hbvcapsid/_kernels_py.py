"""Pure-Python RK4 loop, used when the compiled extension is unavailable.

Mirrors ``_kernels.pyx`` statement by statement so both backends produce
bitwise-identical trajectories.
"""

import math

STATUS_OK = 0
STATUS_NEGATIVE = 1
STATUS_OVERFLOW = 2


def integrate(p, y0, h, nsteps, output_every, clamp, neg_tol, out):
    lam, mu, k, a, beta, delta, c, alpha, gamma = (float(v) for v in p)
    # lam - mu X written as mu (x0 - X) so it vanishes exactly at X = x0
    x0 = lam / mu if mu > 0.0 else 0.0
    lam_rem = 0.0 if mu > 0.0 else lam
    g1 = gamma * (1 - alpha)
    ab = alpha * beta
    hh = 0.5 * h
    h6 = h / 6.0
    isfinite = math.isfinite

    x, y, d, v = (float(v) for v in y0)
    scale = [abs(q) if abs(q) > 1.0 else 1.0 for q in (x, y, d, v)]
    out[0] = (x, y, d, v)
    nrec = 1
    status = STATUS_OK
    fail_step = nsteps

    for n in range(nsteps):
        k1x = mu * (x0 - x) + lam_rem - k * v * x
        k1y = k * v * x - delta * y
        k1d = a * y + g1 * d - ab * d - delta * d
        k1v = ab * d - c * v

        sx = x + hh * k1x
        sy = y + hh * k1y
        sd = d + hh * k1d
        sv = v + hh * k1v
        k2x = mu * (x0 - sx) + lam_rem - k * sv * sx
        k2y = k * sv * sx - delta * sy
        k2d = a * sy + g1 * sd - ab * sd - delta * sd
        k2v = ab * sd - c * sv

        sx = x + hh * k2x
        sy = y + hh * k2y
        sd = d + hh * k2d
        sv = v + hh * k2v
        k3x = mu * (x0 - sx) + lam_rem - k * sv * sx
        k3y = k * sv * sx - delta * sy
        k3d = a * sy + g1 * sd - ab * sd - delta * sd
        k3v = ab * sd - c * sv

        sx = x + h * k3x
        sy = y + h * k3y
        sd = d + h * k3d
        sv = v + h * k3v
        k4x = mu * (x0 - sx) + lam_rem - k * sv * sx
        k4y = k * sv * sx - delta * sy
        k4d = a * sy + g1 * sd - ab * sd - delta * sd
        k4v = ab * sd - c * sv

        x = x + h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + h6 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        d = d + h6 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        v = v + h6 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)

        comps = [x, y, d, v]
        for j in range(4):
            q = comps[j]
            if not isfinite(q):
                status = STATUS_OVERFLOW
            if q < 0.0:
                if clamp:
                    comps[j] = q = 0.0
                elif q < -neg_tol * scale[j]:
                    status = STATUS_NEGATIVE
            if abs(q) > scale[j]:
                scale[j] = abs(q)
        x, y, d, v = comps
        if status != STATUS_OK:
            fail_step = n + 1
            break
        if (n + 1) % output_every == 0 or n + 1 == nsteps:
            out[nrec] = comps
            nrec += 1

    return status, fail_step, nrec
