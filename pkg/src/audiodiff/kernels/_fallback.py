"""Pure-numpy twins of the compiled kernels in _core.pyx.

Each function matches the compiled signature and, element for element, the
same sequence of IEEE-754 roundings, so the two backends are bit-identical
(the extension is compiled with -ffp-contract=off for exactly this reason).
"""

import numpy as np


def _check_len(n, *arrays):
    for arr in arrays:
        if arr.shape[0] != n:
            raise ValueError("length mismatch")


def axpby(a, x, b, y, out):
    """out[i] = a*x[i] + b*y[i]"""
    _check_len(x.shape[0], y, out)
    np.multiply(x, a, out=out)
    out += y * b


def guided_combine(w, cond, uncond, out):
    """out[i] = w*cond[i] + (1-w)*uncond[i]"""
    _check_len(cond.shape[0], uncond, out)
    np.multiply(cond, w, out=out)
    out += uncond * (1.0 - w)


def ancestral_update(z, eps_hat, inv_sqrt_alpha, eps_coef, sigma, noise, out):
    """out[i] = inv_sqrt_alpha*(z[i] - eps_coef*eps_hat[i]) + sigma*noise[i]"""
    _check_len(z.shape[0], eps_hat, noise, out)
    np.multiply(eps_hat, eps_coef, out=out)
    np.subtract(z, out, out=out)
    out *= inv_sqrt_alpha
    out += noise * sigma


def gaussian_eps(z, mu, c_scale, c_mu, out):
    """out[i, j] = c_scale*(z[i, j] - c_mu*mu[j])"""
    if mu.shape[0] != z.shape[1] or out.shape != z.shape:
        raise ValueError("shape mismatch")
    np.subtract(z, mu * c_mu, out=out)
    out *= c_scale
