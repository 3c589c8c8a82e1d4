"""Gaussian special functions and quadrature rules shared by the denoisers
and the replica solver.

Everything here is vectorised over numpy arrays.  Tail quantities are
evaluated through the scaled complementary error function so that ratios
such as ``(phi(a) - phi(b)) / (Phi(a) - Phi(b))`` stay finite far beyond the
point where ``Phi`` itself underflows.
"""
from functools import lru_cache

import numpy as np
from scipy import special

SQRT2 = np.sqrt(2.0)
SQRT2PI = np.sqrt(2.0 * np.pi)
GH_NODES = 61


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT2PI


def norm_cdf(x):
    return special.ndtr(x)


def q_function(x):
    """Gaussian tail probability Q(x) = 1 - Phi(x)."""
    return special.ndtr(-np.asarray(x, dtype=float))


def gaussian_tail(x):
    """Return ``(pdf, cdf, log_cdf)`` of the standard normal at ``x``.

    ``log_cdf`` stays accurate deep in the left tail (``log_ndtr`` switches to
    an asymptotic series there), e.g. ``x = -38`` gives roughly ``-726.0``.
    """
    x = np.asarray(x, dtype=float)
    return norm_pdf(x), special.ndtr(x), special.log_ndtr(x)


def truncated_normal_moments(lo, hi, variance=True):
    """Moments of a standard normal restricted to the interval ``(lo, hi]``.

    Parameters
    ----------
    lo, hi : array_like
        Interval bounds, ``lo < hi``; infinite bounds are allowed.
    variance : bool
        When False the variance is left in its closed form, which may lose
        digits in far tails; mass and mean are unaffected and cheaper.

    Returns
    -------
    log_mass : ndarray
        ``log(Phi(hi) - Phi(lo))``.
    mean : ndarray
        ``E[u]`` for the truncated variable, i.e. ``(phi(lo) - phi(hi)) / mass``.
    var : ndarray
        ``Var[u] = 1 + (lo*phi(lo) - hi*phi(hi)) / mass - mean**2``.
    degenerate : ndarray of bool
        True where the mass could not be resolved even in scaled form; the
        moments there are the point-mass limit at the bound closest to zero.
    """
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        return _truncated_moments(lo, hi, variance)


def _truncated_moments(lo, hi, variance=True):
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    # Reflect intervals lying in the right half-line so that c = lo <= 0 always.
    flip = lo > 0
    c = np.where(flip, -hi, lo)
    a = np.where(flip, -lo, hi)
    fin_a, fin_c = np.isfinite(a), np.isfinite(c)
    tail = a <= 0

    # Scaled tails: ga = Phi(-|a|) e^{a^2/2}, gc = Phi(c) e^{c^2/2}.
    ga = 0.5 * special.erfcx(np.abs(a) / SQRT2)
    gc = np.where(fin_c, 0.5 * special.erfcx(-c / SQRT2), 0.0)
    ea = np.where(fin_a, np.exp(-0.5 * a * a), 0.0)
    ec = np.where(fin_c, np.exp(-0.5 * c * c), 0.0)

    # Interval straddles zero: Phi(a) - Phi(c) = 1 - Q(a) - Phi(c), no cancellation.
    mass = 1.0 - ea * ga - ec * gc
    pa, pc = ea / SQRT2PI, ec / SQRT2PI
    apa = np.where(fin_a, a * pa, 0.0)
    cpc = np.where(fin_c, c * pc, 0.0)

    # Left tail (c < a <= 0): factor out exp(-a^2/2).
    expo = np.where(fin_c, -0.5 * (c - a) * (c + a), -np.inf)
    e = np.exp(expo)
    denom = (ga - gc) - gc * np.expm1(expo)
    ok = np.isfinite(denom) & (denom > 0)
    safe = np.where(ok, denom, 1.0)
    ce = np.where(fin_c, c * e, 0.0)

    log_mass = np.where(tail, np.where(ok, -0.5 * a * a + np.log(safe), -np.inf), np.log(mass))
    # Point-mass limit at the bound nearest zero (here ``a``) where unresolved.
    m1 = np.where(tail, np.where(ok, (e - 1.0) / SQRT2PI / safe, a), (pc - pa) / mass)
    t2 = np.where(tail, np.where(ok, (ce - a) / SQRT2PI / safe, a * a - 1.0), (cpc - apa) / mass)
    var = np.maximum(1.0 + t2 - m1 * m1, 0.0)
    degenerate = tail & ~ok

    # 1 + t2 - m1^2 loses about log10((1 + m1^2) / var)^2 digits (far tails,
    # narrow bins).  Past 1e3 redo those entries by quadrature about the edge.
    fix = (var * 1e3 < 1.0 + m1 * m1) & fin_a & (a > c)
    if variance and fix.any():
        lm_q, m_q, v_q = _edge_quadrature(a[fix], (a - c)[fix])
        log_mass, m1, var = (np.array(v, dtype=float, ndmin=1).reshape(a.shape)
                             for v in (log_mass, m1, var))
        log_mass[fix], m1[fix], var[fix] = lm_q, m_q, v_q
        degenerate = degenerate & ~fix
    return log_mass, np.where(flip, -m1, m1), var, degenerate


_EDGE_NODES = 32
_EDGE_DROP = 30.0  # integrate until the density falls by e^-30


def _edge_quadrature(a, width):
    """Moments of N(0,1) restricted to ``(a - width, a]`` via u = a - x.

    The density of u is proportional to exp(a u - u^2/2) on [0, width); it is
    smooth and, after cutting at a relative level e^-30, short enough for a
    single Gauss-Legendre panel.
    """
    u_star = np.clip(a, 0.0, width)
    g_star = a * u_star - 0.5 * u_star * u_star
    upper = np.minimum(width, a + np.sqrt((u_star - a) ** 2 + 2.0 * _EDGE_DROP))
    x, w = _legendre(_EDGE_NODES)
    half = 0.5 * upper[:, None]
    u = half * (x + 1.0)
    f = np.exp(a[:, None] * u - 0.5 * u * u - g_star[:, None]) * (half * w)
    m0 = f.sum(axis=1)
    eu = (f * u).sum(axis=1) / m0
    var = (f * (u - eu[:, None]) ** 2).sum(axis=1) / m0
    log_mass = np.log(m0) + g_star - 0.5 * a * a - np.log(SQRT2PI)
    return log_mass, a - eu, var


def log_interval_mass(lo, hi):
    """``log(Phi(hi) - Phi(lo))`` without underflow."""
    return truncated_normal_moments(lo, hi)[0]


@lru_cache(maxsize=None)
def _legendre(n):
    return np.polynomial.legendre.leggauss(n)


_REFINE = np.array([0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0])


def normal_rule(centers=(), width=1.0, order=12, span=10.0, coarse=0.5):
    """Nodes and weights for ``int Dz f(z)`` when ``f`` is smooth except
    within a few ``width`` of each point in ``centers``.

    Composite Gauss-Legendre on ``[-span, span]``: a uniform ``coarse`` grid
    of panels, refined geometrically around every centre that falls inside
    the span.  ``order`` is the number of nodes per panel.
    """
    edges = [np.arange(-span, span + coarse / 2, coarse)]
    centers = np.asarray(centers, dtype=float).ravel()
    centers = centers[np.abs(centers) < span + 32 * width]
    if centers.size and width < coarse:
        offs = width * np.concatenate((-_REFINE[:0:-1], _REFINE))
        offs = offs[np.abs(offs) < coarse]
        edges.append((centers[:, None] + offs[None, :]).ravel())
    e = np.unique(np.clip(np.concatenate(edges), -span, span))
    x, w = _legendre(order)
    a, b = e[:-1], e[1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :] * norm_pdf(nodes)
    return nodes.ravel(), weights.ravel()


@lru_cache(maxsize=None)
def gauss_hermite(n=GH_NODES):
    """Nodes and weights for ``int Dz f(z)`` with ``Dz`` the standard normal
    measure (probabilists' Hermite rule)."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / np.sqrt(2.0 * np.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w
