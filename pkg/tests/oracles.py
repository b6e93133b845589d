"""Independent numerical oracles used to derive and freeze expected values.

Everything here is deliberately self-contained (plain Python, no imports
from the package under test) so golden numbers are cross-checked by a
second, unrelated computation path.
"""

from itertools import combinations


def bisect_root(f, lo, hi, tol=1e-12, iters=200):
    """Plain interval halving; f(lo) and f(hi) must straddle zero."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    assert f_lo * f_hi < 0.0, "root not bracketed"
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) * f_lo > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def foc_level(phi_prime, weight, hi=None, tol=1e-12):
    """Solve weight * phi'(g) = 1 for g >= 0 by bracketed bisection."""
    if weight <= 0.0:
        return 0.0
    try:
        if weight * phi_prime(0.0) <= 1.0:
            return 0.0
    except (ZeroDivisionError, OverflowError, ValueError):
        pass  # infinite marginal benefit at zero: interior optimum
    if hi is None:
        hi = 1.0
        while weight * phi_prime(hi) > 1.0:
            hi *= 2.0
            assert hi < 1e12, "no interior optimum"
    return bisect_root(lambda g: weight * phi_prime(g) - 1.0, 1e-300, hi, tol)


def simpson(f, a, b, panels=2000):
    """Composite Simpson quadrature, scalar integrand."""
    if b <= a:
        return 0.0
    h = (b - a) / (2 * panels)
    total = f(a) + f(b)
    for k in range(1, 2 * panels):
        total += (4.0 if k % 2 else 2.0) * f(a + k * h)
    return total * h / 3.0


def cumulative_trapezoid(values, grid):
    """Running trapezoid sums matching the transfer-module convention."""
    out = [0.0]
    for k in range(1, len(grid)):
        out.append(out[-1] + 0.5 * (values[k] + values[k - 1]) * (grid[k] - grid[k - 1]))
    return out


def all_coalitions(members, quota, agenda=0):
    """Every quota-sized coalition containing the agenda setter."""
    others = [m for m in members if m != agenda]
    return [frozenset({agenda, *c}) for c in combinations(others, quota - 1)]


def second_difference(f, x, h):
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / h**2
