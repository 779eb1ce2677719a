"""Extended-precision reference values, independent of the package code.

Both oracles use only :mod:`decimal` and run at 60 significant digits.
"""
from decimal import Decimal, localcontext

DIGITS = 60
MIN_TERMS = 300


def kummer_decimal(c, d, x, digits=DIGITS, min_terms=MIN_TERMS):
    """M(c, d, x) by direct summation of the defining series.

    Inputs are taken as the exact binary values of the floats.  Summation
    continues for at least ``min_terms`` terms and until a term is below
    ``10**-digits`` of the running sum.
    """
    with localcontext() as ctx:
        ctx.prec = digits + 20
        c, d, x = Decimal(c), Decimal(d), Decimal(x)
        term = Decimal(1)
        total = Decimal(1)
        eps = Decimal(10) ** (-digits)
        j = 0
        while True:
            term = term * (c + j) / (d + j) * x / (j + 1)
            total += term
            j += 1
            if j >= min_terms and abs(term) <= eps * abs(total):
                break
            if j > 100000:
                raise RuntimeError("oracle series did not converge")
        return +total


def tise_power_series(K, y, parity, digits=DIGITS):
    """Solution of ``psi'' = (y^2 - K) psi`` from its Taylor series at 0.

    ``parity`` 0 gives psi(0) = 1, psi'(0) = 0; parity 1 gives psi(0) = 0,
    psi'(0) = 1.  The coefficients obey
    ``(n + 2)(n + 1) a[n+2] = a[n-2] - K a[n]``.  Returns ``(psi, psi')`` as
    Decimals.
    """
    with localcontext() as ctx:
        ctx.prec = digits + 40
        K, y = Decimal(K), Decimal(y)
        a = [Decimal(1), Decimal(0)] if parity == 0 else [Decimal(0), Decimal(1)]
        eps = Decimal(10) ** (-digits)
        value = a[0] + a[1] * y
        deriv = a[1]
        ypow = y  # y**(n+1) for the next derivative term
        n = 0
        quiet = 0
        while True:
            prev2 = a[n - 2] if n >= 2 else Decimal(0)
            nxt = (prev2 - K * a[n]) / ((n + 2) * (n + 1))
            a.append(nxt)
            m = n + 2
            tv = nxt * y ** m
            td = m * nxt * ypow
            value += tv
            deriv += td
            ypow *= y
            n += 1
            small = abs(tv) <= eps * abs(value) and abs(td) <= eps * (abs(deriv) + 1)
            quiet = quiet + 1 if small else 0
            if quiet >= 6 and n > 20:
                break
            if n > 20000:
                raise RuntimeError("power series did not converge")
        return +value, +deriv
