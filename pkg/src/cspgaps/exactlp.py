"""Exact rational LP feasibility by phase-I simplex with Bland's rule.

The only consumer is the t-wise uniform support decision, which needs a
feasibility verdict (and a vertex witness) for systems of the form
A x = b, x >= 0 with rational data.  Everything is dense tableau arithmetic
over exact rationals; Bland's anti-cycling rule makes the run deterministic
and finite.
"""

from __future__ import annotations

from .rational import Frac, ZERO


def solve_feasibility(rows, rhs, num_vars):
    """Decide feasibility of {x >= 0 : rows . x = rhs}.

    rows: list of coefficient lists (length num_vars, rationals)
    rhs: list of rationals

    Returns a list of Frac of length num_vars (a basic feasible solution,
    i.e. a vertex of the polytope) or None if infeasible.
    """
    m = len(rows)
    n = num_vars
    # Tableau columns: n original vars, m artificials, then the rhs.
    tab = []
    for i in range(m):
        row = [Frac(c) for c in rows[i]]
        b = Frac(rhs[i])
        if b < 0:
            row = [-c for c in row]
            b = -b
        row.extend(Frac(1) if j == i else ZERO for j in range(m))
        row.append(b)
        tab.append(row)
    basis = [n + i for i in range(m)]

    # Phase-I objective: minimize the sum of artificials.  Reduced-cost row
    # starts as -(sum of constraint rows) on the original columns.
    obj = [ZERO] * (n + m + 1)
    for i in range(m):
        for j in range(n):
            obj[j] -= tab[i][j]
        obj[n + m] -= tab[i][n + m]

    def pivot(r, c):
        piv = tab[r][c]
        tab[r] = [v / piv for v in tab[r]]
        for i in range(m):
            if i != r and tab[i][c] != 0:
                f = tab[i][c]
                tab[i] = [a - f * b for a, b in zip(tab[i], tab[r])]
        if obj[c] != 0:
            f = obj[c]
            for j in range(n + m + 1):
                obj[j] -= f * tab[r][j]
        basis[r] = c

    left_artificials = set()
    while True:
        # Bland: entering column = least index with negative reduced cost.
        # Artificial columns are barred from re-entering once they leave.
        enter = -1
        for j in range(n + m):
            if j >= n and j in left_artificials:
                continue
            if obj[j] < 0:
                enter = j
                break
        if enter < 0:
            break
        # Ratio test; ties broken by least basic-variable index (Bland).
        leave, best = -1, None
        for i in range(m):
            if tab[i][enter] > 0:
                ratio = tab[i][n + m] / tab[i][enter]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    leave, best = i, ratio
        if leave < 0:
            # Phase-I objective is bounded below by 0, so this cannot happen.
            raise ArithmeticError("phase-I simplex claims unboundedness")
        if basis[leave] >= n:
            left_artificials.add(basis[leave])
        pivot(leave, enter)

    if -obj[n + m] > 0:  # optimum of the artificial sum
        return None

    # Drive remaining (zero-valued) artificials out of the basis when possible.
    for i in range(m):
        if basis[i] >= n:
            col = next((j for j in range(n) if tab[i][j] != 0), None)
            if col is not None:
                pivot(i, col)

    x = [ZERO] * n
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = tab[i][n + m]
    return x
