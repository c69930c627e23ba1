"""Reference optima for the small SDP instances used by the solver checks.

The instances are generated from closed-form entries so that the C++ side can
rebuild them exactly (see herm() in src/verify.cpp). Run with cvxpy installed;
the printed values are frozen in the C++ checks.
"""
import math

import cvxpy as cp
import numpy as np


def herm(n, s):
    H = np.zeros((n, n), dtype=complex)
    for i in range(n):
        H[i, i] = math.cos(1.7 * i + 0.3 * s)
        for j in range(i + 1, n):
            v = complex(math.cos(1.1 * i + 0.7 * j + 0.3 * s), math.sin(0.5 * i - 0.9 * j + 0.2 * s))
            H[i, j] = v
            H[j, i] = v.conjugate()
    return H


def solve(n, costs, links, c_beta, ineqs):
    M = n - 1
    beta = cp.Variable(M)
    Qs = [cp.Variable((n, n), hermitian=True) for _ in costs]
    cons = [beta >= 0, beta <= 1]
    for Q, link in zip(Qs, links):
        cons.append(Q >> 0)
        cons.append(cp.real(Q[M, M]) == 1)
        for m in range(M):
            cons.append(cp.real(Q[m, m]) == (beta[m] if link == "beta" else 1 - beta[m]))
    for A, rhs in ineqs:
        cons.append(sum(cp.real(cp.trace(a @ Q)) for a, Q in zip(A, Qs)) <= rhs)
    obj = sum(cp.real(cp.trace(C @ Q)) for C, Q in zip(costs, Qs)) + np.asarray(c_beta) @ beta
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value, beta.value


cases = {
    "single_block": (3, [herm(3, 1)], ["beta"], [0.2, -0.3], [([herm(3, 5)], 0.5)]),
    "two_blocks": (3, [herm(3, 2), herm(3, 3)], ["beta", "one_minus_beta"], [0.1, 0.4],
                   [([herm(3, 4), herm(3, 6)], 1.0)]),
    "four_by_four": (4, [herm(4, 7)], ["beta"], [0.0, 0.0, 0.0], []),
}
for name, args in cases.items():
    val, beta = solve(*args)
    print(f"{name}: objective {val:.12f} beta {np.round(beta, 9)}")
