"""Straight-line reference implementations used as test oracles.

Everything here is written with plain Python loops over lists and the
``math`` module so that it shares no code path with the vectorized package.
Inputs may be numpy arrays; they are converted to nested lists first.
"""
import math


def _rows(a):
    return [[float(v) for v in row] for row in a]


def dist(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def sqdist(a, b):
    return sum((x - y) ** 2 for x, y in zip(a, b))


def memberships(X, V, m):
    X, V = _rows(X), _rows(V)
    c, n = len(V), len(X)
    U = [[0.0] * n for _ in range(c)]
    for j in range(n):
        for i in range(c):
            s = 0.0
            for k in range(c):
                s += (dist(X[j], V[i]) / dist(X[j], V[k])) ** (2.0 / (m - 1.0))
            U[i][j] = 1.0 / s
    return U


def typicalities(X, V, eta):
    X, V = _rows(X), _rows(V)
    c, n = len(V), len(X)
    T = [[0.0] * n for _ in range(c)]
    for i in range(c):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += (dist(X[j], V[i]) / dist(X[k], V[i])) ** (2.0 / (eta - 1.0))
            T[i][j] = 1.0 / s
    return T


def centers(X, U, T, m, eta):
    X = _rows(X)
    c, n, d = len(U), len(X), len(X[0])
    V = []
    for i in range(c):
        num = [0.0] * d
        den = 0.0
        for j in range(n):
            w = U[i][j] ** m + (T[i][j] ** eta if T is not None else 0.0)
            den += w
            for a in range(d):
                num[a] += w * X[j][a]
        V.append([num[a] / den for a in range(d)])
    return V


def objective(X, U, T, V, m, eta):
    X, V = _rows(X), _rows(V)
    total = 0.0
    for i in range(len(V)):
        for j in range(len(X)):
            w = U[i][j] ** m + (T[i][j] ** eta if T is not None else 0.0)
            total += w * sqdist(X[j], V[i])
    return total


def weight(U, T, i, j, m, eta):
    return U[i][j] ** m + (T[i][j] ** eta if T is not None else 0.0)


def covariance(X, U, T, V, i, m, eta):
    X, V = _rows(X), _rows(V)
    d = len(X[0])
    F = [[0.0] * d for _ in range(d)]
    den = 0.0
    for j in range(len(X)):
        w = weight(U, T, i, j, m, eta)
        den += w
        for a in range(d):
            for b in range(d):
                F[a][b] += w * (X[j][a] - V[i][a]) * (X[j][b] - V[i][b])
    return [[F[a][b] / den for b in range(d)] for a in range(d)]


def compactness(X, U, T, V, m, eta):
    Xl, Vl = _rows(X), _rows(V)
    total = 0.0
    for i in range(len(Vl)):
        F = covariance(X, U, T, V, i, m, eta)
        tr = sum(F[a][a] for a in range(len(F)))
        s = 0.0
        for j in range(len(Xl)):
            s += weight(U, T, i, j, m, eta) * sqdist(Xl[j], Vl[i])
        total += s / tr
    return total


def separation(U, T, V, m, eta):
    V = _rows(V)
    c, d = len(V), len(V[0])
    vbar = [sum(V[i][a] for i in range(c)) / c for a in range(d)]
    total = 0.0
    for i in range(c):
        ratio = min(dist(V[i], V[k]) / dist(V[i], vbar) for k in range(c) if k != i)
        W_i = sum(weight(U, T, i, j, m, eta) for j in range(len(U[0])))
        total += W_i * math.exp(-(ratio ** m))
    return total


def reconstruct(V, M):
    """x_hat_j = sum_i M[i][j] * v_i."""
    V = _rows(V)
    c, n, d = len(M), len(M[0]), len(V[0])
    return [[sum(M[i][j] * V[i][a] for i in range(c)) for a in range(d)] for j in range(n)]


def normalize_columns(T):
    c, n = len(T), len(T[0])
    out = [[0.0] * n for _ in range(c)]
    for j in range(n):
        s = sum(T[i][j] for i in range(c))
        for i in range(c):
            out[i][j] = T[i][j] / s
    return out


def rmse(X, X_hat):
    X, X_hat = _rows(X), _rows(X_hat)
    s = 0.0
    for j in range(len(X)):
        for a in range(len(X[0])):
            s += (X[j][a] - X_hat[j][a]) ** 2
    return math.sqrt(s / len(X))


# -- comparators -------------------------------------------------------------

def pc(U):
    n = len(U[0])
    return sum(U[i][j] ** 2 for i in range(len(U)) for j in range(n)) / n


def pe(U):
    n = len(U[0])
    s = 0.0
    for row in U:
        for u in row:
            s += u * math.log(max(u, 1e-15))
    return -s / n


def _mean(rows):
    d = len(rows[0])
    return [sum(r[a] for r in rows) / len(rows) for a in range(d)]


def _min_pair_sq(V):
    return min(sqdist(V[i], V[k]) for i in range(len(V)) for k in range(len(V)) if i != k)


def fs(X, U, V, m):
    X, V = _rows(X), _rows(V)
    vbar = _mean(V)
    s = 0.0
    for i in range(len(V)):
        for j in range(len(X)):
            s += U[i][j] ** m * (sqdist(X[j], V[i]) - sqdist(V[i], vbar))
    return s


def xb(X, U, V, m):
    X, V = _rows(X), _rows(V)
    num = sum(U[i][j] ** m * sqdist(X[j], V[i]) for i in range(len(V)) for j in range(len(X)))
    return num / (len(X) * _min_pair_sq(V))


def kwon(X, U, V):
    X, V = _rows(X), _rows(V)
    xbar = _mean(X)
    num = sum(U[i][j] ** 2 * sqdist(X[j], V[i]) for i in range(len(V)) for j in range(len(X)))
    num += sum(sqdist(v, xbar) for v in V) / len(V)
    return num / _min_pair_sq(V)


def _det(M):
    n = len(M)
    if n == 1:
        return M[0][0]
    total = 0.0
    for col in range(n):
        minor = [row[:col] + row[col + 1:] for row in M[1:]]
        total += (-1) ** col * M[0][col] * _det(minor)
    return total


def fhv(X, U, V, m):
    total = 0.0
    for i in range(len(V)):
        F = covariance(X, U, None, V, i, m, 1.0)
        total += math.sqrt(max(_det(F), 0.0))
    return total


def pcaes(X, U, V):
    X, V = _rows(X), _rows(V)
    c, n = len(V), len(X)
    u_m = min(sum(U[i][j] ** 2 for j in range(n)) for i in range(c))
    xbar = _mean(X)
    b_t = sum(sqdist(v, xbar) for v in V) / c
    s = 0.0
    for i in range(c):
        s += sum(U[i][j] ** 2 for j in range(n)) / u_m
        s -= math.exp(-min(sqdist(V[i], V[k]) for k in range(c) if k != i) / b_t)
    return s


def _hard_counts(U):
    c, n = len(U), len(U[0])
    counts = [0] * c
    for j in range(n):
        best = 0
        for i in range(1, c):
            if U[i][j] > U[best][j]:
                best = i
        counts[best] += 1
    return counts


def zhang_parts(X, U, V):
    X, V = _rows(X), _rows(V)
    c = len(V)
    counts = _hard_counts(U)
    var = 0.0
    for i in range(c):
        var += sum(U[i][j] * sqdist(X[j], V[i]) for j in range(len(X))) / counts[i]
    var *= math.sqrt((c + 1) / (c - 1))
    worst = 0.0
    for i in range(c):
        for k in range(c):
            if i != k:
                for j in range(len(X)):
                    worst = max(worst, min(U[i][j], U[k][j]))
    return var, 1.0 - worst


def rezaee_parts(X, U, V):
    X, V = _rows(X), _rows(V)
    c, n = len(V), len(X)
    comp = sum(U[i][j] ** 2 * sqdist(X[j], V[i]) for i in range(c) for j in range(n))
    h = [-sum(U[i][j] * math.log(max(U[i][j], 1e-15)) for i in range(c)) for j in range(n)]
    sep = 0.0
    for p in range(c):
        for q in range(p + 1, c):
            sep += sum(min(U[p][j], U[q][j]) * h[j] for j in range(n))
    return 2.0 * sep / (c * (c - 1)), comp


def ecas_parts(X, U, V, m):
    X, V = _rows(X), _rows(V)
    c, n = len(V), len(X)
    counts = _hard_counts(U)
    xbar = _mean(X)
    total_scatter = sum(sqdist(x, xbar) for x in X)
    ec = 0.0
    for i in range(c):
        beta = total_scatter / counts[i]
        for j in range(n):
            ec += U[i][j] ** m * math.exp(-(sqdist(X[j], V[i]) / beta + 1.0 / (c + 1)))
    vbar = _mean(V)
    beta_sep = sum(sqdist(v, vbar) for v in V) / c
    es = 0.0
    for i in range(c):
        es += math.exp(-min((c - 1) * sqdist(V[i], V[k]) / beta_sep for k in range(c) if k != i))
    return ec, es


def tiny_instance(rng, n_max=6, c_max=3, d_max=3):
    """Random tiny problem with points and centers in general position."""
    import numpy as np

    n = int(rng.integers(3, n_max + 1))
    c = int(rng.integers(2, min(c_max, n) + 1))
    d = int(rng.integers(1, d_max + 1))
    X = rng.normal(size=(n, d)) * 2.0
    V = rng.normal(size=(c, d)) * 2.0
    m = float(rng.uniform(1.2, 5.0))
    eta = float(rng.uniform(1.2, 5.0))
    return X, V, m, eta
