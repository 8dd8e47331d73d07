"""Small dense matrices over Z_n.

Matrices are tuples of row tuples of Python ints. The dimensions used by the
scheme are tiny (d = 4 by default), so plain Python big-int arithmetic beats
numpy object arrays here.
"""
from __future__ import annotations

import random
from operator import mul
from typing import Sequence

Matrix = tuple[tuple[int, ...], ...]


def identity(d: int) -> Matrix:
    return tuple(tuple(1 if i == j else 0 for j in range(d)) for i in range(d))


def as_matrix(rows: Sequence[Sequence[int]], n: int) -> Matrix:
    return tuple(tuple(int(x) % n for x in row) for row in rows)


def matmul(a: Matrix, b: Matrix, n: int) -> Matrix:
    cols = tuple(zip(*b))
    return tuple(tuple(sum(map(mul, row, col)) % n for col in cols) for row in a)


def matmul3(a: Matrix, b: Matrix, c: Matrix, n: int) -> Matrix:
    return matmul(matmul(a, b, n), c, n)


def matadd(a: Matrix, b: Matrix, n: int) -> Matrix:
    return tuple(tuple((x + y) % n for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def matsub(a: Matrix, b: Matrix, n: int) -> Matrix:
    return tuple(tuple((x - y) % n for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def random_matrix(d: int, n: int, rng: random.Random) -> Matrix:
    return tuple(tuple(rng.randrange(n) for _ in range(d)) for _ in range(d))


def inverse(a: Matrix, n: int) -> Matrix | None:
    """Gauss-Jordan inverse mod n, or None when no unit pivot can be found.

    Over a composite modulus a pivot must be a unit; if a column has no unit
    entry the matrix is treated as singular. For n = p*q with large primes a
    non-unit entry means the factorization leaked, which random sampling
    essentially never hits.
    """
    d = len(a)
    aug = [list(row) + [1 if i == j else 0 for j in range(d)] for i, row in enumerate(a)]
    for col in range(d):
        pivot_row = None
        for r in range(col, d):
            x = aug[r][col] % n
            if x and _is_unit(x, n):
                pivot_row = r
                break
        if pivot_row is None:
            return None
        aug[col], aug[pivot_row] = aug[pivot_row], aug[col]
        inv_p = pow(aug[col][col], -1, n)
        aug[col] = [(x * inv_p) % n for x in aug[col]]
        for r in range(d):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [(x - f * y) % n for x, y in zip(aug[r], aug[col])]
    return tuple(tuple(row[d:]) for row in aug)


def det(a: Matrix, n: int) -> int:
    """Determinant mod n by Laplace expansion (only used for d <= 6)."""
    d = len(a)
    if d == 1:
        return a[0][0] % n
    if d == 2:
        return (a[0][0] * a[1][1] - a[0][1] * a[1][0]) % n
    total = 0
    for j in range(d):
        minor = tuple(row[:j] + row[j + 1:] for row in a[1:])
        sign = -1 if j % 2 else 1
        total += sign * a[0][j] * det(minor, n)
    return total % n


def _is_unit(x: int, n: int) -> bool:
    try:
        pow(x, -1, n)
    except ValueError:
        return False
    return True
