"""Arithmetic on the index set Z0 = Z \\ {0}.

Spectral quantities are indexed by nonzero integers; a multiplicity group
occupies *consecutive* members of Z0, so a group of size two may span the
gap between -1 and 1.  All offset arithmetic below skips zero.
"""

from __future__ import annotations


def shift(n: int, k: int) -> int:
    """k-th successor (k >= 0) or predecessor (k < 0) of n in Z0."""
    if n == 0:
        raise ValueError("index 0 is not in Z0")
    m = n + k
    if k >= 0 and n < 0 <= m:
        m += 1
    elif k < 0 and n > 0 >= m:
        m -= 1
    return m


def offset(start: int, n: int) -> int:
    """Number of Z0 steps from ``start`` up to ``n`` (both in Z0, start <= n)."""
    if start == 0 or n == 0:
        raise ValueError("index 0 is not in Z0")
    d = n - start
    if start < 0 < n:
        d -= 1
    return d


def window(n_max: int) -> list[int]:
    """All indices n with 1 <= |n| <= n_max, in increasing order."""
    return [n for n in range(-n_max, n_max + 1) if n != 0]
