"""Hot selection kernels: masked top-k with deterministic tie-breaking.

Selection orders candidates by (score descending, tie_rank ascending).
``tie_rank`` is a precomputed permutation (rank of each row under the
lexicographic id sort), so the ordering is total and every code path must
agree exactly, element for element.

The numba JIT path is used when numba imports cleanly and the
RANKLOOP_NO_NUMBA environment variable is unset/empty/"0"; otherwise the
pure-numpy fallback runs. Both implementations are exact equivalents --
tests assert bitwise-identical output -- so the flag only trades speed.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("RANKLOOP_NO_NUMBA", "")
_want_numba = _flag in ("", "0")

HAS_NUMBA = False
if _want_numba:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        HAS_NUMBA = False

USING_NUMBA = HAS_NUMBA


def _topk_numpy(
    scores: np.ndarray, excluded: np.ndarray, tie_rank: np.ndarray, k: int
) -> np.ndarray:
    """Full-sort reference: eligible rows ordered by (-score, tie_rank)."""

    if k <= 0:
        return np.empty(0, dtype=np.int64)
    eligible = np.flatnonzero(~excluded)
    if eligible.size == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((tie_rank[eligible], -scores[eligible].astype(np.float64)))
    return eligible[order[: min(k, eligible.size)]].astype(np.int64)


def _topk_scan(
    scores: np.ndarray, excluded: np.ndarray, tie_rank: np.ndarray, k: int
) -> np.ndarray:
    # Bounded min-heap over (score, tie_rank); the root is the worst kept
    # candidate. Heap order: a sits below b when a has lower score, or equal
    # score and larger tie_rank.
    n = scores.shape[0]
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    cap = k
    hs = np.empty(cap, dtype=np.float64)
    hr = np.empty(cap, dtype=np.int64)
    hi = np.empty(cap, dtype=np.int64)
    size = 0
    for i in range(n):
        if excluded[i]:
            continue
        s = np.float64(scores[i])
        r = tie_rank[i]
        if size < cap:
            j = size
            hs[j] = s
            hr[j] = r
            hi[j] = i
            size += 1
            while j > 0:
                p = (j - 1) // 2
                if hs[j] < hs[p] or (hs[j] == hs[p] and hr[j] > hr[p]):
                    hs[j], hs[p] = hs[p], hs[j]
                    hr[j], hr[p] = hr[p], hr[j]
                    hi[j], hi[p] = hi[p], hi[j]
                    j = p
                else:
                    break
        elif s > hs[0] or (s == hs[0] and r < hr[0]):
            hs[0] = s
            hr[0] = r
            hi[0] = i
            j = 0
            while True:
                left = 2 * j + 1
                right = left + 1
                worst = j
                if left < size and (
                    hs[left] < hs[worst] or (hs[left] == hs[worst] and hr[left] > hr[worst])
                ):
                    worst = left
                if right < size and (
                    hs[right] < hs[worst] or (hs[right] == hs[worst] and hr[right] > hr[worst])
                ):
                    worst = right
                if worst == j:
                    break
                hs[j], hs[worst] = hs[worst], hs[j]
                hr[j], hr[worst] = hr[worst], hr[j]
                hi[j], hi[worst] = hi[worst], hi[j]
                j = worst
    # Pop worst-first into the tail of the output.
    out = np.empty(size, dtype=np.int64)
    m = size
    while m > 0:
        out[m - 1] = hi[0]
        m -= 1
        hs[0] = hs[m]
        hr[0] = hr[m]
        hi[0] = hi[m]
        j = 0
        while True:
            left = 2 * j + 1
            right = left + 1
            worst = j
            if left < m and (
                hs[left] < hs[worst] or (hs[left] == hs[worst] and hr[left] > hr[worst])
            ):
                worst = left
            if right < m and (
                hs[right] < hs[worst] or (hs[right] == hs[worst] and hr[right] > hr[worst])
            ):
                worst = right
            if worst == j:
                break
            hs[j], hs[worst] = hs[worst], hs[j]
            hr[j], hr[worst] = hr[worst], hr[j]
            hi[j], hi[worst] = hi[worst], hi[j]
            j = worst
    return out


if USING_NUMBA:
    _topk_scan_jit = njit(cache=True, nogil=True)(_topk_scan)

    def topk_select(scores, excluded, tie_rank, k):
        return _topk_scan_jit(
            np.ascontiguousarray(scores),
            np.ascontiguousarray(excluded),
            np.ascontiguousarray(tie_rank),
            k,
        )

else:

    def topk_select(scores, excluded, tie_rank, k):
        return _topk_numpy(scores, excluded, tie_rank, k)


topk_select.__doc__ = """Indices of the k best eligible rows, best first.

Ordering is (score desc, tie_rank asc); excluded rows never appear. Fewer
than k eligible rows yield a short result, zero eligible rows an empty one.
"""


def topk_select_chunked(
    scores: np.ndarray,
    excluded: np.ndarray,
    tie_rank: np.ndarray,
    k: int,
    n_chunks: int,
) -> np.ndarray:
    """Partitioned scan: per-chunk top-k then an exact merge.

    Because (score, tie_rank) is a total order, the merged result equals
    the sequential scan bitwise regardless of chunking.
    """

    n = scores.shape[0]
    if n_chunks < 1:
        raise ValueError("n_chunks must be >= 1")
    if n_chunks == 1 or n == 0:
        return topk_select(scores, excluded, tie_rank, k)
    bounds = np.linspace(0, n, n_chunks + 1, dtype=np.int64)
    partial: list[np.ndarray] = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b > a:
            idx = topk_select(scores[a:b], excluded[a:b], tie_rank[a:b], k)
            partial.append(idx + a)
    if not partial:
        return np.empty(0, dtype=np.int64)
    cand = np.concatenate(partial)
    if cand.size == 0:
        return cand
    sub = topk_select(
        scores[cand],
        np.zeros(cand.size, dtype=bool),
        tie_rank[cand],
        k,
    )
    return cand[sub]


def warmup() -> None:
    """Force JIT compilation so timed paths never pay compile cost."""

    scores = np.array([0.5, 0.25], dtype=np.float32)
    excluded = np.array([False, False])
    rank = np.array([0, 1], dtype=np.int64)
    topk_select(scores, excluded, rank, 1)
