"""Order-preserving thread map used for theta-chunk and sample-chunk work."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

CHUNK = 32


def chunks(n: int, size: int = CHUNK) -> list[slice]:
    """Fixed-size slices; the partition never depends on the thread count."""
    return [slice(a, min(a + size, n)) for a in range(0, n, size)]


def pmap(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
