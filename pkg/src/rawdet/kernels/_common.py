import numpy as np


def box_weights(src: int, dst: int) -> tuple[np.ndarray, np.ndarray]:
    """Area-overlap stencil for resampling ``src`` samples onto ``dst``.

    Source pixel ``i`` spans ``[i*dst, (i+1)*dst)`` and output pixel ``j``
    spans ``[j*src, (j+1)*src)`` in a common integer unit, so every overlap
    is an exact integer and each output's weights sum to ``src``.

    Returns ``(index, weight)``, both shaped (dst, K); unused slots carry
    weight 0 and a valid index.
    """
    if not 0 < dst <= src:
        raise ValueError(f"cannot resample {src} -> {dst}")
    spans = []
    for j in range(dst):
        lo, hi = j * src, (j + 1) * src
        first, last = lo // dst, (hi - 1) // dst
        row = []
        for i in range(first, last + 1):
            w = min(hi, (i + 1) * dst) - max(lo, i * dst)
            if w > 0:
                row.append((i, w))
        spans.append(row)
    k = max(len(r) for r in spans)
    index = np.zeros((dst, k), dtype=np.int64)
    weight = np.zeros((dst, k), dtype=np.float64)
    for j, row in enumerate(spans):
        for n, (i, w) in enumerate(row):
            index[j, n] = i
            weight[j, n] = w
        index[j, len(row):] = row[0][0]
    return index, weight
