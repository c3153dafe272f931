r"""The 28-measure registry computed from one normalised GLCM.

Notation: ``p(i, j)`` the normalised symmetric GLCM with gray values
``i, j = 1..L``; ``px`` and ``py`` its marginals with means ``mux, muy`` and
standard deviations ``sx, sy``; ``p_{x+y}(k)`` for ``k = 2..2L`` and
``p_{x-y}(k)`` for ``k = 0..L-1``; ``HX, HY`` marginal entropies,
``HXY = -sum p log p``, ``HXY1 = -sum p log(px py)``,
``HXY2 = -sum px py log(px py)``.  Logs are base 2 and ``0 log 0 = 0``.

Classical Haralick statistics

 0 angular_second_moment      sum p^2
 1 contrast                   sum (i-j)^2 p
 2 correlation                (sum i j p - mux muy) / (sx sy); 1 when sx sy = 0
 3 sum_of_squares             sum (i - mux)^2 p
 4 inverse_difference_moment  sum p / (1 + (i-j)^2)
 5 sum_average                sum k p_{x+y}(k)
 6 sum_variance               sum (k - sum_average)^2 p_{x+y}(k)
 7 sum_entropy                -sum p_{x+y} log p_{x+y}
 8 entropy                    HXY
 9 difference_variance        sum (k - dissimilarity)^2 p_{x-y}(k)
10 difference_entropy         -sum p_{x-y} log p_{x-y}
11 imc1                       (HXY - HXY1) / max(HX, HY); 0 when both are 0
12 imc2                       sqrt(1 - exp(-2 (HXY2 - HXY)))
13 maximal_correlation_coef   second largest |eigenvalue| of D^-1/2 p D^-1/2,
                              D = diag(px) on the support; 0 on one level

Extensions

14 autocorrelation            sum i j p
15 cluster_tendency           sum (i + j - mux - muy)^2 p
16 cluster_shade              sum (i + j - mux - muy)^3 p
17 cluster_prominence         sum (i + j - mux - muy)^4 p
18 dissimilarity              sum |i-j| p
19 inverse_difference         sum p / (1 + |i-j|)
20 inverse_difference_norm    sum p / (1 + |i-j| / L)
21 inverse_diff_moment_norm   sum p / (1 + (i-j)^2 / L^2)
22 inverse_variance           sum_{i != j} p / (i-j)^2
23 maximum_probability        max p
24 joint_average              mux
25 sum_energy                 sum p_{x+y}^2
26 difference_energy          sum p_{x-y}^2
27 marginal_entropy           HX
"""

from __future__ import annotations

import numpy as np

MEASURE_NAMES = (
    "angular_second_moment",
    "contrast",
    "correlation",
    "sum_of_squares",
    "inverse_difference_moment",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "imc1",
    "imc2",
    "maximal_correlation_coef",
    "autocorrelation",
    "cluster_tendency",
    "cluster_shade",
    "cluster_prominence",
    "dissimilarity",
    "inverse_difference",
    "inverse_difference_norm",
    "inverse_diff_moment_norm",
    "inverse_variance",
    "maximum_probability",
    "joint_average",
    "sum_energy",
    "difference_energy",
    "marginal_entropy",
)


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def _cross_entropy(p: np.ndarray, q: np.ndarray) -> float:
    # -sum p log q over cells where p > 0 (q > 0 there for GLCM marginals)
    sel = p > 0
    return float(-np.sum(p[sel] * np.log2(q[sel])))


def _max_corr_coef(p: np.ndarray, px: np.ndarray) -> float:
    support = px > 0
    if support.sum() < 2:
        return 0.0
    sub = p[np.ix_(support, support)]
    root = 1.0 / np.sqrt(px[support])
    m = sub * root[:, None] * root[None, :]
    m = 0.5 * (m + m.T)
    eig = np.sort(np.abs(np.linalg.eigvalsh(m)))[::-1]
    return float(min(eig[1], 1.0))


def measures(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    L = p.shape[0]
    g = np.arange(1, L + 1, dtype=np.float64)
    i, j = np.meshgrid(g, g, indexing="ij")
    diff = i - j
    adiff = np.abs(diff)

    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mux = float(np.dot(g, px))
    muy = float(np.dot(g, py))
    sx = np.sqrt(max(float(np.dot((g - mux) ** 2, px)), 0.0))
    sy = np.sqrt(max(float(np.dot((g - muy) ** 2, py)), 0.0))

    psum = np.bincount((i + j).astype(np.int64).ravel() - 2, weights=p.ravel(), minlength=2 * L - 1)
    ksum = np.arange(2, 2 * L + 1, dtype=np.float64)
    pdiff = np.bincount(adiff.astype(np.int64).ravel(), weights=p.ravel(), minlength=L)
    kdiff = np.arange(L, dtype=np.float64)

    autocorr = float(np.sum(i * j * p))
    correlation = (autocorr - mux * muy) / (sx * sy) if sx * sy > 0 else 1.0

    sum_average = float(np.dot(ksum, psum))
    dissimilarity = float(np.dot(kdiff, pdiff))

    hx = _entropy(px)
    hy = _entropy(py)
    hxy = _entropy(p)
    pxpy = px[:, None] * py[None, :]
    hxy1 = _cross_entropy(p, pxpy)
    hxy2 = _entropy(pxpy)
    hmax = max(hx, hy)
    imc1 = (hxy - hxy1) / hmax if hmax > 0 else 0.0
    imc2 = float(np.sqrt(max(1.0 - np.exp(-2.0 * (hxy2 - hxy)), 0.0)))

    cluster = i + j - mux - muy
    off = diff != 0

    out = np.array(
        [
            np.sum(p * p),
            np.sum(diff**2 * p),
            correlation,
            np.sum((i - mux) ** 2 * p),
            np.sum(p / (1.0 + diff**2)),
            sum_average,
            np.dot((ksum - sum_average) ** 2, psum),
            _entropy(psum),
            hxy,
            np.dot((kdiff - dissimilarity) ** 2, pdiff),
            _entropy(pdiff),
            imc1,
            imc2,
            _max_corr_coef(p, px),
            autocorr,
            np.sum(cluster**2 * p),
            np.sum(cluster**3 * p),
            np.sum(cluster**4 * p),
            dissimilarity,
            np.sum(p / (1.0 + adiff)),
            np.sum(p / (1.0 + adiff / L)),
            np.sum(p / (1.0 + diff**2 / L**2)),
            np.sum(p[off] / diff[off] ** 2),
            p.max(),
            mux,
            np.sum(psum**2),
            np.sum(pdiff**2),
            hx,
        ],
        dtype=np.float64,
    )
    return out
