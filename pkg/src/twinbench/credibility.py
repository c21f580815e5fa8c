"""Credibility assessment of fusion runs against real-style reference runs.

Pipeline: extract per-vehicle kinematic channels from both logs, align the
two multichannel series with dynamic time warping (symmetric path
expansion), reduce each aligned matrix to its first principal component,
then score the component pair with five complementary metrics:

  pcc            linear correlation                    [-1, 1], 1 best
  rmse           point-by-point deviation              >= 0, 0 best
  tic            scale-invariant inequality            [0, 1], 0 best
  cross_fuzzy_en pattern asynchrony (nonlinear)        >= 0, 0 best
  cs_psd         spectral (frequency-domain) match     [-1, 1], 1 best

The verdict feeds the element-mix recommendation: failing scenarios trade a
virtual element for a physical one, comfortably passing ones do the reverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class CredibilityError(ValueError):
    pass


class DegenerateError(CredibilityError):
    pass


# ---------------------------------------------------------------------------
# alignment
# ---------------------------------------------------------------------------

@dataclass
class DtwResult:
    distance: float
    path: list[tuple[int, int]]
    warped_a: np.ndarray
    warped_b: np.ndarray


def dtw_align(a, b) -> DtwResult:
    """Classic DTW: local cost |a_i - b_j| (row-wise Euclidean for
    multichannel), steps {(1,0),(0,1),(1,1)}, boundary anchored. The warped
    outputs are both inputs expanded along the optimal path."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise CredibilityError("empty input")
    a2 = a[:, None] if a.ndim == 1 else a
    b2 = b[:, None] if b.ndim == 1 else b
    n, m = a2.shape[0], b2.shape[0]

    diff = a2[:, None, :] - b2[None, :, :]
    cost = np.sqrt((diff * diff).sum(axis=2))

    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row_prev = acc[i - 1]
        row = acc[i]
        c = cost[i - 1]
        for j in range(1, m + 1):
            row[j] = c[j - 1] + min(row_prev[j], row[j - 1], row_prev[j - 1])

    path = []
    i, j = n, m
    while i > 0 or j > 0:
        path.append((i - 1, j - 1))
        if i == 1 and j == 1:
            break
        moves = []
        if i > 1 and j > 1:
            moves.append((acc[i - 1, j - 1], (i - 1, j - 1)))
        if i > 1:
            moves.append((acc[i - 1, j], (i - 1, j)))
        if j > 1:
            moves.append((acc[i, j - 1], (i, j - 1)))
        _, (i, j) = min(moves, key=lambda t: t[0])
    path.reverse()

    idx_a = np.array([p[0] for p in path])
    idx_b = np.array([p[1] for p in path])
    return DtwResult(distance=float(acc[n, m]), path=path,
                     warped_a=a[idx_a], warped_b=b[idx_b])


# ---------------------------------------------------------------------------
# dimensionality reduction
# ---------------------------------------------------------------------------

@dataclass
class PcaResult:
    components: np.ndarray          # (k, n_cols) rows are components
    explained_variance: np.ndarray  # eigenvalues, descending
    projected: np.ndarray           # (n_rows, k)
    mean: np.ndarray


def pca_reduce(m, k: int) -> PcaResult:
    """Covariance-eigendecomposition PCA; components ordered by descending
    eigenvalue; sign fixed so each component's largest-magnitude loading is
    positive."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] < 2:
        raise CredibilityError("need a 2-D matrix with >= 2 rows")
    if k > m.shape[1]:
        raise CredibilityError("k exceeds column count")
    mean = m.mean(axis=0)
    centered = m - mean
    cov = centered.T @ centered / (m.shape[0] - 1)
    if not np.any(np.abs(cov) > 0):
        raise DegenerateError("zero-variance matrix")
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    for c in range(evecs.shape[1]):
        j = int(np.argmax(np.abs(evecs[:, c])))
        if evecs[j, c] < 0:
            evecs[:, c] = -evecs[:, c]
    comps = evecs[:, :k].T
    return PcaResult(components=comps, explained_variance=evals[:k],
                     projected=centered @ comps.T, mean=mean)


# ---------------------------------------------------------------------------
# the five metrics
# ---------------------------------------------------------------------------

def pcc(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 2:
        raise CredibilityError("need equal lengths >= 2")
    da, db = a - a.mean(), b - b.mean()
    na, nb = float(np.sqrt((da * da).sum())), float(np.sqrt((db * db).sum()))
    if na == 0.0 or nb == 0.0:
        raise DegenerateError("zero variance input")
    return float((da * db).sum() / (na * nb))


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 1:
        raise CredibilityError("need equal lengths >= 1")
    d = a - b
    return float(np.sqrt((d * d).mean()))


def tic(a, b) -> float:
    """Theil's inequality coefficient: rmse / (rms(a) + rms(b)), in [0, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 1:
        raise CredibilityError("need equal lengths >= 1")
    denom = float(np.sqrt((a * a).mean())) + float(np.sqrt((b * b).mean()))
    if denom == 0.0:
        raise DegenerateError("both inputs all-zero")
    return rmse(a, b) / denom


def standardize(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if sd == 0.0:
        raise DegenerateError("zero variance input")
    return (x - x.mean()) / sd


def cross_fuzzy_en(a, b, m: int = 2, r: float = 0.2, n: float = 2.0) -> float:
    """Cross fuzzy entropy of two standardized series.

    phi_m = mean over all (i, j) of exp(-(d_ij / r)^n) with d_ij the
    Chebyshev distance between a's and b's length-m templates; both template
    sets use starts 0..N-m-1 so phi_m and phi_{m+1} average the same pair
    count. Result = ln phi_m - ln phi_{m+1}.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1:
        raise CredibilityError("need 1-D series")
    N = min(a.size, b.size)
    if N < m + 2:
        raise CredibilityError(f"series too short for m={m}")
    a, b = a[:N], b[:N]

    def phi(mm: int) -> float:
        ta = np.lib.stride_tricks.sliding_window_view(a, mm)[: N - m]
        tb = np.lib.stride_tricks.sliding_window_view(b, mm)[: N - m]
        d = np.abs(ta[:, None, :] - tb[None, :, :]).max(axis=2)
        return float(np.exp(-((d / r) ** n)).mean())

    p_m, p_m1 = phi(m), phi(m + 1)
    if p_m <= 0.0 or p_m1 <= 0.0:
        return math.inf
    return math.log(p_m) - math.log(p_m1)


def cs_psd(a, b) -> float:
    """Cosine similarity of Hann-windowed periodograms, DC bin excluded."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.size < 8:
        raise CredibilityError("need equal lengths >= 8")
    w = np.hanning(a.size)
    pa = np.abs(np.fft.rfft(a * w)) ** 2
    pb = np.abs(np.fft.rfft(b * w)) ** 2
    pa, pb = pa[1:], pb[1:]
    na, nb = float(np.sqrt((pa * pa).sum())), float(np.sqrt((pb * pb).sum()))
    if na == 0.0 or nb == 0.0:
        raise DegenerateError("zero spectrum")
    return float((pa * pb).sum() / (na * nb))


# ---------------------------------------------------------------------------
# five-stage assessment
# ---------------------------------------------------------------------------

@dataclass
class SeriesMatrix:
    """Time samples x stacked per-vehicle (x, y, speed, accel) channels."""
    values: np.ndarray
    channels: list[str]
    dt: float = 0.1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 2:
            raise CredibilityError("series matrix needs >= 2 rows")
        if np.isnan(self.values).any():
            raise CredibilityError("series matrix has missing values")


@dataclass
class CredibilityConfig:
    pcc_min: float = 0.9
    tic_max: float = 0.15
    cs_psd_min: float = 0.95
    # margins beyond the thresholds that mark a comfortable pass
    slack_pcc: float = 0.05
    slack_tic: float = 0.05
    slack_cs_psd: float = 0.03
    fuzzy_m: int = 2
    fuzzy_r: float = 0.2
    fuzzy_n: float = 2.0


@dataclass
class CredibilityReport:
    scenario_id: str
    metrics: dict[str, float]
    thresholds: dict[str, float]
    verdict: str                    # "pass" | "fail"
    margin_pass: bool = False

    def __post_init__(self):
        m = self.metrics
        if not (-1.0 - 1e-9 <= m["pcc"] <= 1.0 + 1e-9):
            raise CredibilityError("pcc out of range")
        if not (0.0 - 1e-9 <= m["tic"] <= 1.0 + 1e-9):
            raise CredibilityError("tic out of range")
        if not (-1.0 - 1e-9 <= m["cs_psd"] <= 1.0 + 1e-9):
            raise CredibilityError("cs_psd out of range")
        if m["rmse"] < 0 or m["cross_fuzzy_en"] < -1e-9:
            raise CredibilityError("rmse/cross_fuzzy_en out of range")

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "metrics": dict(self.metrics),
            "thresholds": dict(self.thresholds),
            "verdict": self.verdict,
            "margin_pass": self.margin_pass,
        }

    def render_table(self) -> str:
        m = self.metrics
        head = f"{'Scenario':<28}{'PCC':>8}{'RMSE':>8}{'TIC':>8}{'Cross-FuzzyEn':>15}{'CS-PSD':>8}"
        row = (f"{self.scenario_id:<28}{m['pcc']:>8.3f}{m['rmse']:>8.3f}"
               f"{m['tic']:>8.3f}{m['cross_fuzzy_en']:>15.3f}{m['cs_psd']:>8.3f}")
        return head + "\n" + row + f"\nverdict: {self.verdict}"


def standardize_columns(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    for c in range(out.shape[1]):
        sd = out[:, c].std()
        mu = out[:, c].mean()
        out[:, c] = (out[:, c] - mu) / sd if sd > 0 else out[:, c] - mu
    return out


def assess_matrices(real: SeriesMatrix, fusion: SeriesMatrix, scenario_id: str,
                    cfg: CredibilityConfig | None = None) -> CredibilityReport:
    """Five stages: channel standardization, DTW alignment (one warp for the
    whole matrix, row-wise Euclidean cost), PCA to the first component of
    each side, the five metrics, verdict."""
    cfg = cfg or CredibilityConfig()
    ra = standardize_columns(real.values)
    fb = standardize_columns(fusion.values)
    aligned = dtw_align(ra, fb)
    wa, wb = aligned.warped_a, aligned.warped_b
    p1 = pca_reduce(wa, 1).projected[:, 0]
    # project the fusion side with its own basis; identical inputs then give
    # identical series, and time-structure differences stay visible
    p2 = pca_reduce(wb, 1).projected[:, 0]

    metrics = {
        "pcc": pcc(p1, p2),
        "rmse": rmse(p1, p2),
        "tic": tic(p1, p2),
        "cross_fuzzy_en": cross_fuzzy_en(standardize(p1), standardize(p2),
                                         m=cfg.fuzzy_m, r=cfg.fuzzy_r, n=cfg.fuzzy_n),
        "cs_psd": cs_psd(p1, p2),
    }
    ok = (metrics["pcc"] >= cfg.pcc_min and metrics["tic"] <= cfg.tic_max
          and metrics["cs_psd"] >= cfg.cs_psd_min)
    margin = (metrics["pcc"] >= cfg.pcc_min + cfg.slack_pcc
              and metrics["tic"] <= cfg.tic_max - cfg.slack_tic
              and metrics["cs_psd"] >= cfg.cs_psd_min + cfg.slack_cs_psd)
    thresholds = {"pcc_min": cfg.pcc_min, "tic_max": cfg.tic_max,
                  "cs_psd_min": cfg.cs_psd_min}
    return CredibilityReport(scenario_id=scenario_id, metrics=metrics,
                             thresholds=thresholds,
                             verdict="pass" if ok else "fail", margin_pass=margin)


def series_matrix_from_log(log, vehicle_ids: list[str] | None = None) -> SeriesMatrix:
    """Stack (x, y, speed, accel) per vehicle across ticks from a parsed RunLog."""
    ticks = log.ticks
    if len(ticks) < 2:
        raise CredibilityError("log too short")
    if vehicle_ids is None:
        counts: dict[str, int] = {}
        for t in ticks:
            for eid, e in t["entities"].items():
                if e.get("kind") != "rsu":
                    counts[eid] = counts.get(eid, 0) + 1
        vehicle_ids = sorted(eid for eid, c in counts.items() if c == len(ticks))
    if not vehicle_ids:
        raise CredibilityError("no vehicle present across the whole log")
    cols, names = [], []
    for vid in vehicle_ids:
        for ch in ("x", "y", "speed", "accel"):
            cols.append([t["entities"][vid][ch] for t in ticks])
            names.append(f"{vid}.{ch}")
    return SeriesMatrix(values=np.array(cols, dtype=float).T, channels=names)


def assess(real_log, fusion_log, cfg: CredibilityConfig | None = None) -> CredibilityReport:
    """Stage pipeline over two parsed RunLogs from the same scenario."""
    sid_r = real_log.header.get("scenario_id")
    sid_f = fusion_log.header.get("scenario_id")
    if sid_r != sid_f:
        raise CredibilityError(f"scenario mismatch: {sid_r!r} vs {sid_f!r}")
    ra = series_matrix_from_log(real_log)
    shared = sorted(set(c for c in ra.channels) & set(series_matrix_from_log(fusion_log).channels))
    vids = sorted({c.split(".")[0] for c in shared})
    ra = series_matrix_from_log(real_log, vids)
    fb = series_matrix_from_log(fusion_log, vids)
    return assess_matrices(ra, fb, scenario_id=sid_r or "unknown", cfg=cfg)


def recommend_mix(report: CredibilityReport,
                  current_mix: dict[str, int]) -> tuple[dict[str, int], bool]:
    """Shift one element between virtual and physical pools from the verdict.

    fail -> one virtual becomes physical; pass with margin -> one physical
    becomes virtual; otherwise unchanged. Returns (new mix, saturated).
    """
    phys = int(current_mix["physical"])
    virt = int(current_mix["virtual"])
    if phys < 0 or virt < 0:
        raise CredibilityError("counts must be >= 0")
    if report.verdict == "fail":
        if virt == 0:
            return {"physical": phys, "virtual": virt}, True
        return {"physical": phys + 1, "virtual": virt - 1}, False
    if report.margin_pass:
        if phys == 0:
            return {"physical": phys, "virtual": virt}, True
        return {"physical": phys - 1, "virtual": virt + 1}, False
    return {"physical": phys, "virtual": virt}, False
