"""Regenerate ``src/freqseg/data/filters_v1.txt``.

Run from the repository root::

    python tools/design_filters.py

DTCWT tables
    * Level 1: 13-tap near-symmetric analysis lowpass (dyadic taps over 5120,
      double zero at Nyquist). The 19-tap synthesis lowpass is the
      symmetric filter closest in least squares to the analysis lowpass
      subject to the half-band (perfect reconstruction) constraints and a
      zero at Nyquist. Highpasses are the usual alternating-sign modulations.
    * Levels >= 2: 14-tap orthonormal quarter-shift lowpass (Kingsbury, 1999),
      nudged by ~1e-6 so it is orthonormal with an exact zero at Nyquist.
      Tree B is the time reverse of tree A.

NSCT tables
    * 9-tap binomial pyramid smoother.
    * Level-1 fan kernel: ideal fan centred at -22.5 degrees, sampled on a
      256x256 frequency grid, truncated to 15x15 and Kaiser windowed.
    * Level-2 kernel: the level-1 kernel upsampled on the quincunx lattice.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "freqseg" / "data" / "filters_v1.txt"
SQRT2 = np.sqrt(2.0)

NEAR_SYM_13 = np.array([-9, 0, 114, -240, -247, 1520, 2844, 1520, -247, -240, 114, 0, -9]) / 5120.0

QSHIFT_14 = np.array([
    0.0032531427636532, -0.0038832119991585, 0.0346603468448535,
    -0.0388728012688278, -0.1172038876991153, 0.2752953846688820,
    0.7561456438925225, 0.5688104207121227, 0.0118660920337970,
    -0.1067118046866654, 0.0238253847949203, 0.0170252238815540,
    -0.0054394759372741, -0.0045568956284755,
])


def _modulate(h: np.ndarray) -> np.ndarray:
    centre = len(h) // 2
    return h * (-1.0) ** (np.arange(len(h)) - centre)


def design_level1_synthesis(h0: np.ndarray, length: int = 19) -> np.ndarray:
    """Symmetric synthesis lowpass closest to ``h0`` under the PR constraints."""
    half = length // 2
    hh = len(h0) // 2
    # g[n] = u[|n|], n in [-half, half]; unknowns u[0..half]
    def g_basis(k):
        v = np.zeros(length)
        v[half + k] = 1.0
        v[half - k] = 1.0
        if k == 0:
            v[half] = 1.0
        return v

    basis = np.stack([g_basis(k) for k in range(half + 1)], axis=1)
    rows, rhs = [], []
    # product p = h0 * g must be half-band: p[0] = 1/2, p[2m] = 0
    for m in range(0, (hh + half) // 2 + 1):
        lag = 2 * m
        row = np.zeros(length)
        for n in range(-hh, hh + 1):
            j = lag - n
            if -half <= j <= half:
                row[half + j] += h0[hh + n]
        rows.append(row @ basis)
        rhs.append(0.5 if m == 0 else 0.0)
    signs = (-1.0) ** (np.arange(length) - half)
    rows.append(signs @ basis)
    rhs.append(0.0)
    A = np.array(rows)
    b = np.array(rhs)
    target = np.zeros(length)
    target[half - hh:half + hh + 1] = h0
    # minimise |basis u - target|^2 s.t. A u = b  (KKT system)
    Q = basis.T @ basis
    c = basis.T @ target
    n_u, n_c = Q.shape[0], A.shape[0]
    kkt = np.zeros((n_u + n_c, n_u + n_c))
    kkt[:n_u, :n_u] = Q
    kkt[:n_u, n_u:] = A.T
    kkt[n_u:, :n_u] = A
    sol = np.linalg.solve(kkt, np.concatenate([c, b]))
    return basis @ sol[:n_u]


def refine_qshift(h: np.ndarray, iters: int = 30) -> np.ndarray:
    """Nearest (minimum-norm Newton) orthonormal filter with an exact Nyquist zero.

    The published taps are orthonormal to ~1e-16 but only zero at Nyquist to
    ~1e-6; the highpass would then leak DC.
    """
    h = h.copy()
    n = len(h)
    signs = (-1.0) ** np.arange(n)
    for _ in range(iters):
        cons, jac = [], []
        for k in range(n // 2):
            shifted = np.zeros(n)
            shifted[: n - 2 * k] = h[2 * k:]
            back = np.zeros(n)
            back[2 * k:] = h[: n - 2 * k]
            cons.append(h @ shifted - (1.0 if k == 0 else 0.0))
            jac.append(shifted + back)
        cons.append(signs @ h)
        jac.append(signs)
        cons = np.array(cons)
        if np.abs(cons).max() < 1e-17:
            break
        h = h - np.linalg.pinv(np.array(jac)) @ cons
    return h


def fan_kernel(centre_deg: float, radius: int = 7, grid: int = 256, beta: float = 4.0) -> np.ndarray:
    w = np.fft.fftfreq(grid) * 2 * np.pi
    w_row, w_col = np.meshgrid(w, w, indexing="ij")
    angle = np.degrees(np.arctan2(w_row, w_col))
    offset = (angle - centre_deg + 90.0) % 180.0 - 90.0
    resp = np.where(np.abs(offset) < 45.0, 1.0, 0.0)
    resp[np.isclose(np.abs(offset), 45.0)] = 0.5
    resp[0, 0] = 0.5
    h = np.fft.fftshift(np.real(np.fft.ifft2(resp)))
    c = grid // 2
    h = h[c - radius:c + radius + 1, c - radius:c + radius + 1]
    win = np.kaiser(2 * radius + 1, beta)
    h = h * np.outer(win, win)
    # exact point symmetry
    return 0.5 * (h + h[::-1, ::-1])


def quincunx_upsample(k: np.ndarray) -> np.ndarray:
    r = k.shape[0] // 2
    out = np.zeros((4 * r + 1, 4 * r + 1))
    for i in range(-r, r + 1):
        for j in range(-r, r + 1):
            out[2 * r + i + j, 2 * r - i + j] = k[r + i, r + j]
    return out


def build_tables() -> dict[str, np.ndarray]:
    h0o = NEAR_SYM_13
    g0o = design_level1_synthesis(h0o)
    h1o = _modulate(g0o)
    g1o = _modulate(h0o)

    h0a = refine_qshift(QSHIFT_14)
    h0b = h0a[::-1].copy()
    h1b = h0a * (-1.0) ** np.arange(14)
    h1a = h1b[::-1].copy()

    binom = np.array([1, 8, 28, 56, 70, 56, 28, 8, 1], dtype=float) / 256.0
    f1 = fan_kernel(-22.5)
    f2 = quincunx_upsample(f1)

    return {
        "dtcwt.level1.analysis.lowpass": h0o * SQRT2,
        "dtcwt.level1.analysis.highpass": h1o * SQRT2,
        "dtcwt.level1.synthesis.lowpass": g0o * SQRT2,
        "dtcwt.level1.synthesis.highpass": g1o * SQRT2,
        "dtcwt.qshift.tree_a.analysis.lowpass": h0a,
        "dtcwt.qshift.tree_a.analysis.highpass": h1a,
        "dtcwt.qshift.tree_b.analysis.lowpass": h0b,
        "dtcwt.qshift.tree_b.analysis.highpass": h1b,
        "dtcwt.qshift.tree_a.synthesis.lowpass": h0a[::-1].copy(),
        "dtcwt.qshift.tree_a.synthesis.highpass": h1a[::-1].copy(),
        "dtcwt.qshift.tree_b.synthesis.lowpass": h0b[::-1].copy(),
        "dtcwt.qshift.tree_b.synthesis.highpass": h1b[::-1].copy(),
        "nsct.pyramid.lowpass": binom,
        "nsct.fan.level1": f1,
        "nsct.fan.level2": f2,
    }


def write_tables(tables: dict[str, np.ndarray], path: Path = OUT) -> None:
    lines = [
        "# freqseg filter coefficient tables",
        "# Regenerate with tools/design_filters.py. Sections: '[name]', a",
        "# 'shape' line, then one coefficient per line in C (row-major) order.",
        "version 1",
    ]
    for name, arr in tables.items():
        lines.append("")
        lines.append(f"[{name}]")
        lines.append("shape " + " ".join(str(s) for s in arr.shape))
        flat = np.where(np.abs(np.ravel(arr)) < 1e-15, 0.0, np.ravel(arr))
        lines.extend(repr(float(v)) for v in flat)
    path.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    write_tables(build_tables())
    print(f"wrote {OUT}")
