"""Image-side measurements on grayscale frames and binary pothole masks.

Images are 2-D numpy arrays indexed ``[row, col]``: grayscale frames hold
intensities in [0, 255], masks are boolean with True marking pothole pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

CANNY_HIGH = 0.6
SEVERITY_LOW = 0.05
SEVERITY_HIGH = 0.15
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def log_stretch(img: np.ndarray, gain: float = 1.0) -> np.ndarray:
    """Logarithmic contrast boost followed by a min-max stretch to [0, 255].

    A constant image is returned unchanged.
    """
    img = np.asarray(img)
    if img.size == 0 or img.min() == img.max():
        return img.copy()
    p = img.astype(float)
    q = _round_half_up(255.0 * np.log1p(p * gain) / math.log1p(255.0 * gain))
    lo, hi = q.min(), q.max()
    if lo == hi:
        return np.full(img.shape, lo, dtype=np.uint8)
    return _round_half_up((q - lo) * 255.0 / (hi - lo)).astype(np.uint8)


def _gaussian_kernel(size: int = 5, sigma: float = 1.4) -> np.ndarray:
    r = np.arange(size) - size // 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
_SOBEL_Y = _SOBEL_X.T


def gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Blurred Sobel gradients (gx along columns, gy along rows).

    Input is normalized by its maximum first, so any positive global scaling
    of the intensities yields bit-identical gradients for integer images.
    """
    f = np.asarray(img, dtype=float)
    peak = f.max() if f.size else 0.0
    if peak > 0:
        f = f / peak
    f = ndimage.convolve(f, _gaussian_kernel(), mode="nearest")
    gx = ndimage.correlate(f, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(f, _SOBEL_Y, mode="nearest")
    return gx, gy


def non_max_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Thin ridges across the gradient, with direction quantized to 4 bins.

    A pixel survives if it is >= its neighbor on one side and > on the
    other, so two-pixel plateaus keep exactly one pixel.
    """
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1)
    h, w = mag.shape

    def shifted(dr: int, dc: int) -> np.ndarray:
        return padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]

    # (before, after) neighbor offsets per direction bin
    bins = [
        ((angle < 22.5) | (angle >= 157.5), (0, -1), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (-1, -1), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (-1, 0), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (-1, 1), (1, -1)),
    ]
    keep = np.zeros(mag.shape, dtype=bool)
    for sel, before, after in bins:
        keep |= sel & (mag >= shifted(*before)) & (mag > shifted(*after))
    return np.where(keep & (mag > 0), mag, 0.0)


def canny(img: np.ndarray, low: float | None = None, high: float = CANNY_HIGH) -> np.ndarray:
    """Canny edges; ``low``/``high`` are fractions of the peak gradient magnitude.

    ``low`` defaults to ``high / 2``.
    """
    img = np.asarray(img)
    if img.ndim != 2 or img.shape[0] < 5 or img.shape[1] < 5:
        raise ValueError("canny needs a 2-D image of at least 5x5 pixels")
    if low is None:
        low = high / 2
    if not 0 <= low < high <= 1:
        raise ValueError("need 0 <= low < high <= 1")
    gx, gy = gradients(img)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    # gradients are on max-normalized intensities; below this is round-off
    if peak <= 1e-9:
        return np.zeros(img.shape, dtype=bool)
    thin = non_max_suppression(mag, gx, gy)
    weak = thin >= low * peak
    strong = thin >= high * peak
    labels, _ = ndimage.label(weak, structure=EIGHT_CONNECTED)
    keep = np.unique(labels[strong])
    return np.isin(labels, keep[keep > 0])


def dilate(mask: np.ndarray, k: int = 3) -> np.ndarray:
    """Binary dilation with a k x k square of ones (k odd)."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {k}")
    m = np.asarray(mask, dtype=bool)
    r = k // 2
    padded = np.pad(m, r)
    h, w = m.shape
    out = np.zeros_like(m)
    for dr in range(k):
        for dc in range(k):
            out |= padded[dr : dr + h, dc : dc + w]
    return out


def edge_mask(img: np.ndarray, high: float = CANNY_HIGH, k: int = 3) -> np.ndarray:
    """Fast path for live frames: Canny edges thickened by dilation."""
    return dilate(canny(img, high=high), k)


def area_ratio(mask: np.ndarray) -> float:
    m = np.asarray(mask, dtype=bool)
    if m.size == 0:
        raise ValueError("mask has zero area")
    return round(int(m.sum()) / m.size, 9)


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=EIGHT_CONNECTED)
    return labels, int(n)


def count_components(mask: np.ndarray) -> int:
    return label_components(mask)[1]


def line_gate(mask: np.ndarray, line_y: int) -> bool:
    """True when any pothole pixel touches the horizontal gating row."""
    m = np.asarray(mask, dtype=bool)
    if not 0 <= line_y < m.shape[0]:
        raise ValueError(f"gate row {line_y} outside image of height {m.shape[0]}")
    return bool(m[line_y].any())


def largest_extent(mask: np.ndarray) -> tuple[int, int] | None:
    """Bounding-box (length, width) in pixels of the largest component.

    Length runs along image rows (the travel direction for a forward
    camera), width along columns. This is an approximation of pothole
    dimensions, not a measured outline.
    """
    labels, n = label_components(mask)
    if n == 0:
        return None
    sizes = np.bincount(labels.ravel())[1:]
    biggest = int(np.argmax(sizes)) + 1
    rows, cols = ndimage.find_objects(labels)[biggest - 1]
    return rows.stop - rows.start, cols.stop - cols.start


@dataclass(frozen=True)
class Homography:
    h: np.ndarray

    def __post_init__(self) -> None:
        h = np.array(self.h, dtype=float).reshape(3, 3)
        if abs(np.linalg.det(h)) <= 1e-12:
            raise ValueError("homography is singular")
        if h[2, 2] != 0:
            h = h / h[2, 2]
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        hom = np.column_stack([pts, np.ones(len(pts))]) @ self.h.T
        return hom[:, :2] / hom[:, 2:3]

    def inverse(self) -> Homography:
        return Homography(np.linalg.inv(self.h))


def _has_collinear_triple(pts: np.ndarray, eps: float = 1e-9) -> bool:
    scale = max(1.0, float(np.abs(pts).max()))
    for a in range(4):
        for b in range(a + 1, 4):
            for c in range(b + 1, 4):
                u, v = pts[b] - pts[a], pts[c] - pts[a]
                if abs(u[0] * v[1] - u[1] * v[0]) <= eps * scale * scale:
                    return True
    return False


def homography_from_points(src, dst) -> Homography:
    """Exact 4-point DLT with h33 fixed to 1 (8 x 8 linear system)."""
    src = np.asarray(src, dtype=float).reshape(4, 2)
    dst = np.asarray(dst, dtype=float).reshape(4, 2)
    if _has_collinear_triple(src) or _has_collinear_triple(dst):
        raise ValueError("degenerate correspondence: three points are collinear")
    A = np.zeros((8, 8))
    rhs = np.zeros(8)
    for k, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        A[2 * k] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        A[2 * k + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        rhs[2 * k], rhs[2 * k + 1] = u, v
    h = np.linalg.solve(A, rhs)
    return Homography(np.append(h, 1.0).reshape(3, 3))


def warp_mask(mask: np.ndarray, H: Homography, out_w: int, out_h: int) -> np.ndarray:
    """Map a mask into the target plane by inverse nearest-neighbor lookup.

    Pixel centers sit at integer coordinates ``(x=col, y=row)``.
    """
    m = np.asarray(mask, dtype=bool)
    ys, xs = np.mgrid[0:out_h, 0:out_w]
    src = H.inverse().apply(np.column_stack([xs.ravel(), ys.ravel()]))
    with np.errstate(invalid="ignore"):
        cx = np.floor(src[:, 0] + 0.5)
        cy = np.floor(src[:, 1] + 0.5)
    ok = np.isfinite(cx) & np.isfinite(cy) & (cx >= 0) & (cx < m.shape[1]) & (cy >= 0) & (cy < m.shape[0])
    out = np.zeros(out_h * out_w, dtype=bool)
    out[ok] = m[cy[ok].astype(int), cx[ok].astype(int)]
    return out.reshape(out_h, out_w)


def severity(area: float, low: float = SEVERITY_LOW, high: float = SEVERITY_HIGH) -> str:
    if not 0 <= area <= 1:
        raise ValueError(f"area fraction {area} outside [0, 1]")
    if not 0 <= low <= high:
        raise ValueError("severity thresholds must satisfy 0 <= low <= high")
    if area < low:
        return "low"
    if area < high:
        return "medium"
    return "high"


class PnmError(ValueError):
    pass


def _read_pnm(data: bytes) -> tuple[bytes, int, int, int, bytes]:
    """Split a binary PBM/PGM payload into (magic, width, height, maxval, raster)."""
    magic = data[:2]
    if magic not in (b"P4", b"P5"):
        raise PnmError(f"unsupported image format {magic!r}; expected binary PBM (P4) or PGM (P5)")
    fields: list[int] = []
    pos = 2
    need = 2 if magic == b"P4" else 3
    while len(fields) < need:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise PnmError("malformed PNM header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte before the raster
    width, height = fields[0], fields[1]
    maxval = fields[2] if magic == b"P5" else 1
    if width <= 0 or height <= 0:
        raise PnmError("image dimensions must be positive")
    if not 0 < maxval <= 255:
        raise PnmError(f"only 8-bit PGM is supported (maxval {maxval})")
    return magic, width, height, maxval, data[pos:]


def _decode_pnm(data: bytes) -> tuple[bytes, np.ndarray]:
    magic, w, h, maxval, raster = _read_pnm(data)
    if magic == b"P4":
        row_bytes = (w + 7) // 8
        if len(raster) < row_bytes * h:
            raise PnmError("PBM raster truncated")
        packed = np.frombuffer(raster[: row_bytes * h], dtype=np.uint8).reshape(h, row_bytes)
        return magic, np.unpackbits(packed, axis=1)[:, :w].astype(bool)
    if len(raster) < w * h:
        raise PnmError("PGM raster truncated")
    img = np.frombuffer(raster[: w * h], dtype=np.uint8).reshape(h, w)
    if maxval != 255:
        img = _round_half_up(img.astype(float) * 255.0 / maxval).astype(np.uint8)
    return magic, img.copy()


def read_gray(path: str | Path) -> np.ndarray:
    magic, img = _decode_pnm(Path(path).read_bytes())
    if magic == b"P4":
        return img.astype(np.uint8) * 255
    return img


def read_mask(path: str | Path) -> np.ndarray:
    """PBM masks (1 bits mark pothole pixels) or PGM masks (values above 127)."""
    magic, img = _decode_pnm(Path(path).read_bytes())
    if magic == b"P4":
        return img
    return img > 127


def write_gray(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 2 or img.min(initial=0) < 0 or img.max(initial=0) > 255:
        raise ValueError("grayscale image must be 2-D with values in [0, 255]")
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.astype(np.uint8).tobytes())


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """PBM when the suffix is .pbm, otherwise 0/255 PGM."""
    m = np.asarray(mask, dtype=bool)
    if str(path).lower().endswith(".pbm"):
        h, w = m.shape
        Path(path).write_bytes(b"P4\n%d %d\n" % (w, h) + np.packbits(m, axis=1).tobytes())
    else:
        write_gray(path, m.astype(np.uint8) * 255)


def mask_stats(
    mask: np.ndarray,
    line_y: int | None = None,
    low: float = SEVERITY_LOW,
    high: float = SEVERITY_HIGH,
) -> dict:
    """Summary used by the CLI: area, count, gating, severity and rough extent."""
    m = np.asarray(mask, dtype=bool)
    if line_y is None:
        line_y = m.shape[0] // 2
    area = area_ratio(m)
    extent = largest_extent(m)
    return {
        "area_ratio": area,
        "components": count_components(m),
        "gated": line_gate(m, line_y),
        "severity": severity(area, low, high),
        "gate_row": line_y,
        "length_px": extent[0] if extent else None,
        "width_px": extent[1] if extent else None,
        "extent_is_bounding_box": True,
    }
