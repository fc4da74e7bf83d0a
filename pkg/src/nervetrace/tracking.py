"""Kernelized-correlation-filter tracker for propagating annotator boxes.

Single-channel ridge regression over all cyclic shifts of a padded patch,
solved in the frequency domain. Features are raw grayscale intensities,
mean-subtracted and cosine-windowed; scale is fixed (the contour stage
corrects boundaries, so the box only needs to cover the structure).
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import GeometryError
from .geometry import BoundingBox

# Step peaks below this flag the frame for the low-confidence review queue.
LOW_CONFIDENCE_PEAK = 0.2


@dataclass(frozen=True)
class KcfParams:
    """Tracker knobs; defaults are tuned for grayscale ultrasound clips."""

    padding: float = 1.5
    regularization: float = 1e-4
    kernel_sigma: float = 0.5
    learning_rate: float = 0.02
    output_sigma_factor: float = 0.1
    template_size: int = 96

    def __post_init__(self):
        if self.regularization <= 0:
            raise ValueError("regularization must be > 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.padding < 1:
            raise ValueError("padding ratio must be >= 1")


@dataclass
class KcfModel:
    """Mutable tracker state owned by one annotation session."""

    template: np.ndarray      # windowed feature patch, spatial domain
    template_fft: np.ndarray  # frequency-domain cache of `template`
    alphaf: np.ndarray        # dual ridge-regression coefficients (frequency domain)
    target_fft: np.ndarray    # FFT of the fixed Gaussian regression target
    window: np.ndarray
    box: BoundingBox
    center: tuple[float, float]   # (cy, cx), kept in float to avoid rounding drift
    params: KcfParams
    patch_shape: tuple[int, int]      # (ph, pw) in frame pixels
    template_shape: tuple[int, int]   # (th, tw) after resize
    scale: tuple[float, float]        # template px per frame px, (sy, sx)
    frame_shape: tuple[int, int]


def gaussian_correlation(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian kernel evaluated for all cyclic displacements of `b` against `a`.

    Returns exp(-max(0, |a|^2 + |b|^2 - 2*crosscorr(a, b)) / (sigma^2 * N)),
    where crosscorr[dy, dx] = sum a[y, x] * b[y - dy, x - dx] (cyclic), computed
    via FFT. The zero-shift bin is [0, 0].
    """
    if a.shape != b.shape:
        raise GeometryError(f"patches differ in shape: {a.shape} vs {b.shape}")
    n = a.size
    cross = np.real(np.fft.ifft2(np.fft.fft2(a) * np.conj(np.fft.fft2(b))))
    d = float((a * a).sum() + (b * b).sum()) - 2.0 * cross
    return np.exp(-np.maximum(d, 0.0) / (sigma * sigma * n))


def _to_unit(frame: np.ndarray) -> np.ndarray:
    """Intensities as float64 in [0, 1]; integer frames are scaled by their
    type's maximum, float frames pass through."""
    frame = np.asarray(frame)
    if np.issubdtype(frame.dtype, np.integer):
        return frame.astype(np.float64) / np.iinfo(frame.dtype).max
    return frame.astype(np.float64)


def extract_patch(frame: np.ndarray, center: tuple[float, float],
                  shape: tuple[int, int]) -> np.ndarray:
    """Crop a (ph, pw) patch centered at (cy, cx), replicating edge pixels
    for any coordinates that fall outside the frame."""
    ph, pw = shape
    cy, cx = center
    ys = int(np.floor(cy)) - ph // 2 + np.arange(ph)
    xs = int(np.floor(cx)) - pw // 2 + np.arange(pw)
    ys = np.clip(ys, 0, frame.shape[0] - 1)
    xs = np.clip(xs, 0, frame.shape[1] - 1)
    return frame[np.ix_(ys, xs)]


def _features(frame: np.ndarray, center: tuple[float, float], model_geom) -> np.ndarray:
    patch_shape, template_shape, window = model_geom
    patch = extract_patch(frame, center, patch_shape).astype(np.float64)
    th, tw = template_shape
    if patch.shape != (th, tw):
        patch = cv2.resize(patch, (tw, th), interpolation=cv2.INTER_LINEAR)
    return (patch - patch.mean()) * window


def _regression_target(template_shape, box_template_area, output_sigma_factor):
    th, tw = template_shape
    sigma = output_sigma_factor * np.sqrt(box_template_area)
    dy = np.arange(th, dtype=np.float64)
    dy = np.minimum(dy, th - dy)
    dx = np.arange(tw, dtype=np.float64)
    dx = np.minimum(dx, tw - dx)
    # cyclic Gaussian with its peak in the zero-shift bin [0, 0]
    return np.exp(-0.5 * (dy[:, None] ** 2 + dx[None, :] ** 2) / sigma ** 2)


def kcf_init(frame: np.ndarray, box: BoundingBox, params: KcfParams | None = None) -> KcfModel:
    """Train a fresh tracker on one seed box.

    `frame` must be a 2-D grayscale array; integer dtypes are rescaled to
    [0, 1] internally. The box may straddle the frame edge (the patch
    replicates border pixels) but must intersect the frame.
    """
    params = params or KcfParams()
    frame = _to_unit(frame)
    if frame.ndim != 2:
        raise GeometryError("frame must be a single-channel 2-D array")
    fh, fw = frame.shape
    if not box.intersects(fw, fh):
        raise GeometryError("seed box lies entirely outside the frame")

    ph = max(box.h, int(round(box.h * params.padding)))
    pw = max(box.w, int(round(box.w * params.padding)))
    tscale = params.template_size / max(ph, pw)
    th = max(8, int(round(ph * tscale)))
    tw = max(8, int(round(pw * tscale)))
    sy, sx = th / ph, tw / pw
    window = np.outer(np.hanning(th), np.hanning(tw))

    center = box.center
    x = _features(frame, center, ((ph, pw), (th, tw), window))
    y = _regression_target((th, tw), (box.h * sy) * (box.w * sx), params.output_sigma_factor)
    yf = np.fft.fft2(y)
    kf = np.fft.fft2(gaussian_correlation(x, x, params.kernel_sigma))
    alphaf = yf / (kf + params.regularization)

    return KcfModel(
        template=x,
        template_fft=np.fft.fft2(x),
        alphaf=alphaf,
        target_fft=yf,
        window=window,
        box=box.clamped(fw, fh),
        center=center,
        params=params,
        patch_shape=(ph, pw),
        template_shape=(th, tw),
        scale=(sy, sx),
        frame_shape=(fh, fw),
    )


def _subpixel_offset(before: float, at: float, after: float) -> float:
    """Vertex of the parabola through three neighboring response samples.

    The argmax alone quantizes motion to whole template pixels; with slow
    model updates that rounding error compounds into a lag proportional to
    the target speed, so the peak must be refined below pixel resolution.
    """
    denom = before - 2.0 * at + after
    if denom >= 0.0:  # flat top, no curvature to fit
        return 0.0
    return float(np.clip((before - after) / (2.0 * denom), -0.5, 0.5))


def kcf_step(model: KcfModel, frame: np.ndarray) -> tuple[BoundingBox, float]:
    """Locate the target in the next frame and update the model in place.

    Returns the clamped box at the new location and the response peak, which
    serves as a confidence score (low peaks are reported, never raised).
    """
    frame = _to_unit(frame)
    if frame.shape != model.frame_shape:
        raise GeometryError(
            f"frame shape {frame.shape} differs from init shape {model.frame_shape}"
        )
    p = model.params
    geom = (model.patch_shape, model.template_shape, model.window)
    th, tw = model.template_shape
    fh, fw = model.frame_shape
    sy, sx = model.scale

    # Locate twice: the cosine window damps evidence near the patch rim, which
    # biases the first measurement toward zero shift in proportion to the
    # motion. Re-detecting at the moved position leaves only a small residual
    # shift, where that bias is negligible.
    peak = None
    for _ in range(2):
        z = _features(frame, model.center, geom)
        kf = np.fft.fft2(gaussian_correlation(z, model.template, p.kernel_sigma))
        response = np.real(np.fft.ifft2(kf * model.alphaf))
        if peak is None:
            peak = float(response.max())
        iy, ix = np.unravel_index(int(response.argmax()), response.shape)
        dy = iy + _subpixel_offset(response[(iy - 1) % th, ix], response[iy, ix],
                                   response[(iy + 1) % th, ix])
        dx = ix + _subpixel_offset(response[iy, (ix - 1) % tw], response[iy, ix],
                                   response[iy, (ix + 1) % tw])
        # responses wrap cyclically: shifts past half the template are
        # negative offsets
        if dy > th // 2:
            dy -= th
        if dx > tw // 2:
            dx -= tw

        # the patch was cropped at the floored center, so the measured shift
        # is relative to that anchor, not to the fractional estimate
        cy = np.floor(model.center[0]) + dy / sy
        cx = np.floor(model.center[1]) + dx / sx
        cy = min(max(cy, model.box.h / 2.0), fh - model.box.h / 2.0)
        cx = min(max(cx, model.box.w / 2.0), fw - model.box.w / 2.0)
        model.center = (cy, cx)
    box = BoundingBox(
        int(round(cx - model.box.w / 2.0)),
        int(round(cy - model.box.h / 2.0)),
        model.box.w,
        model.box.h,
    ).clamped(fw, fh)
    model.box = box

    # retrain at the new location and blend with the running model
    x_new = _features(frame, model.center, geom)
    kf_new = np.fft.fft2(gaussian_correlation(x_new, x_new, p.kernel_sigma))
    alphaf_new = model.target_fft / (kf_new + p.regularization)
    eta = p.learning_rate
    model.template = (1.0 - eta) * model.template + eta * x_new
    model.template_fft = np.fft.fft2(model.template)
    model.alphaf = (1.0 - eta) * model.alphaf + eta * alphaf_new

    return box, peak


def self_response(model: KcfModel, frame: np.ndarray) -> np.ndarray:
    """Detection response of the model over its own patch, without updating
    the model. Exposed for confidence baselines and tests."""
    z = _features(_to_unit(frame), model.center,
                  (model.patch_shape, model.template_shape, model.window))
    kf = np.fft.fft2(gaussian_correlation(z, model.template, model.params.kernel_sigma))
    return np.real(np.fft.ifft2(kf * model.alphaf))
