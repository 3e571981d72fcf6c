"""Neural-network operations on rank-5 (B, T, H, W, C) tensors.

Temporal padding policies (attached to the kernel, not passed per call):

* ``reflect-first-frame`` — frame 0 is replicated backward in time by (k_t - 1)
  positions, never forward. Under the resulting last-tap alignment, output frame
  i depends only on input frames <= i (times stride), and a kernel whose only
  nonzero temporal tap is the last one behaves exactly like a per-frame 2D conv.
* ``zero`` — same (k_t - 1) leading positions, filled with zeros.
* ``none`` — no temporal padding; the time axis shrinks.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor, no_grad
from .errors import ContractError, NumericError, ShapeError

REFLECT_FIRST = "reflect-first-frame"
ZERO_PAD = "zero"
NO_PAD = "none"

_TEMPORAL_POLICIES = (REFLECT_FIRST, ZERO_PAD, NO_PAD)


@dataclass
class ConvKernel3D:
    """Weights (out_ch, in_ch, k_t, k_h, k_w), bias (out_ch,), per-axis strides,
    symmetric spatial zero-pad amounts and a temporal padding policy.

    A kernel with k_t == 1 and s_t == 1 is semantically a 2D convolution applied
    per frame.
    """

    weight: Tensor
    bias: Tensor
    stride: tuple[int, int, int] = (1, 1, 1)
    spatial_pad: tuple[int, int] = (0, 0)
    temporal_pad: str = REFLECT_FIRST

    def __post_init__(self):
        if self.weight.data.ndim != 5:
            raise ShapeError(f"conv weight must be rank 5, got {self.weight.shape}")
        if self.bias.data.shape != (self.weight.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match out_ch {self.weight.shape[0]}")
        if self.temporal_pad not in _TEMPORAL_POLICIES:
            raise ContractError(f"unknown temporal padding policy {self.temporal_pad!r}")


def _pad_input(x: np.ndarray, k_t: int, policy: str, ph: int, pw: int) -> np.ndarray:
    pads = [(0, 0), (0, 0), (ph, ph), (pw, pw), (0, 0)]
    if k_t > 1 and policy != NO_PAD:
        if policy == REFLECT_FIRST:
            front = np.repeat(x[:, :1], k_t - 1, axis=1)
            x = np.concatenate([front, x], axis=1)
        else:
            pads[1] = (k_t - 1, 0)
    return np.pad(x, pads) if any(p != (0, 0) for p in pads) else x


def conv3d(x: Tensor, kernel: ConvKernel3D) -> Tensor:
    """Strided 3D convolution, differentiable w.r.t. input, weights and bias.

    Output extents follow the standard strided-convolution formula per axis
    (floor semantics); the temporal extent accounts for the padding policy.
    """
    if x.data.ndim != 5:
        raise ShapeError(f"conv3d input must be rank 5 (B,T,H,W,C), got {x.shape}")
    w, b = kernel.weight, kernel.bias
    out_ch, in_ch, k_t, k_h, k_w = w.shape
    B, T, H, W, C = x.shape
    if C != in_ch:
        raise ShapeError(f"input channels {C} != kernel in_ch {in_ch}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("non-finite conv3d input")
    s_t, s_h, s_w = kernel.stride
    ph, pw = kernel.spatial_pad

    xp = _pad_input(x.data, k_t, kernel.temporal_pad, ph, pw)
    Tp, Hp, Wp = xp.shape[1:4]
    if Tp < k_t or Hp < k_h or Wp < k_w:
        raise ShapeError(
            f"padded extents ({Tp},{Hp},{Wp}) smaller than kernel ({k_t},{k_h},{k_w})"
        )
    To = (Tp - k_t) // s_t + 1
    Ho = (Hp - k_h) // s_h + 1
    Wo = (Wp - k_w) // s_w + 1

    # (B, To, Ho, Wo, C, k_t, k_h, k_w) view. The contraction runs per output
    # frame so a frame's arithmetic is bit-identical no matter how long the
    # surrounding clip is (the tiled codec's seam contract relies on this).
    win = sliding_window_view(xp, (k_t, k_h, k_w), axis=(1, 2, 3))[:, ::s_t, ::s_h, ::s_w]
    out = np.empty((B, To, Ho, Wo, out_ch), dtype=xp.dtype)
    for t in range(To):
        out[:, t] = np.tensordot(win[:, t], w.data, axes=([3, 4, 5, 6], [1, 2, 3, 4]))
    out += b.data

    req = x.requires_grad or w.requires_grad or b.requires_grad

    def backward(g):
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 1, 2, 3)))
        if w.requires_grad:
            gw = np.tensordot(win, g, axes=([0, 1, 2, 3], [0, 1, 2, 3]))
            w._accumulate(np.ascontiguousarray(gw.transpose(4, 0, 1, 2, 3)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for it in range(k_t):
                for ih in range(k_h):
                    for iw in range(k_w):
                        contrib = np.tensordot(g, w.data[:, :, it, ih, iw], axes=([4], [0]))
                        gxp[:, it:it + To * s_t:s_t, ih:ih + Ho * s_h:s_h, iw:iw + Wo * s_w:s_w] += contrib
            if ph or pw:
                gxp = gxp[:, :, ph:ph + H, pw:pw + W]
            if k_t > 1 and kernel.temporal_pad == REFLECT_FIRST:
                gx = gxp[:, k_t - 1:].copy()
                gx[:, 0] += gxp[:, :k_t - 1].sum(axis=1)
            elif k_t > 1 and kernel.temporal_pad == ZERO_PAD:
                gx = gxp[:, k_t - 1:]
            else:
                gx = gxp
            x._accumulate(np.ascontiguousarray(gx))

    return Tensor(out, requires_grad=req, _parents=(x, w, b), _backward=backward)


def group_norm(x: Tensor, groups: int, gain: Tensor, shift: Tensor, eps: float = 1e-6) -> Tensor:
    """Group normalization with statistics per (batch, time, group) over
    (channels-in-group, H, W) — per temporal index, never across time."""
    if x.data.ndim != 5:
        raise ShapeError(f"group_norm input must be rank 5, got {x.shape}")
    B, T, H, W, C = x.shape
    if C % groups:
        raise ContractError(f"channels {C} not divisible by groups {groups}")
    if eps <= 0:
        raise ContractError("eps must be > 0")
    if gain.data.shape != (C,) or shift.data.shape != (C,):
        raise ShapeError("gain/shift must be per-channel vectors")
    cg = C // groups

    xg = x.data.reshape(B, T, H, W, groups, cg)
    mean = xg.mean(axis=(2, 3, 5), keepdims=True)
    var = ((xg - mean) ** 2).mean(axis=(2, 3, 5), keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = (xg - mean) * inv
    xhat_flat = xhat.reshape(B, T, H, W, C)
    out = xhat_flat * gain.data + shift.data

    req = x.requires_grad or gain.requires_grad or shift.requires_grad

    def backward(g):
        if shift.requires_grad:
            shift._accumulate(g.sum(axis=(0, 1, 2, 3)))
        if gain.requires_grad:
            gain._accumulate((g * xhat_flat).sum(axis=(0, 1, 2, 3)))
        if x.requires_grad:
            gh = (g * gain.data).reshape(B, T, H, W, groups, cg)
            m1 = gh.mean(axis=(2, 3, 5), keepdims=True)
            m2 = (gh * xhat).mean(axis=(2, 3, 5), keepdims=True)
            gx = inv * (gh - m1 - xhat * m2)
            x._accumulate(np.ascontiguousarray(gx.reshape(B, T, H, W, C)))

    return Tensor(out, requires_grad=req, _parents=(x, gain, shift), _backward=backward)


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x spatial upsampling (H and W only)."""
    B, T, H, W, C = x.shape
    y = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        x._accumulate(np.ascontiguousarray(g.reshape(B, T, H, 2, W, 2, C).sum(axis=(3, 5))))

    return Tensor(y, requires_grad=x.requires_grad, _parents=(x,), _backward=backward)


def temporal_expand(x: Tensor, factor: int) -> Tensor:
    """Channel-to-time reshape behind temporal upsampling.

    Input (B, n, h, w, factor*C) carries ``factor`` channel groups per frame.
    Frame j >= 1 expands to output frames j*factor-(factor-1) .. j*factor
    (group order), the first frame contributes exactly one frame (its last
    group), yielding 1 + (n-1)*factor output frames.
    """
    B, n, h, w, sc = x.shape
    if sc % factor:
        raise ShapeError(f"channel count {sc} not divisible by expansion factor {factor}")
    C = sc // factor
    xr = x.data.reshape(B, n, h, w, factor, C)
    head = xr[:, :1, :, :, factor - 1, :]
    body = xr[:, 1:].transpose(0, 1, 4, 2, 3, 5).reshape(B, (n - 1) * factor, h, w, C)
    out = np.concatenate([head, body], axis=1)

    def backward(g):
        gr = np.zeros_like(xr)
        gr[:, 0, :, :, factor - 1, :] = g[:, 0]
        gr[:, 1:] = g[:, 1:].reshape(B, n - 1, factor, h, w, C).transpose(0, 1, 3, 4, 2, 5)
        x._accumulate(np.ascontiguousarray(gr.reshape(B, n, h, w, sc)))

    return Tensor(out, requires_grad=x.requires_grad, _parents=(x,), _backward=backward)


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_input: list[float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def grad_check(fn, inputs: list[Tensor], tolerance: float = 1e-4, step: float = 1e-5,
               sample: int | None = None, seed: int = 0) -> GradCheckReport:
    """Compare reverse-mode gradients of a scalar-valued closure against central
    finite differences.

    Inputs must be float64. The relative error per input is
    ``||analytic - numeric||_inf / (1 + max(||analytic||_inf, ||numeric||_inf))``;
    the report carries the max over inputs. ``sample`` limits the number of
    finite-difference coordinates per input (all coordinates when None).
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise ContractError("grad_check requires float64 inputs")
        t.requires_grad = True
        t.zero_grad()

    out = fn(*inputs)
    if out.data.size != 1:
        raise ShapeError("grad_check closure must be scalar-valued")
    if not np.isfinite(out.data):
        raise NumericError("non-finite value from grad_check closure")
    out.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    rng = np.random.default_rng(seed)
    errs = []
    for i, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if sample is None or sample >= n else rng.choice(n, size=sample, replace=False)
        a = analytic[i].reshape(-1)
        num = np.zeros(len(coords))
        for j, k in enumerate(coords):
            orig = flat[k]
            with no_grad():
                flat[k] = orig + step
                f_plus = float(fn(*inputs).data)
                flat[k] = orig - step
                f_minus = float(fn(*inputs).data)
                flat[k] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(f"non-finite closure value while perturbing input {i}")
            num[j] = (f_plus - f_minus) / (2.0 * step)
        a_sel = a[coords]
        scale = 1.0 + max(np.abs(a_sel).max(initial=0.0), np.abs(num).max(initial=0.0))
        errs.append(float(np.abs(a_sel - num).max(initial=0.0) / scale))
    return GradCheckReport(max_rel_err=max(errs), per_input=errs, tolerance=tolerance)
