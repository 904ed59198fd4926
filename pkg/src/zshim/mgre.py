"""Line-by-line multi-echo gradient-echo acquisition under a breathing field.

K-space rows are indexed so that row ``j`` holds the phase-encode step
``ky / dky = j - ny/2`` and is acquired at ``t' = j * TR``. The forward
transform is the plain (unnormalized) DFT with centered frequency indices,
i.e. ``fftshift(fft2(img))``; reconstruction is its exact inverse including the
``1 / (nx * ny)`` factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import FieldModel, ScalarField2D

__all__ = [
    "SequenceParams",
    "CorrectionSchedule",
    "KSpaceFrame",
    "ComplexImage2D",
    "phase_encode_time",
    "acquire_kspace",
    "acquire_kspace_oracle",
    "reconstruct",
    "forward_dft",
]

PE_AXIS = 0
READOUT_AXIS = 1


@dataclass(frozen=True)
class SequenceParams:
    """Acquisition timing. ``te_ms`` is the ordered echo-time list."""

    nx: int
    ny: int
    tr_ms: float
    te_ms: tuple[float, ...]
    pe_axis: int = PE_AXIS

    def __post_init__(self):
        te = tuple(float(t) for t in np.atleast_1d(self.te_ms))
        object.__setattr__(self, "te_ms", te)
        if self.nx < 1 or self.ny < 2:
            raise ValueError("matrix size too small")
        if self.ny % 2:
            raise ValueError("number of phase-encode lines must be even")
        if not te or any(t <= 0 for t in te):
            raise ValueError("echo times must be positive")
        if any(b <= a for a, b in zip(te, te[1:])):
            raise ValueError("echo times must be strictly increasing")
        if not self.tr_ms > max(te):
            raise ValueError("TR must exceed the last echo time")
        if self.pe_axis != PE_AXIS:
            raise ValueError("phase-encode rows are fixed to array axis 0")

    @property
    def shape(self) -> tuple[int, int]:
        return self.ny, self.nx


@dataclass(frozen=True)
class CorrectionSchedule:
    """Per-line correction offsets in Hz.

    ``riro_corr_value_hz[j]`` is the realized respiratory term for line ``j``
    (amplitude times the sine already evaluated), not the amplitude.
    """

    static_corr_hz: np.ndarray
    riro_corr_value_hz: np.ndarray

    def __post_init__(self):
        static = np.asarray(self.static_corr_hz, dtype=float).ravel()
        riro = np.asarray(self.riro_corr_value_hz, dtype=float).ravel()
        if static.size == 1 and riro.size > 1:
            static = np.full(riro.size, static[0])
        if static.shape != riro.shape:
            raise ValueError("static and RIRO correction lengths differ")
        if not (np.all(np.isfinite(static)) and np.all(np.isfinite(riro))):
            raise ValueError("correction values must be finite")
        object.__setattr__(self, "static_corr_hz", static)
        object.__setattr__(self, "riro_corr_value_hz", riro)

    def __len__(self):
        return self.riro_corr_value_hz.size

    def total_hz(self) -> np.ndarray:
        return self.static_corr_hz + self.riro_corr_value_hz

    @classmethod
    def zeros(cls, ny):
        return cls(np.zeros(ny), np.zeros(ny))


@dataclass(frozen=True)
class KSpaceFrame:
    echo_index: int
    data: np.ndarray
    te_ms: float = field(default=float("nan"))


@dataclass(frozen=True)
class ComplexImage2D:
    data: np.ndarray
    spacing_mm: tuple[float, float] = (1.0, 1.0)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)


def phase_encode_time(j, tr_ms):
    """Seconds elapsed between the first phase-encode step and step ``j``."""
    return j * tr_ms * 1e-3


def forward_dft(img):
    """Unnormalized 2D DFT with centered frequency indexing."""
    return np.fft.fftshift(np.fft.fft2(img))


def reconstruct(frame, spacing_mm=(1.0, 1.0)):
    """Inverse of :func:`forward_dft`, with the ``1/(nx*ny)`` normalization."""
    data = frame.data if isinstance(frame, KSpaceFrame) else np.asarray(frame)
    if not np.all(np.isfinite(data)):
        raise ValueError("k-space contains non-finite values")
    return ComplexImage2D(np.fft.ifft2(np.fft.ifftshift(data)), spacing_mm)


def _check_inputs(rho, model, seq, corr):
    if rho.shape != seq.shape:
        raise ValueError(f"phantom shape {rho.shape} does not match sequence {seq.shape}")
    if model.riro_max_hz.shape != seq.shape:
        raise ValueError("field model shape does not match sequence")
    if corr is not None and len(corr) != seq.ny:
        raise ValueError(f"correction schedule has {len(corr)} lines, expected {seq.ny}")


def _line_images(rho, model, seq, corr, te_s):
    """Yield ``(j, rho * exp(-i*phase_j))`` for every phase-encode line at one echo."""
    base = rho * np.exp(-2j * np.pi * model.static_hz.values * te_s)
    riro = model.riro_max_hz.values
    corr_hz = corr.total_hz() if corr is not None else np.zeros(seq.ny)
    for j in range(seq.ny):
        t_line = phase_encode_time(j, seq.tr_ms)
        s = np.sin(model.omega * (t_line + te_s))
        yield j, base * np.exp(-2j * np.pi * (riro * s - corr_hz[j]) * te_s)


def acquire_kspace(rho, model, seq, corr=None):
    """Simulate one k-space matrix per echo.

    Each excitation acquires line ``j`` for every echo; the respiratory phase
    uses ``sin(omega * (t'_j + TE))`` and the correction offset for that line
    is subtracted before accrual over ``TE``.

    Parameters
    ----------
    rho : ScalarField2D
        Demodulated transverse magnetization.
    model : FieldModel
    seq : SequenceParams
    corr : CorrectionSchedule, optional
        ``None`` means no correction.

    Returns
    -------
    list of KSpaceFrame
    """
    _check_inputs(rho, model, seq, corr)
    rho_v = rho.values
    frames = []
    for e, te_ms in enumerate(seq.te_ms):
        k = np.empty(seq.shape, dtype=complex)
        for j, img in _line_images(rho_v, model, seq, corr, te_ms * 1e-3):
            k[j] = forward_dft(img)[j]
        frames.append(KSpaceFrame(e, k, te_ms))
    return frames


def acquire_kspace_oracle(rho, model, seq, corr=None):
    """Brute-force reference for :func:`acquire_kspace`.

    Evaluates every k-space sample as an explicit sum over all pixels, with the
    phase model written out independently. Cost is ``O((nx*ny)^2)`` per echo,
    so it is meant for small grids.
    """
    _check_inputs(rho, model, seq, corr)
    ny, nx = seq.shape
    y = np.arange(ny)[:, None]
    x = np.arange(nx)[None, :]
    rho_v = np.asarray(rho.values, dtype=float)
    static = model.static_hz.values
    riro = model.riro_max_hz.values
    w = 2 * np.pi / model.resp_period_s
    frames = []
    for e, te_ms in enumerate(seq.te_ms):
        te = te_ms / 1000.0
        k = np.zeros((ny, nx), dtype=complex)
        for j in range(ny):
            t_prime = j * (seq.tr_ms / 1000.0)
            c = 0.0
            if corr is not None:
                c = corr.static_corr_hz[j] + corr.riro_corr_value_hz[j]
            phase = 2 * np.pi * (static * te + riro * np.sin(w * (t_prime + te)) * te - c * te)
            m = rho_v * np.exp(-1j * phase)
            ky = j - ny // 2
            for col in range(nx):
                kx = col - nx // 2
                kernel = np.exp(-2j * np.pi * (ky * y / ny + kx * x / nx))
                k[j, col] = np.sum(m * kernel)
        frames.append(KSpaceFrame(e, k, te_ms))
    return frames
