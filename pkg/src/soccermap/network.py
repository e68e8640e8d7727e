"""The three-scale fully convolutional surface network and its checkpoints."""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from soccermap import autograd as ag
from soccermap.autograd import GridTensor, Parameter

HEADS = ("sigmoid_probability", "softmax_selection", "linear_value")
SURFACE_KIND = {
    "sigmoid_probability": "probability",
    "softmax_selection": "selection_likelihood",
    "linear_value": "value",
}
SCALES = ("1x", "2x", "4x")  # 1x, 1/2x, 1/4x


@dataclass(frozen=True)
class NetworkSpec:
    grid: tuple[int, int] = (104, 68)
    in_channels: int = 13
    filters: int = 32
    kernel_size: int = 5
    head: str = "sigmoid_probability"
    multi_scale: bool = True  # SC
    learned_upsampling: bool = True  # UP
    fusion_layer: bool = True  # FL
    nonlinear_prediction: bool = True  # NLP
    conv_layers_per_scale: int = 2  # NF
    prediction_filters: int = 32
    upsampling_filters: int = 32

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(int(v) for v in self.grid))
        l, h = self.grid
        if l % 4 or h % 4:
            raise ValueError(f"grid {self.grid} must be divisible by 4 for three scales")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.conv_layers_per_scale < 1:
            raise ValueError("need at least one conv layer per scale")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        d = dict(d)
        d["grid"] = tuple(d["grid"])
        return cls(**d)

    def flags(self) -> dict:
        return {
            "SC": self.multi_scale,
            "UP": self.learned_upsampling,
            "FL": self.fusion_layer,
            "NLP": self.nonlinear_prediction,
            "NF": self.conv_layers_per_scale,
        }


ABLATIONS = {
    "full": {},
    "-UP": {"learned_upsampling": False},
    "-FL": {"fusion_layer": False},
    "-NLP": {"nonlinear_prediction": False},
    "-FL-NLP": {"fusion_layer": False, "nonlinear_prediction": False},
    "single-scale": {"multi_scale": False},
}


def ablation_specs(base: NetworkSpec, names=None) -> dict[str, NetworkSpec]:
    """Variants of ``base`` with components switched off, keyed by name."""
    names = list(ABLATIONS) if names is None else list(names)
    unknown = [n for n in names if n not in ABLATIONS]
    if unknown:
        raise ValueError(f"unknown ablation(s) {unknown}; choose from {list(ABLATIONS)}")
    return {n: replace(base, **ABLATIONS[n]) for n in names}


def layer_shapes(spec: NetworkSpec) -> list[tuple[str, int, int, int]]:
    """Every convolution as ``(name, k, cin, cout)`` in forward order."""
    layers = []
    F, k = spec.filters, spec.kernel_size
    for s, scale in enumerate(SCALES):
        cin = spec.in_channels if s == 0 else F
        for i in range(spec.conv_layers_per_scale):
            layers.append((f"feat_{scale}_{i}", k, cin if i == 0 else F, F))
    pred_scales = SCALES if spec.multi_scale else SCALES[-1:]
    for scale in pred_scales:
        if spec.nonlinear_prediction:
            layers.append((f"pred_{scale}_0", 1, F, spec.prediction_filters))
            layers.append((f"pred_{scale}_1", 1, spec.prediction_filters, 1))
        else:
            layers.append((f"pred_{scale}_0", 1, F, 1))
    for step in ("4to2", "2to1"):
        if spec.learned_upsampling:
            layers.append((f"up_{step}_0", 3, 1, spec.upsampling_filters))
            layers.append((f"up_{step}_1", 3, spec.upsampling_filters, 1))
        if spec.multi_scale and spec.fusion_layer:
            layers.append((f"fuse_{step[-1]}x", 1, 2, 1))
    return layers


def param_count(spec: NetworkSpec) -> int:
    return sum(k * k * cin * cout + cout for _, k, cin, cout in layer_shapes(spec))


def head_layers(spec: NetworkSpec) -> list[str]:
    """Layers re-initialized when the output head is swapped."""
    last_pred = "pred_{}_1" if spec.nonlinear_prediction else "pred_{}_0"
    if spec.multi_scale:
        return ["fuse_1x"] if spec.fusion_layer else [last_pred.format("1x")]
    return ["up_2to1_1"] if spec.learned_upsampling else [last_pred.format("4x")]


@dataclass
class Surface:
    values: np.ndarray  # (l, h)
    kind: str
    snapshot_id: str = ""

    @property
    def shape(self):
        return self.values.shape

    def at(self, cell) -> float:
        return float(self.values[cell[0], cell[1]])


class SoccerMap:
    """Parameters plus the forward graph described by a :class:`NetworkSpec`."""

    def __init__(self, spec: NetworkSpec, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.params: dict[str, tuple[Parameter, Parameter]] = {}
        rng = np.random.default_rng(seed)
        for name, k, cin, cout in layer_shapes(spec):
            self.params[name] = self._init_layer(rng, name, k, cin, cout, dtype)

    @staticmethod
    def _init_layer(rng, name, k, cin, cout, dtype):
        w = ag.truncated_normal(rng, (k, k, cin, cout), ag.he_std(k * k * cin), dtype)
        return Parameter(w, f"{name}.w"), Parameter(np.zeros(cout, dtype=dtype), f"{name}.b")

    # -- parameters -------------------------------------------------------

    def parameters(self) -> list[Parameter]:
        return [p for pair in self.params.values() for p in pair]

    def param_count(self) -> int:
        return sum(p.values.size for p in self.parameters())

    def astype(self, dtype) -> "SoccerMap":
        for p in self.parameters():
            p.astype(dtype)
        return self

    @property
    def dtype(self):
        return next(iter(self.params.values()))[0].dtype

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.values.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = {p.name: p for p in self.parameters()}
        if set(own) != set(state):
            missing = sorted(set(own) ^ set(state))
            raise ValueError(f"parameter names differ: {missing[:5]}")
        for name, arr in state.items():
            if own[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {own[name].shape} vs {arr.shape}")
            own[name].values = np.array(arr, dtype=own[name].dtype)

    def copy(self) -> "SoccerMap":
        other = SoccerMap.__new__(SoccerMap)
        other.spec = self.spec
        other.params = {
            n: (Parameter(w.values.copy(), w.name), Parameter(b.values.copy(), b.name))
            for n, (w, b) in self.params.items()
        }
        return other

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def with_head(self, head: str, seed: int = 0) -> "SoccerMap":
        """Copy with a different output head; trunk weights are kept."""
        m = self.copy()
        m.spec = replace(self.spec, head=head)
        rng = np.random.default_rng(seed)
        for name, k, cin, cout in layer_shapes(m.spec):
            if name in head_layers(m.spec):
                m.params[name] = self._init_layer(rng, name, k, cin, cout, self.dtype)
        return m

    # -- graph --------------------------------------------------------------

    def _conv(self, name, x, act=True):
        w, b = self.params[name]
        y = ag.conv2d(x, w, b)
        return ag.relu(y) if act else y

    def _predict(self, scale, x):
        if self.spec.nonlinear_prediction:
            x = self._conv(f"pred_{scale}_0", x)
            return self._conv(f"pred_{scale}_1", x, act=False)
        return self._conv(f"pred_{scale}_0", x, act=False)

    def _upsample(self, step, x):
        x = ag.upsample2x_nearest(x)
        if self.spec.learned_upsampling:
            x = self._conv(f"up_{step}_0", x)
            x = self._conv(f"up_{step}_1", x, act=False)
        return x

    def _merge(self, scale, a, b):
        if self.spec.fusion_layer:
            return self._conv(f"fuse_{scale}", ag.concat_channels(a, b), act=False)
        return ag.mean2(a, b)

    def logits(self, x: GridTensor) -> GridTensor:
        """Pre-activation surface ``(N, l, h, 1)`` for a batch ``(N, l, h, c)``."""
        spec = self.spec
        if x.values.ndim != 4 or tuple(x.shape[1:]) != (*spec.grid, spec.in_channels):
            raise ag.ContractError(
                f"input {x.shape} does not match (N, {spec.grid[0]}, {spec.grid[1]}, {spec.in_channels})"
            )
        feats = []
        h = x
        for s, scale in enumerate(SCALES):
            if s > 0:
                h = ag.maxpool2x(h)
            for i in range(spec.conv_layers_per_scale):
                h = self._conv(f"feat_{scale}_{i}", h)
            feats.append(h)
        if not spec.multi_scale:
            p = self._predict("4x", feats[2])
            return self._upsample("2to1", self._upsample("4to2", p))
        p1, p2, p4 = (self._predict(scale, f) for scale, f in zip(SCALES, feats))
        m2 = self._merge("2x", p2, self._upsample("4to2", p4))
        return self._merge("1x", p1, self._upsample("2to1", m2))

    def activate(self, z: GridTensor) -> GridTensor:
        if self.spec.head == "sigmoid_probability":
            return ag.sigmoid(z)
        if self.spec.head == "softmax_selection":
            return ag.softmax2d(z)
        return ag.linear_activation(z)

    def __call__(self, x: GridTensor) -> GridTensor:
        return self.activate(self.logits(x))

    def predict(self, batch: np.ndarray) -> np.ndarray:
        """Surfaces ``(N, l, h)`` for a batch of game-state arrays; no tape."""
        x = GridTensor(np.asarray(batch, dtype=self.dtype))
        return self(x).values[..., 0]

    def forward(self, state) -> Surface:
        """Surface for one :class:`~soccermap.channels.GameState` (or ``(l, h, c)`` array)."""
        values = getattr(state, "values", state)
        if values.ndim != 3:
            raise ag.ContractError(f"expected a single (l, h, c) state, got {values.shape}")
        out = self.predict(values[None])[0]
        return Surface(out, SURFACE_KIND[self.spec.head], getattr(state, "snapshot_id", ""))


def assemble(spec: NetworkSpec, seed: int = 0, dtype=np.float32) -> SoccerMap:
    return SoccerMap(spec, seed=seed, dtype=dtype)


# ----------------------------------------------------------------------------
# checkpoint format:
#   magic "SMAP" | u32 version | u32 len + spec json | u32 len + meta json
#   | u32 n_tensors | n * (u16 len + name, u8 ndim, ndim * u32 dims, u64 offset)
#   | u64 data_len | float32 data blob (little-endian)

MAGIC = b"SMAP"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: SoccerMap, path, metadata: dict | None = None) -> None:
    spec_b = json.dumps(model.spec.to_dict(), sort_keys=True).encode()
    meta_b = json.dumps(metadata or {}, sort_keys=True).encode()
    params = model.parameters()
    toc = io.BytesIO()
    blob = io.BytesIO()
    for p in params:
        arr = np.ascontiguousarray(p.values, dtype="<f4")
        name = p.name.encode()
        toc.write(struct.pack("<H", len(name)) + name)
        toc.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        toc.write(struct.pack("<Q", blob.tell()))
        blob.write(arr.tobytes())
    data = blob.getvalue()
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(spec_b)) + spec_b)
        f.write(struct.pack("<I", len(meta_b)) + meta_b)
        f.write(struct.pack("<I", len(params)))
        f.write(toc.getvalue())
        f.write(struct.pack("<Q", len(data)) + data)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint file is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path) -> tuple[NetworkSpec, dict, dict[str, np.ndarray]]:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise CheckpointError("not a SoccerMap checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n,) = r.unpack("<I")
    spec = NetworkSpec.from_dict(json.loads(r.take(n)))
    (n,) = r.unpack("<I")
    meta = json.loads(r.take(n))
    (count,) = r.unpack("<I")
    toc = []
    for _ in range(count):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        (offset,) = r.unpack("<Q")
        toc.append((name, shape, offset))
    (data_len,) = r.unpack("<Q")
    data = r.take(data_len)
    tensors = {}
    for name, shape, offset in toc:
        size = int(np.prod(shape)) * 4
        if offset + size > len(data):
            raise CheckpointError(f"tensor {name} runs past the data block")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=offset).reshape(shape).copy()
    return spec, meta, tensors


def load_checkpoint(path, head: str | None = None, head_swap: bool = False, seed: int = 0) -> SoccerMap:
    """Rebuild a model from ``path``.

    Requesting a ``head`` different from the stored one requires
    ``head_swap=True``; the head layer is then re-initialized.
    """
    spec, meta, tensors = read_checkpoint(path)
    model = SoccerMap(spec, dtype=np.float32)
    model.load_state_dict(tensors)
    model.metadata = meta
    if head is not None and head != spec.head:
        if not head_swap:
            raise CheckpointError(
                f"checkpoint head is {spec.head!r}; pass head_swap=True to load it as {head!r}"
            )
        model = model.with_head(head, seed=seed)
        model.metadata = meta
    return model
