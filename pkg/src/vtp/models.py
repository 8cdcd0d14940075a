"""The learned functions: encoder, decoder, latent transform, action
classifier, and the four evaluation heads (value, action-value, done,
permissibility).

Two layers live here.  The ``*_forward`` functions operate on autodiff
tensors and are what training differentiates through.  :class:`ModelBundle`
wraps them as the public numpy-in/numpy-out operations with contract checks
(shape, range) and inference-mode defaults; that is the surface the planner
and CLI consume.

Hidden states pass through a rescaled sigmoid ``eps + (1-2*eps)*sigmoid(z)``
with ``eps = 1e-5`` so they sit strictly inside (0, 1) even at float32
saturation; long random rollouts can therefore never pin exactly to 0 or 1.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import numerics as N
from .dataset import ROOT_ACTION
from .numerics import ParamStore, Tensor
from .simworld import catalog_for

HIDDEN_SHAPE = (8, 8, 8)
HIDDEN_EPS = 1e-5
OBS_SHAPE = (64, 64, 3)
DROPOUT_RATE = 0.1

NETWORK_NAMES = ("encoder", "decoder", "transform", "classifier",
                 "value", "q", "done", "perm")

CHECKPOINT_MAGIC = b"VTPM"
CHECKPOINT_VERSION = 1

_SCENARIO_IDS = {"blockworld": 0, "nav4": 1}
_SCENARIO_NAMES = {v: k for k, v in _SCENARIO_IDS.items()}


@dataclass(frozen=True)
class DropoutPlan:
    """Counter-based dropout streams: (seed, stream, step, layer) -> mask.

    `stream` separates otherwise-identical passes inside one step, e.g. the
    two weight-shared transform applications of linked training.
    """

    seed: int
    step: int = 0
    rate: float = DROPOUT_RATE
    stream: int = 0

    def rng(self, layer: int) -> np.random.Generator:
        key = np.array([(self.seed & 0xFFFFFFFFFFFF) | ((self.stream & 0xFFFF) << 48),
                        ((layer & 0xFFFFFFFF) << 32) | (self.step & 0xFFFFFFFF)],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def _drop(t: Tensor, train: bool, plan: DropoutPlan | None, layer: int) -> Tensor:
    if not train:
        return t
    if plan is None:
        raise ValueError("training-mode forward needs a DropoutPlan")
    return N.dropout(t, plan.rate, training=True, rng=plan.rng(layer))


def _hidden_squash(z: Tensor) -> Tensor:
    return N.add(N.mul(N.sigmoid(z), 1.0 - 2.0 * HIDDEN_EPS), HIDDEN_EPS)


def _param_rng(seed: int, net: str, name: str) -> np.random.Generator:
    tag = zlib.crc32(f"{net}/{name}".encode())
    return np.random.default_rng(np.random.SeedSequence([seed & (2**63 - 1), tag]))


class _Init:
    def __init__(self, store: ParamStore, seed: int, net: str):
        self.store, self.seed, self.net = store, seed, net

    def conv(self, name: str, shape) -> None:
        rng = _param_rng(self.seed, self.net, name)
        self.store.add(name, N.truncated_normal(rng, shape, std=0.05))

    def bias(self, name: str, width: int) -> None:
        self.store.add(name, np.zeros(width, dtype=N.default_dtype()))

    def dense(self, name: str, shape) -> None:
        self.conv(name, shape)


def one_hot(action, count: int, root_slot: bool = False) -> np.ndarray:
    """One-hot encode an action id (or batch); ROOT maps to the extra slot."""
    width = count + 1 if root_slot else count
    a = np.atleast_1d(np.asarray(action, dtype=np.int64)).copy()
    if root_slot:
        a[a == ROOT_ACTION] = count
    if (a < 0).any() or (a >= width).any():
        raise ValueError(f"action id out of range for one-hot of width {width}")
    out = np.zeros((len(a), width), dtype=N.default_dtype())
    out[np.arange(len(a)), a] = 1.0
    if np.isscalar(action) or np.asarray(action).ndim == 0:
        return out[0]
    return out


# --------------------------------------------------------------------------
# parameter construction


def init_encoder(seed: int) -> ParamStore:
    s = ParamStore()
    i = _Init(s, seed, "encoder")
    i.conv("conv1", (7, 7, 3, 32))
    i.conv("conv2", (5, 5, 32, 32))
    i.conv("conv3", (5, 5, 32, 32))
    i.conv("conv4", (5, 5, 32, 64))
    i.conv("proj_w", (1, 1, 64, HIDDEN_SHAPE[2]))
    i.bias("proj_b", HIDDEN_SHAPE[2])
    return s


def init_decoder(seed: int) -> ParamStore:
    s = ParamStore()
    i = _Init(s, seed, "decoder")
    i.conv("proj_in", (1, 1, HIDDEN_SHAPE[2], 64))
    i.conv("tconv1", (5, 5, 32, 64))
    i.conv("tconv2", (5, 5, 32, 32))
    i.conv("tconv3", (5, 5, 32, 32))
    i.conv("out_w", (1, 1, 32, 3))
    i.bias("out_b", 3)
    return s


def init_transform(seed: int, action_count: int) -> ParamStore:
    s = ParamStore()
    i = _Init(s, seed, "transform")
    i.conv("conv1", (5, 5, 2 * HIDDEN_SHAPE[2], 64))
    i.conv("conv2", (5, 5, 64, 64))
    i.dense("fc1_w", (128 + action_count, 256))
    i.bias("fc1_b", 256)
    i.dense("fc2_w", (256, 512))
    i.bias("fc2_b", 512)
    i.conv("conv3", (5, 5, 64 + HIDDEN_SHAPE[2], 64))
    i.conv("proj_w", (1, 1, 64, HIDDEN_SHAPE[2]))
    i.bias("proj_b", HIDDEN_SHAPE[2])
    return s


def init_classifier(seed: int, action_count: int) -> ParamStore:
    s = ParamStore()
    i = _Init(s, seed, "classifier")
    i.conv("conv1", (7, 7, 3, 32))
    i.conv("conv2", (5, 5, 32, 64))
    i.conv("conv3", (5, 5, 64, 64))
    i.conv("conv4", (5, 5, 64, 128))
    i.dense("fc1_w", (4 * 4 * 128, 128))
    i.bias("fc1_b", 128)
    i.dense("out_w", (128, action_count))
    i.bias("out_b", action_count)
    return s


def init_value(seed: int) -> ParamStore:
    s = ParamStore()
    i = _Init(s, seed, "value")
    i.conv("conv1", (5, 5, HIDDEN_SHAPE[2], 32))
    i.bias("conv1_b", 32)
    i.conv("conv2", (5, 5, 32, 64))
    i.bias("conv2_b", 64)
    i.conv("conv3", (5, 5, 64, 128))
    i.bias("conv3_b", 128)
    i.dense("fc1_w", (128, 128))
    i.bias("fc1_b", 128)
    i.dense("out_w", (128, 1))
    i.bias("out_b", 1)
    return s


def init_pair_head(seed: int, net: str, action_count: int, out_dim: int) -> ParamStore:
    """Trunk shared by the action-value, done and permissibility heads."""
    s = ParamStore()
    i = _Init(s, seed, net)
    i.conv("g0_w", (1, 1, HIDDEN_SHAPE[2], 16))
    i.bias("g0_b", 16)
    i.conv("g_w", (1, 1, HIDDEN_SHAPE[2], 16))
    i.bias("g_b", 16)
    i.conv("conv1", (5, 5, 32 + action_count + 1, 64))
    i.bias("conv1_b", 64)
    i.conv("conv2", (5, 5, 64, 64))
    i.bias("conv2_b", 64)
    i.dense("fc1_w", (2 * 2 * 64, 256))
    i.bias("fc1_b", 256)
    i.dense("fc2_w", (256, 128))
    i.bias("fc2_b", 128)
    i.dense("out_w", (128, out_dim))
    i.bias("out_b", out_dim)
    return s


# --------------------------------------------------------------------------
# forward passes (autodiff level)


def _block(x: Tensor, w: Tensor, stride: int, train: bool,
           plan: DropoutPlan | None, layer: int, use_norm: bool = True) -> Tensor:
    y = N.conv2d(x, w, stride=stride)
    if use_norm:
        y = N.instance_norm(y)
    y = N.relu(y)
    return _drop(y, train, plan, layer)


def encoder_forward(p: ParamStore, x, train: bool = False,
                    plan: DropoutPlan | None = None,
                    use_norm: bool = True) -> Tensor:
    """Observation -> hidden state.

    `use_norm=False` runs the same weights without the instance norms; it
    exists only for the unresolved question of whether the evaluation heads
    should consume normalization-free encodings (off by default, see
    TrainConfig.values_use_raw_encoder).
    """
    x = N.as_tensor(x)
    y = _block(x, p["conv1"], 1, train, plan, 0x10, use_norm)
    y = _block(y, p["conv2"], 2, train, plan, 0x11, use_norm)
    y = _block(y, p["conv3"], 2, train, plan, 0x12, use_norm)
    y = _block(y, p["conv4"], 2, train, plan, 0x13, use_norm)
    z = N.add(N.conv2d(y, p["proj_w"], stride=1), p["proj_b"])
    return _hidden_squash(z)


def decoder_forward(p: ParamStore, h, train: bool = False,
                    plan: DropoutPlan | None = None) -> Tensor:
    h = N.as_tensor(h)
    y = N.conv2d(h, p["proj_in"], stride=1)
    y = _drop(N.relu(N.instance_norm(y)), train, plan, 0x20)
    y = N.transpose_conv2d(y, p["tconv1"], stride=2)
    y = _drop(N.relu(N.instance_norm(y)), train, plan, 0x21)
    y = N.transpose_conv2d(y, p["tconv2"], stride=2)
    y = _drop(N.relu(N.instance_norm(y)), train, plan, 0x22)
    y = N.transpose_conv2d(y, p["tconv3"], stride=2)
    y = _drop(N.relu(N.instance_norm(y)), train, plan, 0x23)
    z = N.add(N.conv2d(y, p["out_w"], stride=1), p["out_b"])
    return N.sigmoid(z)


def transform_forward(p: ParamStore, h0, h, a_onehot, train: bool = False,
                      plan: DropoutPlan | None = None) -> Tensor:
    h0, h = N.as_tensor(h0), N.as_tensor(h)
    a_onehot = N.as_tensor(a_onehot)
    u = N.concat([h0, h], axis=-1)
    u = _block(u, p["conv1"], 1, train, plan, 0x30)
    skip = _block(u, p["conv2"], 1, train, plan, 0x31)
    kp = N.spatial_soft_argmax(skip)
    z = N.concat([kp, a_onehot], axis=-1)
    z = N.relu(N.dense(z, p["fc1_w"], p["fc1_b"]))
    z = N.relu(N.dense(z, p["fc2_w"], p["fc2_b"]))
    if z.ndim == 1:
        z = N.reshape(z, HIDDEN_SHAPE)
    else:
        z = N.reshape(z, (z.shape[0],) + HIDDEN_SHAPE)
    m = N.concat([z, skip], axis=-1)
    m = _block(m, p["conv3"], 1, train, plan, 0x32)
    out = N.add(N.conv2d(m, p["proj_w"], stride=1), p["proj_b"])
    return _hidden_squash(out)


def classifier_forward(p: ParamStore, x, train: bool = False,
                       plan: DropoutPlan | None = None) -> Tensor:
    x = N.as_tensor(x)
    y = _block(x, p["conv1"], 2, train, plan, 0x40)
    y = _block(y, p["conv2"], 2, train, plan, 0x41)
    y = _block(y, p["conv3"], 2, train, plan, 0x42)
    y = _block(y, p["conv4"], 2, train, plan, 0x43)
    flat = 4 * 4 * 128
    y = N.reshape(y, (flat,) if y.ndim == 3 else (y.shape[0], flat))
    y = N.relu(N.dense(y, p["fc1_w"], p["fc1_b"]))
    return N.dense(y, p["out_w"], p["out_b"])


def value_forward(p: ParamStore, h) -> Tensor:
    """Success-probability logit from a hidden state (no normalization)."""
    h = N.as_tensor(h)
    y = N.relu(N.add(N.conv2d(h, p["conv1"], stride=2), p["conv1_b"]))
    y = N.relu(N.add(N.conv2d(y, p["conv2"], stride=2), p["conv2_b"]))
    y = N.relu(N.add(N.conv2d(y, p["conv3"], stride=2), p["conv3_b"]))
    y = N.reshape(y, (128,) if y.ndim == 3 else (y.shape[0], 128))
    y = N.relu(N.dense(y, p["fc1_w"], p["fc1_b"]))
    return N.dense(y, p["out_w"], p["out_b"])


def pair_head_forward(p: ParamStore, h0, h, a_onehot_root) -> Tensor:
    """Shared trunk of Q / done / permissibility: two 1x1 convs then fusion."""
    h0, h = N.as_tensor(h0), N.as_tensor(h)
    g0 = N.relu(N.add(N.conv2d(h0, p["g0_w"], stride=1), p["g0_b"]))
    g = N.relu(N.add(N.conv2d(h, p["g_w"], stride=1), p["g_b"]))
    a = np.asarray(a_onehot_root, dtype=g.data.dtype)
    if a.ndim == 1:
        tile = np.broadcast_to(a, HIDDEN_SHAPE[:2] + a.shape).copy()
    else:
        tile = np.broadcast_to(a[:, None, None, :],
                               (a.shape[0],) + HIDDEN_SHAPE[:2] + (a.shape[1],)).copy()
    u = N.concat([g0, g, Tensor(tile)], axis=-1)
    u = N.relu(N.add(N.conv2d(u, p["conv1"], stride=2), p["conv1_b"]))
    u = N.relu(N.add(N.conv2d(u, p["conv2"], stride=2), p["conv2_b"]))
    flat = 2 * 2 * 64
    u = N.reshape(u, (flat,) if u.ndim == 3 else (u.shape[0], flat))
    u = N.relu(N.dense(u, p["fc1_w"], p["fc1_b"]))
    u = N.relu(N.dense(u, p["fc2_w"], p["fc2_b"]))
    return N.dense(u, p["out_w"], p["out_b"])


# --------------------------------------------------------------------------
# contracts


def check_observation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.shape != OBS_SHAPE:
        raise ValueError(f"observation must be {OBS_SHAPE}, got {x.shape}")
    return np.clip(x, 0.0, 1.0)


def check_hidden(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float32)
    if h.shape != HIDDEN_SHAPE:
        raise ValueError(f"hidden state must be {HIDDEN_SHAPE}, got {h.shape}")
    if not ((h > 0.0).all() and (h < 1.0).all()):
        raise ValueError("hidden state values must lie strictly in (0, 1)")
    return h


# --------------------------------------------------------------------------
# bundle


class ModelBundle:
    """All eight networks plus scenario metadata; the planner's world model."""

    def __init__(self, scenario: str, seed: int = 0, stores: dict | None = None):
        self.scenario = scenario
        self.catalog = catalog_for(scenario)
        self.action_count = self.catalog.action_count
        self.seed = seed
        self.trained: set[str] = set()  # completed stages; persisted by the CLI
        a = self.action_count
        if stores is not None:
            self.stores = stores
        else:
            self.stores = {
                "encoder": init_encoder(seed),
                "decoder": init_decoder(seed + 1),
                "transform": init_transform(seed + 2, a),
                "classifier": init_classifier(seed + 3, a),
                "value": init_value(seed + 4),
                "q": init_pair_head(seed + 5, "q", a, a),
                "done": init_pair_head(seed + 6, "done", a, 1),
                "perm": init_pair_head(seed + 7, "perm", a, a),
            }

    def __getitem__(self, name: str) -> ParamStore:
        return self.stores[name]

    def _check_action(self, a: int, allow_root: bool = False) -> int:
        a = int(a)
        if a == ROOT_ACTION:
            if allow_root:
                return a
            raise ValueError("this operation does not accept the ROOT action")
        if not 0 <= a < self.action_count:
            raise ValueError(f"action id {a} outside [0, {self.action_count})")
        return a

    # public single-sample operations ------------------------------------

    def encode(self, x, train: bool = False, plan: DropoutPlan | None = None) -> np.ndarray:
        x = check_observation(x)
        with N.no_grad():
            h = encoder_forward(self.stores["encoder"], x, train, plan).data
        return check_hidden(h)

    def decode(self, h, train: bool = False, plan: DropoutPlan | None = None) -> np.ndarray:
        h = check_hidden(h)
        with N.no_grad():
            x = decoder_forward(self.stores["decoder"], h, train, plan).data
        return check_observation(x)

    def transform(self, h0, h, a: int, train: bool = False,
                  plan: DropoutPlan | None = None) -> np.ndarray:
        a = self._check_action(a, allow_root=False)
        h0, h = check_hidden(h0), check_hidden(h)
        vec = one_hot(a, self.action_count)
        with N.no_grad():
            out = transform_forward(self.stores["transform"], h0, h, vec,
                                    train, plan).data
        return check_hidden(out)

    def value(self, h) -> float:
        h = check_hidden(h)
        with N.no_grad():
            z = value_forward(self.stores["value"], h).data
        return float(N.sigmoid_np(z)[0])

    def q_vector(self, h0, h, a: int) -> np.ndarray:
        a = self._check_action(a, allow_root=True)
        h0, h = check_hidden(h0), check_hidden(h)
        vec = one_hot(a, self.action_count, root_slot=True)
        with N.no_grad():
            z = pair_head_forward(self.stores["q"], h0, h, vec).data
        return N.sigmoid_np(z)

    def done_prob(self, h0, h, a: int) -> float:
        a = self._check_action(a, allow_root=False)
        h0, h = check_hidden(h0), check_hidden(h)
        vec = one_hot(a, self.action_count, root_slot=True)
        with N.no_grad():
            z = pair_head_forward(self.stores["done"], h0, h, vec).data
        return float(N.sigmoid_np(z)[0])

    def perm_vector(self, h0, h, a: int) -> np.ndarray:
        a = self._check_action(a, allow_root=True)
        h0, h = check_hidden(h0), check_hidden(h)
        vec = one_hot(a, self.action_count, root_slot=True)
        with N.no_grad():
            z = pair_head_forward(self.stores["perm"], h0, h, vec).data
        return N.sigmoid_np(z)

    def classify_action(self, x) -> np.ndarray:
        x = check_observation(x)
        with N.no_grad():
            z = classifier_forward(self.stores["classifier"], x).data
        return z

    def dream(self, h0, steps: int, rng: np.random.Generator) -> list[np.ndarray]:
        """Random-action latent rollout; returns `steps` successive states."""
        if steps < 1:
            raise ValueError("dream needs at least one step")
        h0 = check_hidden(h0)
        h = h0
        out = []
        for _ in range(steps):
            a = int(rng.integers(0, self.action_count))
            h = self.transform(h0, h, a)
            out.append(h)
        return out

    # persistence ----------------------------------------------------------

    def save(self, path) -> None:
        save_bundle(self, path)


def save_bundle(bundle: ModelBundle, path) -> None:
    hd = HIDDEN_SHAPE
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIBBIII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                            _SCENARIO_IDS[bundle.scenario], bundle.action_count,
                            hd[0], hd[1], hd[2]))
        f.write(struct.pack("<I", len(bundle.stores)))
        for net, store in bundle.stores.items():
            nb = net.encode()
            f.write(struct.pack("<H", len(nb)) + nb)
            f.write(struct.pack("<I", len(store.params)))
            for name, t in store.params.items():
                pb = name.encode()
                arr = np.ascontiguousarray(t.data, dtype=np.float32)
                f.write(struct.pack("<H", len(pb)) + pb)
                f.write(struct.pack("<B", arr.ndim))
                f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                f.write(arr.tobytes())


class CheckpointFormatError(Exception):
    pass


def load_bundle(path) -> ModelBundle:
    with open(path, "rb") as f:
        blob = f.read()
    head = struct.Struct("<4sIBBIII")
    if len(blob) < head.size:
        raise CheckpointFormatError(f"{path}: truncated header")
    magic, version, scen, a_count, h0, h1, h2 = head.unpack_from(blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    if (h0, h1, h2) != HIDDEN_SHAPE:
        raise CheckpointFormatError(f"{path}: unexpected hidden dims {(h0, h1, h2)}")
    off = head.size
    (n_nets,) = struct.unpack_from("<I", blob, off)
    off += 4
    stores: dict[str, ParamStore] = {}
    try:
        for _ in range(n_nets):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            net = blob[off:off + nlen].decode()
            off += nlen
            (n_params,) = struct.unpack_from("<I", blob, off)
            off += 4
            store = ParamStore()
            for _ in range(n_params):
                (plen,) = struct.unpack_from("<H", blob, off)
                off += 2
                pname = blob[off:off + plen].decode()
                off += plen
                (ndim,) = struct.unpack_from("<B", blob, off)
                off += 1
                shape = struct.unpack_from(f"<{ndim}I", blob, off)
                off += 4 * ndim
                count = int(np.prod(shape))
                arr = np.frombuffer(blob, dtype="<f4", count=count,
                                    offset=off).reshape(shape).copy()
                off += 4 * count
                store.add(pname, arr)
            stores[net] = store
    except struct.error as e:
        raise CheckpointFormatError(f"{path}: truncated body ({e})") from e
    scenario = _SCENARIO_NAMES.get(scen)
    if scenario is None:
        raise CheckpointFormatError(f"{path}: unknown scenario id {scen}")
    bundle = ModelBundle(scenario, stores=stores)
    if bundle.action_count != a_count:
        raise CheckpointFormatError(
            f"{path}: action count {a_count} does not match scenario {scenario}")
    return bundle
