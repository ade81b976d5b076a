"""The end-to-end next-activity model.

Pipeline per prefix: embed the node-feature snapshots, run them with the
normalized place-graph adjacency through a two-cell graph-convolutional GRU
stack, reduce each step with a coordinate-wise max readout, feed the readout
sequence concatenated with the embedded event attributes to a stacked LSTM,
and classify concat(last readout, last LSTM state) with a softmax over the
activity vocabulary plus the end-of-case class.

Parameters live in a flat name -> ndarray dict (lexicographic order is the
serialization order); gradients are exact and hand-written, see layers.py.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import CompatibilityError
from . import layers

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters (defaults follow the evaluated setup)."""

    embed_dim: int = 32
    grnn_hidden: tuple[int, int] = (256, 256)
    lstm_hidden: int = 256
    lstm_layers: int = 2
    dtype: str = "float32"

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        obj = dict(obj)
        if "grnn_hidden" in obj:
            obj["grnn_hidden"] = tuple(obj["grnn_hidden"])
        return cls(**obj)


@dataclass(frozen=True)
class DataDims:
    """Dataset-dependent sizes the parameter shapes hang off."""

    n_places: int
    slot_cols: int                    # C: node feature columns before the token column
    source_vocab_size: int            # activities + UNK/PAD + silent + repair
    attr_vocab_sizes: tuple[int, ...] # one per attribute-matrix column
    n_classes: int

    @classmethod
    def from_dict(cls, obj: dict) -> "DataDims":
        obj = dict(obj)
        obj["attr_vocab_sizes"] = tuple(obj["attr_vocab_sizes"])
        return cls(**obj)


def parameter_shapes(config: ModelConfig, dims: DataDims) -> dict[str, tuple[tuple[int, ...], int]]:
    """name -> (shape, fan_in); fan_in 0 marks a zero-initialized bias."""
    d = config.embed_dim
    h1, h2 = config.grnn_hidden
    hl = config.lstm_hidden
    node_in = (dims.slot_cols + 1) * d
    shapes: dict[str, tuple[tuple[int, ...], int]] = {
        "emb_slot": ((dims.source_vocab_size, d), d),
        "emb_place": ((dims.n_places + 1, d), d),
    }
    for j, size in enumerate(dims.attr_vocab_sizes):
        shapes[f"emb_attr{j}"] = ((size, d), d)
    for c, (f_in, h) in enumerate(((node_in, h1), (h1, h2))):
        for w in ("Wxz", "Wxr", "Wxh"):
            shapes[f"grnn{c}_{w}"] = ((f_in, h), f_in)
        for w in ("Whz", "Whr", "Whh"):
            shapes[f"grnn{c}_{w}"] = ((h, h), h)
        for b in ("bz", "br", "bh"):
            shapes[f"grnn{c}_{b}"] = ((h,), 0)
    lstm_in = len(dims.attr_vocab_sizes) * d + h2
    for l in range(config.lstm_layers):
        f_in = lstm_in if l == 0 else hl
        shapes[f"lstm{l}_Wx"] = ((f_in, 4 * hl), f_in)
        shapes[f"lstm{l}_Wh"] = ((hl, 4 * hl), hl)
        shapes[f"lstm{l}_b"] = ((4 * hl,), 0)
    shapes["cls_W"] = ((h2 + hl, dims.n_classes), h2 + hl)
    shapes["cls_b"] = ((dims.n_classes,), 0)
    return shapes


class NextActivityModel:
    """Owns the parameter dict, the normalized adjacency and the forward/backward."""

    def __init__(self, config: ModelConfig, dims: DataDims, a_hat: np.ndarray,
                 params: dict[str, np.ndarray], sig: str = ""):
        self.config = config
        self.dims = dims
        self.dtype = np.dtype(config.dtype)
        self.a_hat = np.ascontiguousarray(a_hat, dtype=self.dtype)
        self.a_hat_t = np.ascontiguousarray(self.a_hat.T)
        self.params = params
        self.sig = sig

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, config: ModelConfig, dims: DataDims, a_hat: np.ndarray,
                   seed: int, sig: str = "") -> "NextActivityModel":
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases, deterministic under seed."""
        shapes = parameter_shapes(config, dims)
        rng = np.random.default_rng(seed)
        dtype = np.dtype(config.dtype)
        params: dict[str, np.ndarray] = {}
        for name in sorted(shapes):
            shape, fan_in = shapes[name]
            if fan_in == 0:
                params[name] = np.zeros(shape, dtype=dtype)
            else:
                params[name] = layers.init_uniform(rng, shape, fan_in, dtype)
        return cls(config, dims, a_hat, params, sig)

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(p) for name, p in self.params.items()}

    def _cell(self, c: int) -> dict[str, np.ndarray]:
        keys = layers.GATE_NAMES + layers.BIAS_NAMES
        return {k: self.params[f"grnn{c}_{k}"] for k in keys}

    def _lstm(self, l: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.params[f"lstm{l}_Wx"], self.params[f"lstm{l}_Wh"], self.params[f"lstm{l}_b"])

    # -- forward ------------------------------------------------------------

    def _check_batch(self, batch) -> None:
        if self.sig and batch.sig and batch.sig != self.sig:
            raise CompatibilityError(
                f"batch signature {batch.sig} does not match model signature {self.sig}")

    def forward(self, batch, with_cache: bool = False):
        """Logits (B, n_classes); with_cache returns the intermediate bundle too."""
        self._check_batch(batch)
        p = self.params
        d = self.config.embed_dim
        c_cols = self.dims.slot_cols
        nodes = np.asarray(batch.nodes, dtype=np.int64)
        attrs = np.asarray(batch.attrs, dtype=np.int64)
        mask = np.asarray(batch.mask)
        b, length, n, _ = nodes.shape

        slot_idx = nodes[..., :c_cols]
        place_idx = nodes[..., c_cols]
        x_nodes = np.concatenate([
            p["emb_slot"][slot_idx].reshape(b, length, n, c_cols * d),
            p["emb_place"][place_idx],
        ], axis=-1)

        h_seq = x_nodes
        grnn_caches = []
        for c in range(2):
            h_seq, caches = layers.grnn_cell_forward(self._cell(c), self.a_hat, h_seq, mask)
            grnn_caches.append(caches)
        g_seq, am = layers.readout_forward(h_seq)

        attr_x = np.concatenate(
            [p[f"emb_attr{j}"][attrs[..., j]] for j in range(attrs.shape[-1])], axis=-1)
        lstm_in = np.concatenate([attr_x, g_seq], axis=-1)

        l_seq = lstm_in
        lstm_caches = []
        for l in range(self.config.lstm_layers):
            wx, wh, bias = self._lstm(l)
            l_seq, caches = layers.lstm_layer_forward(wx, wh, bias, l_seq, mask)
            lstm_caches.append(caches)

        u = np.concatenate([g_seq[:, -1], l_seq[:, -1]], axis=-1)
        logits = u @ p["cls_W"] + p["cls_b"]
        if not with_cache:
            return logits
        cache = {
            "slot_idx": slot_idx, "place_idx": place_idx, "attrs": attrs,
            "grnn_caches": grnn_caches, "am": am, "lstm_caches": lstm_caches,
            "u": u, "mask": mask, "shape": (b, length, n),
        }
        return logits, cache

    def predict_proba(self, batch) -> np.ndarray:
        return layers.softmax(self.forward(batch))

    # -- backward -----------------------------------------------------------

    def loss_and_grads(self, batch):
        """Mean cross-entropy over the batch and exact gradients for every parameter."""
        logits, cache = self.forward(batch, with_cache=True)
        loss, dlogits = layers.cross_entropy_from_logits(logits, np.asarray(batch.targets))
        grads = self.backward(dlogits.astype(self.dtype), cache)
        return loss, grads

    def backward(self, dlogits: np.ndarray, cache) -> dict[str, np.ndarray]:
        p = self.params
        d = self.config.embed_dim
        h2 = self.config.grnn_hidden[1]
        c_cols = self.dims.slot_cols
        b, length, n = cache["shape"]
        mask = cache["mask"]
        grads = self.zero_grads()

        grads["cls_W"] += cache["u"].T @ dlogits
        grads["cls_b"] += dlogits.sum(axis=0)
        du = dlogits @ p["cls_W"].T
        dg_last, dl_last = du[:, :h2], du[:, h2:]

        dl_seq = np.zeros((b, length, self.config.lstm_hidden), dtype=self.dtype)
        dl_seq[:, -1] = dl_last
        for l in range(self.config.lstm_layers - 1, -1, -1):
            wx, wh, _ = self._lstm(l)
            dl_seq = layers.lstm_layer_backward(wx, wh, dl_seq, cache["lstm_caches"][l],
                                                grads, f"lstm{l}_")
        m_attr = len(self.dims.attr_vocab_sizes) * d
        dattr_x, dg_seq = dl_seq[..., :m_attr], dl_seq[..., m_attr:].copy()
        dg_seq[:, -1] += dg_last

        dh_seq = layers.readout_backward(dg_seq, cache["am"], n)
        for c in (1, 0):
            dh_seq = layers.grnn_cell_backward(self._cell(c), self.a_hat_t, dh_seq,
                                               cache["grnn_caches"][c], grads, f"grnn{c}_")

        dslot = dh_seq[..., :c_cols * d].reshape(b, length, n, c_cols, d)
        dplace = dh_seq[..., c_cols * d:]
        layers.embed_backward(grads["emb_slot"], cache["slot_idx"], dslot)
        layers.embed_backward(grads["emb_place"], cache["place_idx"], dplace)
        for j in range(cache["attrs"].shape[-1]):
            layers.embed_backward(grads[f"emb_attr{j}"], cache["attrs"][..., j],
                                  dattr_x[..., j * d:(j + 1) * d])
        return grads

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path, vocab_sha: str = "") -> None:
        """Versioned manifest + raw little-endian parameter blocks (name order)."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        names = sorted(self.params)
        manifest = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "config": asdict(self.config),
            "dims": asdict(self.dims),
            "sig": self.sig,
            "vocab_sha": vocab_sha,
            "dtype": str(np.dtype(self.dtype).name),
            "params": [{"name": k, "shape": list(self.params[k].shape)} for k in names],
            "a_hat_shape": list(self.a_hat.shape),
        }
        (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
        with open(path / "params.bin", "wb") as fh:
            fh.write(np.ascontiguousarray(self.a_hat, dtype="<f8").tobytes())
            for k in names:
                fh.write(np.ascontiguousarray(self.params[k]).astype(
                    "<f4" if self.dtype == np.float32 else "<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path, expect_vocab_sha: str | None = None) -> "NextActivityModel":
        path = Path(path)
        manifest = json.loads((path / "manifest.json").read_text())
        if manifest["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise CompatibilityError(f"unsupported checkpoint version {manifest['format_version']}")
        if expect_vocab_sha is not None and manifest["vocab_sha"] != expect_vocab_sha:
            raise CompatibilityError(
                "checkpoint was trained against different vocabularies "
                f"({manifest['vocab_sha']} != {expect_vocab_sha})")
        config = ModelConfig.from_dict(manifest["config"])
        dims = DataDims.from_dict(manifest["dims"])
        word = "<f4" if config.dtype == "float32" else "<f8"
        raw = (path / "params.bin").read_bytes()
        n_ahat = int(np.prod(manifest["a_hat_shape"]))
        a_hat = np.frombuffer(raw, dtype="<f8", count=n_ahat).reshape(manifest["a_hat_shape"])
        offset = a_hat.nbytes
        params = {}
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(raw, dtype=word, count=count, offset=offset)
            params[entry["name"]] = arr.reshape(shape).astype(config.dtype)
            offset += arr.nbytes
        if offset != len(raw):
            raise CompatibilityError("checkpoint parameter block has trailing bytes")
        return cls(config, dims, a_hat, params, sig=manifest["sig"])
