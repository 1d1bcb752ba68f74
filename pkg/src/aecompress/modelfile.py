"""Versioned binary container for models at every pipeline stage.

Layout: magic "AECZ", little-endian u16 version, u32 header length, a
canonical JSON header, then the concatenated binary sections the header
describes (name, offset, length, encoding).  Everything is deterministic:
saving the result of a load reproduces the input byte for byte.

Sections:
  float32 tensors     little-endian 4-byte floats
  masks               1 bit per weight, rows padded to byte boundaries
  integer code arrays two's-complement values bit-packed at the payload
                      width, rows padded to byte boundaries
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import Autoencoder
from .errors import FormatError
from .nn import DTYPE, LayerSpec
from .pruning import MaskSet
from .quantization import (
    Codebook,
    FixedPointParams,
    LayerQuant,
    QuantizedModel,
)

MAGIC = b"AECZ"
VERSION = 1

STAGES = ("baseline", "pruned", "quantized")


def _row_view(values):
    arr = np.asarray(values)
    if arr.ndim <= 1:
        return arr.reshape(1, -1)
    return arr.reshape(arr.shape[0], -1)


def pack_bits(values, width):
    """Bit-pack non-negative ints row-wise, LSB first, rows byte-padded."""
    rows = _row_view(values).astype(np.uint64)
    if width < 1:
        raise FormatError("bit width must be at least 1")
    shifts = np.arange(width, dtype=np.uint64)
    bits = ((rows[:, :, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.reshape(rows.shape[0], -1), axis=1,
                       bitorder="little").tobytes()


def unpack_bits(data, width, shape):
    """Inverse of pack_bits for a known logical shape."""
    shape = tuple(shape)
    n_rows = shape[0] if len(shape) > 1 else 1
    row_elems = int(np.prod(shape[1:], dtype=np.int64)) if len(shape) > 1 else (
        shape[0] if shape else 1)
    row_bytes = (row_elems * width + 7) // 8
    raw = np.frombuffer(data, dtype=np.uint8)
    if raw.size != n_rows * row_bytes:
        raise FormatError("bit-packed section length mismatch")
    bits = np.unpackbits(raw.reshape(n_rows, row_bytes), axis=1,
                         bitorder="little")[:, : row_elems * width]
    groups = bits.reshape(n_rows, row_elems, width).astype(np.uint64)
    weights = np.uint64(1) << np.arange(width, dtype=np.uint64)
    values = (groups * weights).sum(axis=2)
    return values.reshape(shape)


def pack_signed(codes, width):
    half = 1 << (width - 1)
    arr = np.asarray(codes, dtype=np.int64)
    if arr.size and (arr.min() < -half or arr.max() >= half):
        raise FormatError(f"codes out of range for {width}-bit payload")
    return pack_bits(arr & ((1 << width) - 1), width)

def unpack_signed(data, width, shape):
    values = unpack_bits(data, width, shape).astype(np.int64)
    half = 1 << (width - 1)
    return np.where(values >= half, values - (1 << width), values)


def _spec_to_dict(spec):
    return {
        "kind": spec.kind, "in_channels": spec.in_channels,
        "out_channels": spec.out_channels, "kernel_size": spec.kernel_size,
        "stride": spec.stride, "padding": spec.padding,
        "activation": spec.activation, "output_padding": spec.output_padding,
    }


def _spec_from_dict(d):
    return LayerSpec(**d)


def _fp_from_dict(d):
    return FixedPointParams(d["total_bits"], d["int_bits"], d["frac_bits"])


@dataclass
class ModelFile:
    """In-memory view of one saved model at any stage."""

    stage: str
    model: Autoencoder | None = None          # baseline / pruned
    qmodel: QuantizedModel | None = None      # quantized
    mask_set: MaskSet | None = None
    metrics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def architecture(self):
        src = self.model if self.model is not None else self.qmodel
        return src.encoder_specs, src.input_shape, src.seed

    def float_model(self):
        """Evaluable float model regardless of stage."""
        return self.model if self.model is not None else self.qmodel.to_model()

    def act_quantizers(self):
        return self.qmodel.act_quantizers() if self.qmodel is not None else None

    def to_bytes(self):
        specs, input_shape, seed = self.architecture()
        sections = []
        payload = bytearray()

        def add(name, data, kind, shape, width=None):
            entry = {"name": name, "offset": len(payload), "length": len(data),
                     "kind": kind, "shape": list(int(s) for s in shape)}
            if width is not None:
                entry["width"] = int(width)
            sections.append(entry)
            payload.extend(data)

        header = {
            "version": VERSION,
            "stage": self.stage,
            "architecture": {
                "encoder": [_spec_to_dict(s) for s in specs],
                "input_shape": list(input_shape),
                "seed": int(seed),
            },
            "metrics": self.metrics,
            "provenance": self.provenance,
        }

        if self.stage in ("baseline", "pruned"):
            for i, layer in enumerate(self.model.param_layers):
                add(f"w{i}", layer.weight.astype("<f4").tobytes(), "f32",
                    layer.weight.shape)
                add(f"b{i}", layer.bias.astype("<f4").tobytes(), "f32",
                    layer.bias.shape)
        elif self.stage == "quantized":
            q = self.qmodel
            qlayers = []
            for i, lq in enumerate(q.layers):
                entry = {"scheme": lq.scheme,
                         "bias_params": lq.bias_params.as_dict()}
                width = max(1, lq.bias_params.total_bits)
                add(f"qb{i}", pack_signed(lq.bias_codes, width), "codes",
                    lq.bias_codes.shape, width)
                if lq.scheme == "linear":
                    entry["weight_params"] = lq.weight_params.as_dict()
                    width = lq.weight_params.total_bits
                    add(f"qw{i}", pack_signed(lq.weight_codes, width), "codes",
                        lq.weight_codes.shape, width)
                else:
                    cb = lq.codebook
                    entry["omega"] = cb.omega
                    entry["psi"] = cb.psi
                    entry["centroid_params"] = cb.centroid_params.as_dict()
                    ccodes = _centroid_codes(cb)
                    add(f"cb{i}", pack_signed(ccodes, cb.psi), "codes",
                        ccodes.shape, cb.psi)
                    iw = max(1, cb.index_bits)
                    add(f"ix{i}", pack_bits(cb.indices.reshape(lq.weight_shape), iw),
                        "indices", lq.weight_shape, iw)
                qlayers.append(entry)
            header["quant"] = {
                "scheme": q.scheme, "total_bits": q.total_bits,
                "omega": q.omega, "psi": q.psi,
                "layers": qlayers,
                "act_params": ([p.as_dict() for p in q.act_params]
                               if q.act_params is not None else None),
            }
        else:
            raise FormatError(f"unknown stage {self.stage!r}")

        if self.mask_set is not None:
            header["mask_levels"] = [float(v) for v in self.mask_set.levels]
            for i, mask in enumerate(self.mask_set.masks):
                add(f"m{i}", pack_bits(mask.astype(np.uint64), 1), "mask",
                    mask.shape, 1)

        header["sections"] = sections
        header_bytes = json.dumps(header, sort_keys=True,
                                  separators=(",", ":")).encode("utf-8")
        return (MAGIC + struct.pack("<H", VERSION)
                + struct.pack("<I", len(header_bytes)) + header_bytes + bytes(payload))

    def save(self, path):
        blob = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(blob)
        return hashlib.sha256(blob).hexdigest()


def model_id(path_or_bytes):
    """Short stable identifier: first 12 hex chars of the file hash."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        blob = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as fh:
            blob = fh.read()
    return hashlib.sha256(blob).hexdigest()[:12]


def _centroid_codes(cb):
    params = cb.centroid_params
    codes = np.round(cb.centroids.astype(np.float64) / params.scale).astype(np.int64)
    lo, hi = params.code_range()
    return np.clip(codes, lo, hi)


def load(path_or_bytes):
    """Parse a model file, validating structure and section bookkeeping."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        blob = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as fh:
            blob = fh.read()
    if len(blob) < 10 or blob[:4] != MAGIC:
        raise FormatError("not a model file (bad magic)")
    version = struct.unpack("<H", blob[4:6])[0]
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    header_len = struct.unpack("<I", blob[6:10])[0]
    try:
        header = json.loads(blob[10 : 10 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header: {exc}") from None
    payload = blob[10 + header_len :]

    sections = {}
    declared = 0
    for entry in header.get("sections", []):
        lo, n = entry["offset"], entry["length"]
        if lo + n > len(payload):
            raise FormatError(f"section {entry['name']} overruns payload")
        declared += n
        sections[entry["name"]] = (payload[lo : lo + n], entry)
    if declared != len(payload):
        raise FormatError("payload length does not match declared sections")

    stage = header.get("stage")
    if stage not in STAGES:
        raise FormatError(f"unknown stage {stage!r}")
    arch = header["architecture"]
    specs = [_spec_from_dict(d) for d in arch["encoder"]]
    input_shape = tuple(arch["input_shape"])
    seed = arch["seed"]

    def take(name):
        if name not in sections:
            raise FormatError(f"missing section {name}")
        return sections[name]

    mf = ModelFile(stage=stage, metrics=header.get("metrics", {}),
                   provenance=header.get("provenance", {}))

    if stage in ("baseline", "pruned"):
        model = Autoencoder(specs, input_shape, seed)
        for i, layer in enumerate(model.param_layers):
            data, entry = take(f"w{i}")
            layer.weight = np.frombuffer(data, dtype="<f4").reshape(
                entry["shape"]).astype(DTYPE)
            data, entry = take(f"b{i}")
            layer.bias = np.frombuffer(data, dtype="<f4").reshape(
                entry["shape"]).astype(DTYPE)
        mf.model = model
    else:
        q = header["quant"]
        qlayers = []
        ref = Autoencoder(specs, input_shape, seed)
        for i, (entry, layer) in enumerate(zip(q["layers"], ref.param_layers)):
            bias_params = _fp_from_dict(entry["bias_params"])
            data, meta = take(f"qb{i}")
            bias_codes = unpack_signed(data, meta["width"], meta["shape"])
            if entry["scheme"] == "linear":
                params = _fp_from_dict(entry["weight_params"])
                data, meta = take(f"qw{i}")
                codes = unpack_signed(data, meta["width"], meta["shape"])
                qlayers.append(LayerQuant(
                    scheme="linear", weight_shape=tuple(meta["shape"]),
                    weight_codes=codes, weight_params=params,
                    bias_codes=bias_codes, bias_params=bias_params))
            else:
                cparams = _fp_from_dict(entry["centroid_params"])
                data, meta = take(f"cb{i}")
                ccodes = unpack_signed(data, meta["width"], meta["shape"])
                centroids = (ccodes.astype(np.float64) * cparams.scale).astype(DTYPE)
                data, meta = take(f"ix{i}")
                indices = unpack_bits(data, meta["width"], meta["shape"])
                if indices.size and int(indices.max()) >= len(centroids):
                    raise FormatError(f"codebook index out of range in layer {i}")
                codebook = Codebook(
                    centroids=centroids, indices=indices.ravel().astype(np.int64),
                    shape=tuple(meta["shape"]), omega=entry["omega"],
                    psi=entry["psi"], centroid_params=cparams)
                qlayers.append(LayerQuant(
                    scheme="nonlinear", weight_shape=tuple(meta["shape"]),
                    codebook=codebook,
                    bias_codes=bias_codes, bias_params=bias_params))
        act = q.get("act_params")
        mf.qmodel = QuantizedModel(
            encoder_specs=specs, input_shape=input_shape, seed=seed,
            scheme=q["scheme"], layers=qlayers,
            act_params=[_fp_from_dict(d) for d in act] if act else None,
            total_bits=q.get("total_bits"), omega=q.get("omega"),
            psi=q.get("psi"), provenance=header.get("provenance", {}))

    if "mask_levels" in header:
        levels = header["mask_levels"]
        masks = []
        model_ref = mf.model if mf.model is not None else Autoencoder(
            specs, input_shape, seed)
        for i, layer in enumerate(model_ref.param_layers):
            data, meta = take(f"m{i}")
            masks.append(unpack_bits(data, 1, meta["shape"]).astype(np.float32))
        mf.mask_set = MaskSet(masks, levels)
    return mf
