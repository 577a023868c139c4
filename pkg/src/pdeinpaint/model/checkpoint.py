"""Single-file checkpoints: VPDE framing, JSON tensor index in the header, raw LE payload."""

from __future__ import annotations

import numpy as np
import torch

from ..errors import PayloadLengthMismatch
from ..fields import read_frame, write_frame
from .config import HvditConfig
from .hvdit import EDMDenoiser, HVDiT

_DTYPES = {torch.float32: ("f32le", "<f4"), torch.float64: ("f64le", "<f8")}
_NP = {"f32le": "<f4", "f64le": "<f8"}
_TORCH = {"f32le": torch.float32, "f64le": torch.float64}


def _pack(named: list[tuple[str, torch.Tensor, int]]):
    index, chunks, offset = [], [], 0
    for name, t, level in named:
        tag, np_dtype = _DTYPES[t.dtype]
        raw = np.ascontiguousarray(t.detach().cpu().numpy(), dtype=np_dtype).tobytes()
        index.append({"name": name, "shape": list(t.shape), "level": level, "offset": offset, "dtype": tag})
        chunks.append(raw)
        offset += len(raw)
    return index, b"".join(chunks)


def _unpack(index, payload) -> dict[str, torch.Tensor]:
    out = {}
    for entry in index:
        dt = np.dtype(_NP[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = entry["offset"] + count * dt.itemsize
        if end > len(payload):
            raise PayloadLengthMismatch(f"tensor {entry['name']} runs past the payload")
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=entry["offset"]).reshape(entry["shape"])
        out[entry["name"]] = torch.from_numpy(arr.copy())
    return out


def save_checkpoint(path, denoiser: EDMDenoiser, optimizer: torch.optim.Optimizer | None = None, meta: dict | None = None):
    levels = denoiser.param_levels()
    params = list(denoiser.named_parameters())
    named = [(name, p, levels[name]) for name, p in params]
    opt_header = None
    if optimizer is not None:
        state = optimizer.state_dict()
        steps = {}
        for i, (name, p) in enumerate(params):
            s = state["state"].get(i)
            if s is None:
                continue
            steps[name] = float(s["step"])
            named.append((f"opt.exp_avg/{name}", s["exp_avg"], levels[name]))
            named.append((f"opt.exp_avg_sq/{name}", s["exp_avg_sq"], levels[name]))
        group = {k: v for k, v in state["param_groups"][0].items() if k != "params"}
        opt_header = {"steps": steps, "group": group}
    index, payload = _pack(named)
    header = {
        "kind": "checkpoint",
        "model": denoiser.cfg.to_json(),
        "sigma_data": denoiser.sigma_data,
        "dtype": index[0]["dtype"] if index else "f32le",
        "tensors": index,
        "optimizer": opt_header,
        "meta": meta or {},
    }
    write_frame(path, header, payload)


def load_checkpoint(path):
    """Return (denoiser, optimizer_state or None, meta)."""
    header, payload = read_frame(path)
    if header.get("kind") != "checkpoint":
        raise ValueError(f"{path} is not a model checkpoint")
    tensors = _unpack(header["tensors"], payload)
    cfg = HvditConfig.from_json(header["model"])
    denoiser = EDMDenoiser(HVDiT(cfg), header["sigma_data"]).to(_TORCH[header["dtype"]])
    names = [n for n, _ in denoiser.named_parameters()]
    denoiser.load_state_dict({n: tensors[n] for n in names})
    opt_state = None
    if header.get("optimizer"):
        oh = header["optimizer"]
        state = {}
        for i, n in enumerate(names):
            if n in oh["steps"]:
                state[i] = {
                    "step": torch.tensor(oh["steps"][n], dtype=torch.float32),
                    "exp_avg": tensors[f"opt.exp_avg/{n}"],
                    "exp_avg_sq": tensors[f"opt.exp_avg_sq/{n}"],
                }
        opt_state = {"state": state, "param_groups": [dict(oh["group"], params=list(range(len(names))))]}
    return denoiser, opt_state, header.get("meta", {})
