"""Checkpoint archive: one zip holding weights, optimizer moments, config,
training counters, and RNG streams, versioned by a magic string."""
import io
import pickle
import zipfile
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import parse_config, serialize_config
from .errors import BadCheckpoint

MAGIC = "SCRIBBLEGATE_CKPT_v1"


@dataclass
class CheckpointData:
    config: object
    seg_state: dict
    disc_state: dict = None
    opt_seg: dict = None
    opt_disc: dict = None
    counters: dict = field(default_factory=dict)
    rng_states: dict = field(default_factory=dict)


def _write_array(zf, name, array):
    buf = io.BytesIO()
    np.save(buf, np.asarray(array))
    zf.writestr(name, buf.getvalue())


def _module_arrays(prefix, state_dict):
    return {"%s/%s.npy" % (prefix, k): v.detach().cpu().numpy()
            for k, v in state_dict.items()}


def _optimizer_arrays(prefix, opt):
    out = {}
    for idx, entry in opt.state_dict()["state"].items():
        for key, value in entry.items():
            arr = value.detach().cpu().numpy() if torch.is_tensor(value) \
                else np.asarray(value)
            out["%s/%d.%s.npy" % (prefix, idx, key)] = arr
    return out


def save_checkpoint(path, config, seg_state, disc_state=None,
                    opt_seg=None, opt_disc=None, counters=None, rng_states=None):
    """seg_state/disc_state: module state_dicts (tensors or numpy arrays);
    opt_seg/opt_disc: torch optimizers or pre-extracted {name: array} dicts."""
    arrays = {}
    as_np = lambda v: v.detach().cpu().numpy() if torch.is_tensor(v) else np.asarray(v)
    arrays.update({"seg/%s.npy" % k: as_np(v) for k, v in seg_state.items()})
    if disc_state is not None:
        arrays.update({"disc/%s.npy" % k: as_np(v) for k, v in disc_state.items()})
    for prefix, opt in (("opt_seg", opt_seg), ("opt_disc", opt_disc)):
        if opt is None:
            continue
        if isinstance(opt, dict):
            arrays.update({"%s/%s" % (prefix, k): as_np(v) for k, v in opt.items()})
        else:
            arrays.update(_optimizer_arrays(prefix, opt))

    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("magic.txt", MAGIC)
        zf.writestr("config.txt", serialize_config(config))
        lines = ["%s = %s" % (k, v) for k, v in sorted((counters or {}).items())]
        zf.writestr("state.txt", "\n".join(lines) + "\n")
        if rng_states:
            states = {name: rng.get_state() if hasattr(rng, "get_state") else rng
                      for name, rng in rng_states.items()}
            zf.writestr("rng.pkl", pickle.dumps(states))
        for name in sorted(arrays):
            _write_array(zf, name, arrays[name])


def load_checkpoint(path):
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise BadCheckpoint("cannot open %s: %s" % (path, exc))
    with zf:
        names = set(zf.namelist())
        if "magic.txt" not in names:
            raise BadCheckpoint("%s: not a checkpoint archive" % path)
        magic = zf.read("magic.txt").decode().strip()
        if magic != MAGIC:
            raise BadCheckpoint("%s: unknown format %r" % (path, magic))
        config = parse_config(zf.read("config.txt").decode())

        def group(prefix):
            out = {}
            for name in names:
                if name.startswith(prefix + "/") and name.endswith(".npy"):
                    key = name[len(prefix) + 1:-4]
                    out[key] = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
            return out or None

        counters = {}
        for line in zf.read("state.txt").decode().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                counters[k.strip()] = float(v.strip())
        rng_states = {}
        if "rng.pkl" in names:
            rng_states = pickle.loads(zf.read("rng.pkl"))
        return CheckpointData(config, group("seg"), group("disc"),
                              group("opt_seg"), group("opt_disc"),
                              counters, rng_states)


def state_dict_from_arrays(arrays):
    return {k: torch.as_tensor(v) for k, v in arrays.items()}


def restore_optimizer(opt, arrays):
    """Fill a freshly built optimizer with saved per-parameter moments."""
    state = {}
    for name, arr in arrays.items():
        idx_str, key = name.split(".", 1)
        entry = state.setdefault(int(idx_str), {})
        entry[key] = torch.as_tensor(arr)
    sd = opt.state_dict()
    sd["state"] = state
    opt.load_state_dict(sd)


def restore_rng(rng_states):
    """Rebuild {name: RandomState} from saved MT19937 state tuples."""
    out = {}
    for name, state in rng_states.items():
        rng = np.random.RandomState(0)
        rng.set_state(state)
        out[name] = rng
    return out
