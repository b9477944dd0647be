import json
from pathlib import Path

import numpy as np
import pandas as pd


def to_jsonable(value):
    """json.dumps default hook for numpy scalars/arrays, complex numbers and paths."""
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()] if np.iscomplexobj(value) else value.tolist()
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps(data):
    return json.dumps(data, indent=2, sort_keys=True, default=to_jsonable)


def write_json(data, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data) + "\n")
    return path


def write_csv(frame, path, config_hash=None):
    """Write a table; every table written for a scenario carries the config hash column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(frame)
    if config_hash is not None:
        frame = frame.assign(config_hash=config_hash)
    frame.to_csv(path, index=False, float_format="%.12g")
    return path


if __name__ == "__main__":
    pass
