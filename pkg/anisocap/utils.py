import json
import zlib
from contextlib import nullcontext

import numpy as np


def optional_debugging(with_debugger):
    """
    Context that drops into ipdb on an exception when `with_debugger` is set
    """
    if not with_debugger:
        return nullcontext()
    import ipdb

    return ipdb.launch_ipdb_on_exception()


def dict_to_hash(d):
    """
    Short stable identifier for a (possibly nested) parameter dict, used to
    name luigi targets. Floats are written with `repr` precision so nearby
    parameter values do not collide
    """
    payload = json.dumps(d, sort_keys=True, default=repr)
    return f"{zlib.adler32(payload.encode('utf-8')):08x}"


def convergence_order(err_coarse, err_fine, h_coarse, h_fine):
    """
    Two-grid estimate of the order p in err ~ C h^p. Returns nan when either
    error is zero or non-finite
    """
    err_coarse, err_fine = abs(err_coarse), abs(err_fine)
    if not (np.isfinite(err_coarse) and np.isfinite(err_fine)):
        return float("nan")
    if err_coarse == 0.0 or err_fine == 0.0 or h_coarse == h_fine:
        return float("nan")
    return float(np.log(err_coarse / err_fine) / np.log(h_coarse / h_fine))
