import math
import random

import numpy as np
import pandas as pd
import torch
import torch.nn.init as init


def seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


def add_dict_to(total_dict, dict_to_add):
    for k, v in dict_to_add.items():
        if k in total_dict:
            total_dict[k] += v
        else:
            total_dict[k] = v


def log_value_dict(tb_logger, tag, value_dict, it):
    for name, value in value_dict.items():
        tb_logger.add_scalar(f'{tag}/{name}', value, it)


def format_value_dict(value_dict, precision=4):
    return "".join(f", {k}: {v:.{precision}f}" for k, v in sorted(value_dict.items()))


def assert_shape(tensor, shape):
    """Check ndarray/tensor shape; `None` entries match any size."""
    assert tensor.ndim == len(shape), \
        f"Wrong number of dimensions: got {tensor.ndim}, expected {len(shape)}"
    for idx, (size, ref_size) in enumerate(zip(tensor.shape, shape)):
        if ref_size is not None:
            assert size == ref_size, f'Wrong size for dimension {idx}: got {size}, expected {ref_size}'


WEIGHT_INITS = {
    'gaussian': lambda w: init.normal_(w, 0.0, 0.02),
    'xavier': lambda w: init.xavier_normal_(w, gain=1.0),
    'orthogonal': lambda w: init.orthogonal_(w, gain=math.sqrt(2)),  # tanh/relu trunks
    'policy_head': lambda w: init.orthogonal_(w, gain=0.01),
    'value_head': lambda w: init.orthogonal_(w, gain=1.0),
    'default': lambda w: None,
}


def weights_init(init_type):
    """Module initializer for `nn.Module.apply`: weights by `init_type`, biases zeroed."""
    assert init_type in WEIGHT_INITS, f"Unsupported initialization: {init_type}"

    def init_fun(m):
        if isinstance(m, torch.nn.Linear):
            with torch.no_grad():
                WEIGHT_INITS[init_type](m.weight)
                if m.bias is not None:
                    m.bias.zero_()

    return init_fun


def write_csv(rows, path, columns, float_format="%.10g"):
    """Write result rows (list of dicts) to a fresh CSV file with a fixed column order."""
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    return frame
