"""Parameter checkpoints: one named matrix block per state array.

Arrays are flattened to 2-D for storage (leading axis kept, the rest
merged; vectors become a single row) and restored by element count.
Payloads are 32-bit; restoring into a 64-bit model upcasts.
"""

import numpy as np

from .. import matfile


def as_2d(arr):
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim == 2:
        return arr
    return arr.reshape(arr.shape[0], -1)


def save_arrays(path, named_arrays):
    matfile.write_container(path, [(name, as_2d(np.asarray(arr)))
                                   for name, arr in named_arrays])


def load_arrays(path):
    return dict(matfile.read_container(path))
