"""Training loop and full-image inference for the U-Net."""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from .ops import cosine_loss
from .optim import AdamState, adam_step
from .tensor import Tensor
from .unet import UNetConfig, add_l2_gradients, init_params, unet_forward


def patch_to_arrays(patch):
    """dataio.Patch (HWC) -> (stack CHW, normals CHW, mask HW) float64."""
    stack = np.asarray(patch.stack, dtype=np.float64)
    normals = np.asarray(patch.normals, dtype=np.float64)
    mask = np.asarray(patch.mask, dtype=bool)
    if stack.ndim != 3 or normals.ndim != 3 or mask.ndim != 2:
        raise DataError("malformed patch")
    if stack.shape[:2] != normals.shape[:2] or stack.shape[:2] != mask.shape:
        raise DataError("patch arrays disagree on H x W")
    if not (np.all(np.isfinite(stack)) and np.all(np.isfinite(normals))):
        raise DataError("patch contains non-finite values")
    return stack.transpose(2, 0, 1), normals.transpose(2, 0, 1), mask


def _stack_batch(triples, idx):
    xs = np.stack([triples[0][i] for i in idx])
    ns = np.stack([triples[1][i] for i in idx])
    ms = np.stack([triples[2][i] for i in idx])
    return xs, ns, ms


def _epoch_loss(config, params, triples, idx, batch_size):
    total, n = 0.0, 0
    for start in range(0, len(idx), batch_size):
        batch = idx[start:start + batch_size]
        xs, ns, ms = _stack_batch(triples, batch)
        pred = unet_forward(config, params, Tensor(xs))
        total += float(cosine_loss(pred, ns, ms).values) * len(batch)
        n += len(batch)
    return total / max(n, 1)


def train(config: UNetConfig, dataset, epochs, batch_size=32, val_fraction=0.2,
          seed=0, learning_rate=1e-4, log=None):
    """Train on an iterable of patches; returns (best params, history).

    The validation split, shuffling and init are all deterministic in
    ``seed`` (and config.seed for the init). History rows are
    (epoch, train_loss, val_loss) of the masked cosine data term; the L2
    weight penalty only contributes to gradients. The returned parameters are
    the ones with the best validation loss seen.
    """
    patches = [patch_to_arrays(p) for p in dataset]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(patches))
    n_val = int(round(val_fraction * len(patches)))
    val_idx = list(order[:n_val])
    train_idx = list(order[n_val:])
    if not train_idx:
        raise DataError("no training patches after the validation split")

    stacks = [p[0] for p in patches]
    normals = [p[1] for p in patches]
    masks = [p[2] for p in patches]
    triples = (stacks, normals, masks)

    params = init_params(config)
    state = AdamState(learning_rate=learning_rate)
    history = []
    best_val = np.inf
    best = {name: p.values.copy() for name, p in params.items()}

    for epoch in range(1, epochs + 1):
        perm = rng.permutation(len(train_idx))
        epoch_total, epoch_n = 0.0, 0
        for start in range(0, len(train_idx), batch_size):
            batch = [train_idx[i] for i in perm[start:start + batch_size]]
            xs, ns, ms = _stack_batch(triples, batch)
            for p in params.values():
                p.zero_grad()
            pred = unet_forward(config, params, Tensor(xs))
            loss = cosine_loss(pred, ns, ms)
            loss.backward()
            add_l2_gradients(params, config.l2_factor)
            adam_step(state, params)
            epoch_total += float(loss.values) * len(batch)
            epoch_n += len(batch)
        train_loss = epoch_total / epoch_n
        val_loss = (_epoch_loss(config, params, triples, val_idx, batch_size)
                    if val_idx else train_loss)
        history.append((epoch, train_loss, val_loss))
        if log is not None:
            log(f"epoch {epoch}: train {train_loss:.4f} val {val_loss:.4f}")
        if val_loss < best_val:
            best_val = val_loss
            best = {name: p.values.copy() for name, p in params.items()}

    return {name: Tensor(a, requires_grad=True) for name, a in best.items()}, history


def initial_val_loss(config: UNetConfig, dataset, batch_size=32, val_fraction=0.2, seed=0):
    """Validation cosine loss of the freshly initialized network."""
    patches = [patch_to_arrays(p) for p in dataset]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(patches))
    n_val = int(round(val_fraction * len(patches)))
    val_idx = list(order[:n_val]) or list(order)
    triples = ([p[0] for p in patches], [p[1] for p in patches], [p[2] for p in patches])
    return _epoch_loss(config, init_params(config), triples, val_idx, batch_size)


def infer_normals(config: UNetConfig, params, stack_hwk, mask=None, tile=64):
    """Predict a unit-normal field for a full H x W x 4 stack.

    Images whose sides divide 2^depth run in one pass; otherwise they are
    tiled (edge tiles anchored at the border) and stitched. Predictions are
    normalized to unit length; off-mask pixels are zeroed.
    """
    stack = np.asarray(stack_hwk, dtype=np.float64)
    h, w = stack.shape[:2]
    x_full = stack.transpose(2, 0, 1)[None]
    div = 2**config.depth
    if h % div == 0 and w % div == 0 and max(h, w) <= 512:
        pred = unet_forward(config, params, Tensor(x_full)).values[0]
    else:
        pred = np.zeros((3, h, w))
        anchors_r = sorted({min(r, h - tile) for r in range(0, h, tile)})
        anchors_c = sorted({min(c, w - tile) for c in range(0, w, tile)})
        for r0 in anchors_r:
            for c0 in anchors_c:
                tile_x = x_full[:, :, r0:r0 + tile, c0:c0 + tile]
                out = unet_forward(config, params, Tensor(tile_x)).values[0]
                pred[:, r0:r0 + tile, c0:c0 + tile] = out

    vec = pred.transpose(1, 2, 0)
    norms = np.linalg.norm(vec, axis=2)
    vec = np.where(norms[:, :, None] > 0, vec / np.where(norms > 0, norms, 1.0)[:, :, None],
                   np.array([0.0, 0.0, 1.0]))
    if mask is not None:
        vec = np.where(np.asarray(mask, dtype=bool)[:, :, None], vec, 0.0)
    return vec
