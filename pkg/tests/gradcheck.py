"""Central finite-difference gradient checks on model parameters."""

import numpy as np
import torch


def flat_parameter_refs(model):
    refs = []
    for p in model.parameters():
        flat = p.data.view(-1)
        refs.extend((p, flat, j) for j in range(flat.numel()))
    return refs


def parameter_gradcheck(model, objective, n_params=20, step=1e-3, seed=0):
    """Return (analytic, finite-difference) gradients for ``n_params`` random scalars.

    ``objective()`` must rebuild the loss from the current model parameters.
    """
    model.zero_grad()
    objective().backward()
    refs = flat_parameter_refs(model)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(refs), size=n_params, replace=False)
    analytic, numeric = [], []
    with torch.no_grad():
        for k in picks:
            p, flat, j = refs[int(k)]
            analytic.append(p.grad.view(-1)[j].item())
            old = flat[j].item()
            flat[j] = old + step
            up = objective().item()
            flat[j] = old - step
            down = objective().item()
            flat[j] = old
            numeric.append((up - down) / (2 * step))
    return np.array(analytic), np.array(numeric)


def relative_error(analytic, numeric):
    return float(np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic))
