"""Central finite differences against autograd at double precision."""

import torch


def sample_coordinates(params, count, gen):
    """``count`` (tensor index, flat index) pairs drawn uniformly over all scalars."""
    sizes = torch.tensor([p.numel() for p in params], dtype=torch.float64)
    owners = torch.multinomial(sizes, count, replacement=True, generator=gen)
    return [(int(o), int(torch.randint(params[o].numel(), (1,), generator=gen))) for o in owners]


def audit(loss_fn, params, count=60, h=1e-5, seed=0, floor=1e-5):
    """Relative errors |g - fd| / max(|g|, |fd|, floor) on randomly chosen scalars."""
    gen = torch.Generator().manual_seed(seed)
    for p in params:
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    errors = []
    with torch.no_grad():
        for o, k in sample_coordinates(params, count, gen):
            flat = params[o].view(-1)
            orig = flat[k].item()
            flat[k] = orig + h
            up = loss_fn().item()
            flat[k] = orig - h
            down = loss_fn().item()
            flat[k] = orig
            fd = (up - down) / (2 * h)
            g = 0.0 if grads[o] is None else grads[o].reshape(-1)[k].item()
            errors.append(abs(g - fd) / max(abs(g), abs(fd), floor))
    return errors
