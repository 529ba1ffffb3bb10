"""AdamW with decoupled weight decay and the inverse-square-root schedule."""

import torch

from ..errors import InputError


def lr_at(step, warmup, d_model, scale=1.0):
    if step < 1:
        raise InputError("step must be >= 1")
    return scale * d_model**-0.5 * min(step**-0.5, step * warmup**-1.5)


def init_adam_state(params):
    return {
        "step": 0,
        "m": [torch.zeros_like(p) for p in params],
        "v": [torch.zeros_like(p) for p in params],
    }


@torch.no_grad()
def adamw_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
    """One bias-corrected AdamW update, in place. Returns ``(params, state)``."""
    b1, b2 = betas
    state["step"] += 1
    t = state["step"]
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            continue
        if weight_decay:
            p.mul_(1.0 - lr * weight_decay)
        m.mul_(b1).add_(g, alpha=1.0 - b1)
        v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
        denom = (v / c2).sqrt_().add_(eps)
        p.addcdiv_(m, denom, value=-lr / c1)
    return params, state


class AdamW:
    """Thin stateful wrapper over :func:`adamw_step` for a module's parameters."""

    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = [p for p in params if p.requires_grad]
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = init_adam_state(self.params)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, lr):
        adamw_step(
            self.params,
            [p.grad for p in self.params],
            self.state,
            lr,
            self.betas,
            self.eps,
            self.weight_decay,
        )
