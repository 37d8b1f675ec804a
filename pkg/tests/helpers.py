import numpy as np


def numeric_grad(f, array, h=1e-5):
    """Central finite differences of scalar ``f()`` with respect to ``array`` (mutated in place)."""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = array[idx]
        array[idx] = old + h
        fp = f()
        array[idx] = old - h
        fm = f()
        array[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def rel_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def check_module_grads(module, forward_loss, h=1e-5):
    """Largest relative error between backprop and finite differences over all parameters."""
    module.zero_grad()
    forward_loss().backward()
    worst = 0.0
    for name, p in module.named_parameters():
        if not p.trainable:
            continue
        analytic = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_grad(lambda: forward_loss().item(), p.data, h)
        worst = max(worst, rel_error(analytic, numeric))
    return worst


# acceptance criterion number -> (passed, detail); printed by the terminal summary hook
ACCEPTANCE = {}
