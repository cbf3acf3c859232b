"""Shared test oracles: full-model finite differences and small fixtures."""
import numpy as np

from tokenmixup.numerics.tensor import ConstantTape, backward, constant_tape, precision
from tokenmixup.training import mixup_forward, total_loss


def model_loss(model, images, labels):
    trace, state = mixup_forward(model, images, labels)
    loss, _ = total_loss(model, trace, state)
    return loss, trace, state


def full_gradient_check(model, images, labels, h=1e-3):
    """Reverse mode against central differences for every parameter of ``model``.

    Runs in float64.  Every stop-gradient value of the first pass (saliency, gates,
    matches, masks, pooled tokens, ScoreNet inputs) is recorded and replayed in the
    perturbed passes, so finite differences see the same piecewise-smooth branch the
    analytic gradient differentiates.  Returns ``({name: norm-wise rel error}, state)``.
    """
    with precision(np.float64):
        model.astype(np.float64)
        images = np.asarray(images, np.float64)
        labels = np.asarray(labels, np.float64)
        tape = ConstantTape()
        with constant_tape(tape):
            loss, trace, state = model_loss(model, images, labels)
            backward(loss)
            analytic = {k: p.grad.copy() for k, p in model.named_parameters()}
            errors, norms = {}, {}
            for name, p in model.named_parameters():
                num = np.zeros_like(p.data)
                flat = p.data.reshape(-1)
                for i in range(flat.size):
                    saved = flat[i]
                    flat[i] = saved + h
                    tape.rewind()
                    up = model_loss(model, images, labels)[0].item()
                    flat[i] = saved - h
                    tape.rewind()
                    down = model_loss(model, images, labels)[0].item()
                    flat[i] = saved
                    num.reshape(-1)[i] = (up - down) / (2 * h)
                a = analytic[name]
                denom = max(np.linalg.norm(a) + np.linalg.norm(num), 1e-12)
                errors[name] = float(np.linalg.norm(a - num) / denom)
                norms[name] = (float(np.linalg.norm(a)), float(np.linalg.norm(a - num)))
    full_gradient_check.norms = norms
    return errors, state, trace
