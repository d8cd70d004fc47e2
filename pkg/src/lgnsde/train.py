"""Variational training loop: Adam on the negative ELBO with early
stopping on validation accuracy."""

import sys
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, backward
from .metrics import evaluate
from .sde import BrownianPath, DivergedError


@dataclass
class RunLog:
    epochs: list = field(default_factory=list)   # {epoch, train_loss, val_acc, val_nll}
    best_epoch: int = -1
    best_val_acc: float = -1.0
    diverged: bool = False
    checkpoint_path: str = None

    def to_dict(self):
        return {"epochs": self.epochs, "best_epoch": self.best_epoch,
                "best_val_acc": self.best_val_acc, "diverged": self.diverged,
                "checkpoint_path": self.checkpoint_path}


def _val_metrics(model, graph, val_mc, seed, ignore=None):
    probs = model.predict(graph, mc_samples=val_mc, master_seed=seed)
    mask = np.asarray(graph.val_mask, dtype=bool).copy()
    if ignore is not None:
        mask &= ~np.asarray(ignore, dtype=bool)
    rows = np.nonzero(mask)[0]
    pred = probs[rows].argmax(axis=1)
    acc = float((pred == graph.labels[rows]).mean())
    logp = np.log(np.clip(probs[rows, graph.labels[rows]], 1e-300, None))
    return acc, float(-logp.mean())


def train_model(model, graph, epochs=300, patience=50, lr=0.01, seed=0,
                val_mc=2, val_ignore=None, kl_weight=None, verbose=False):
    """Maximize the ELBO with Adam; keep the best-validation parameters.

    One fresh Brownian path per step realizes the trajectory expectation
    through SGD. Returns a RunLog; the model ends up holding the
    best-validation (or last-good, on divergence) parameters.
    """
    params = model.parameters()
    opt = Adam(params, lr=lr)
    path_seeds = np.random.SeedSequence([seed, 1]).generate_state(epochs)
    drop_seeds = np.random.SeedSequence([seed, 2]).generate_state(epochs)
    val_seed = int(np.random.SeedSequence([seed, 3]).generate_state(1)[0])
    cfg = model.sde_config
    log = RunLog()
    best = [p.data.copy() for p in params]
    stale = 0
    for epoch in range(epochs):
        rng = np.random.Generator(np.random.PCG64(int(drop_seeds[epoch])))
        path = BrownianPath(int(path_seeds[epoch]), cfg.steps, graph.n,
                            model.hidden, cfg.t0, cfg.t1)
        try:
            loss = model.training_loss(graph, path, rng=rng, kl_weight=kl_weight)
            opt.zero_grad()
            backward(loss)
            opt.step()
        except DivergedError:
            log.diverged = True
            break
        val_acc, val_nll = _val_metrics(model, graph, val_mc, val_seed, val_ignore)
        log.epochs.append({"epoch": epoch, "train_loss": float(loss.data),
                           "val_acc": val_acc, "val_nll": val_nll})
        if verbose and (epoch % 20 == 0 or epoch == epochs - 1):
            print(f"epoch {epoch:4d} loss {float(loss.data):12.4f} "
                  f"val_acc {val_acc:.4f}", file=sys.stderr)
        if val_acc > log.best_val_acc:
            log.best_val_acc = val_acc
            log.best_epoch = epoch
            best = [p.data.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    for p, data in zip(params, best):
        p.data = data
    return log


def test_report(model, graph, master_seed=0, mc_samples=None):
    """EvalReport on the test mask with the model's MC predictive."""
    probs = model.predict(graph, mc_samples=mc_samples, master_seed=master_seed)
    return evaluate(probs, graph.labels, graph.test_mask), probs
