"""Feed-forward binary classifiers trained with Adam (float64, CPU)."""

import numpy as np
import torch
from torch import nn

from .base import TrainedModel, TrainingError

PRESETS = {
    # three decreasing hidden layers, adam, up to 200 epochs with loss-plateau stopping
    "A": {
        "hidden_layers": (150, 75, 50),
        "activation": "relu",
        "batch_norm": False,
        "dropout": 0.0,
        "epochs": 200,
        "learning_rate": 1e-3,
        "batch_size": 200,
        "l2": 1e-4,
        "early_stopping": True,
        "tol": 1e-4,
        "patience": 10,
    },
    # one 64-unit layer with batch norm and dropout, fixed 50 epochs
    "B": {
        "hidden_layers": (64,),
        "activation": "relu",
        "batch_norm": True,
        "dropout": 0.3,
        "epochs": 50,
        "learning_rate": 1e-3,
        "batch_size": 512,
        "l2": 0.0,
        "early_stopping": False,
        "tol": 1e-4,
        "patience": 10,
    },
}

DTYPE = torch.float64


def build_network(d, hidden_layers, activation="relu", batch_norm=False, dropout=0.0):
    acts = {"relu": nn.ReLU, "tanh": nn.Tanh, "identity": nn.Identity}
    if activation not in acts:
        raise ValueError(f"unknown activation {activation!r}")
    layers = []
    width = d
    for h in hidden_layers:
        layers.append(nn.Linear(width, h, dtype=DTYPE))
        if batch_norm:
            layers.append(nn.BatchNorm1d(h, dtype=DTYPE))
        layers.append(acts[activation]())
        if dropout > 0:
            layers.append(nn.Dropout(dropout))
        width = h
    layers.append(nn.Linear(width, 1, dtype=DTYPE))
    return nn.Sequential(*layers)


class MLPModel(TrainedModel):
    kind = "mlp"
    differentiable = True

    def __init__(self, network, d, architecture, **kw):
        super().__init__(d, **kw)
        self.network = network.eval()
        self.architecture = dict(architecture)
        self.history = []

    def _forward(self, X):
        with torch.no_grad():
            t = torch.as_tensor(X, dtype=DTYPE)
            return self.network(t).squeeze(-1).numpy()

    def predict_margin(self, X):
        X, single = self._check(X)
        m = self._forward(X)
        return m[0] if single else m

    def _grad(self, X, of_score):
        t = torch.as_tensor(X, dtype=DTYPE).clone().requires_grad_(True)
        out = self.network(t).squeeze(-1)
        if of_score:
            out = torch.sigmoid(out)
        (g,) = torch.autograd.grad(out.sum(), t)
        return g.numpy()

    def margin_gradient(self, X):
        X, single = self._check(X)
        g = self._grad(X, of_score=False)
        return g[0] if single else g

    def input_gradient(self, X):
        X, single = self._check(X)
        g = self._grad(X, of_score=True)
        return g[0] if single else g

    def clone_network(self):
        net = build_network(self.d, **self.architecture)
        net.load_state_dict(self.network.state_dict())
        return net

    def params(self):
        return {
            "architecture": {**self.architecture, "hidden_layers": list(self.architecture["hidden_layers"])},
            "state": {k: v.tolist() for k, v in self.network.state_dict().items()},
        }

    @classmethod
    def from_params(cls, p, d, **kw):
        arch = dict(p["architecture"])
        arch["hidden_layers"] = tuple(arch["hidden_layers"])
        net = build_network(d, **arch)
        state = {k: torch.as_tensor(np.asarray(v), dtype=net.state_dict()[k].dtype) for k, v in p["state"].items()}
        net.load_state_dict(state)
        return cls(net, d, arch, **kw)


def fit_mlp(X, y, seed, hidden_layers=(150, 75, 50), activation="relu", batch_norm=False, dropout=0.0,
            epochs=200, learning_rate=1e-3, batch_size=200, l2=1e-4, early_stopping=True, tol=1e-4,
            patience=10, preset=None, **kw):
    n, d = X.shape
    arch = {"hidden_layers": tuple(hidden_layers), "activation": activation, "batch_norm": batch_norm,
            "dropout": dropout}
    Xt = torch.as_tensor(X, dtype=DTYPE)
    yt = torch.as_tensor(y, dtype=DTYPE)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        net = build_network(d, **arch)
        opt = torch.optim.Adam(net.parameters(), lr=learning_rate, weight_decay=l2)
        loss_fn = nn.BCEWithLogitsLoss()
        gen = torch.Generator().manual_seed(seed)
        history, best, stall = [], np.inf, 0
        for epoch in range(1, epochs + 1):
            net.train()
            perm = torch.randperm(n, generator=gen)
            total = 0.0
            for start in range(0, n, batch_size):
                b = perm[start:start + batch_size]
                if batch_norm and len(b) < 2:
                    continue
                opt.zero_grad()
                loss = loss_fn(net(Xt[b]).squeeze(-1), yt[b])
                if not torch.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}")
                loss.backward()
                opt.step()
                total += loss.item() * len(b)
            epoch_loss = total / n
            history.append(epoch_loss)
            if early_stopping:
                if epoch_loss > best - tol:
                    stall += 1
                    if stall >= patience:
                        break
                else:
                    stall = 0
                best = min(best, epoch_loss)
    model = MLPModel(net, d, arch, **kw)
    model.history = history
    return model
