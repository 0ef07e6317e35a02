"""Regenerate the bundled MNIST fixtures and pretrained models.

Source data: the 5,000-image MNIST subset shipped inside the ``mlxtend``
wheel (``mlxtend/data/data/mnist_5k.csv.gz``; 784 pixel columns then the
label). Training needs torch; the package itself does not.

    python tools/make_fixtures.py path/to/mnist_5k.csv.gz
"""

import argparse
from pathlib import Path

import numpy as np

from homodyne_opu.workloads import LayerSpec, save_model, write_idx

DATA = Path(__file__).resolve().parents[1] / "src" / "homodyne_opu" / "data"


def split(csv_path, test_per_class=100, seed=0):
    raw = np.loadtxt(csv_path, delimiter=",")
    pixels, labels = raw[:, :-1].astype(np.uint8), raw[:, -1].astype(np.int64)
    gen = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for digit in range(10):
        idx = gen.permutation(np.flatnonzero(labels == digit))
        test_idx.append(idx[:test_per_class])
        train_idx.append(idx[test_per_class:])
    train_idx = gen.permutation(np.concatenate(train_idx))
    test_idx = gen.permutation(np.concatenate(test_idx))
    return (pixels[train_idx], labels[train_idx]), (pixels[test_idx], labels[test_idx])


def _noisy_linear(layer, x, gain, mult_var, readout_rel, chunk, tile):
    """Training-time stand-in for the optical GEMM under fitted noise.

    Mean gain loss, independent multiplicative noise per product and
    additive readout noise per integration window, sized against the
    per-tile max-abs full scale the compiler uses.
    """
    import torch

    w = layer.weight
    out = gain * (x @ w.T)
    var = mult_var * ((x * x) @ (w * w).T)
    for s in range(0, w.shape[1], chunk):
        wa = w[:, s:s + chunk].detach().abs().amax(dim=1)
        pad = (-wa.shape[0]) % tile
        ws = torch.cat([wa, wa.new_zeros(pad)]).reshape(-1, tile).amax(dim=1).repeat_interleave(tile)[:wa.shape[0]]
        xs = x[:, s:s + chunk].detach().abs().amax(dim=1, keepdim=True)
        var = var + (readout_rel * ws[None, :] * xs * min(chunk, w.shape[1] - s)) ** 2
    return out + torch.randn_like(out) * (var + 1e-12).sqrt() + layer.bias


def train_mlp(x, y, hidden=256, epochs=30, seed=0):
    """784-hidden-10 MLP trained with noise injection matching the 1.65% device fit.

    Plain training loses ~14 points under that noise because additive noise
    scales with the worst-case tile full scale; a wider, noise-aware network
    stays within about a point of its digital accuracy.
    """
    import torch
    from torch import nn

    torch.manual_seed(seed)
    fc1, fc2 = nn.Linear(784, hidden), nn.Linear(hidden, 10)
    opt = torch.optim.Adam([*fc1.parameters(), *fc2.parameters()], lr=1e-3, weight_decay=1e-4)
    xt = torch.tensor(x, dtype=torch.float32)
    yt = torch.tensor(y)
    noise = dict(gain=0.755, mult_var=1.0, readout_rel=0.00263, chunk=100, tile=8)
    for _ in range(epochs):
        perm = torch.randperm(len(yt))
        for i in range(0, len(yt), 64):
            b = perm[i:i + 64]
            h = torch.relu(_noisy_linear(fc1, xt[b], **noise))
            opt.zero_grad()
            nn.functional.cross_entropy(_noisy_linear(fc2, h, **noise), yt[b]).backward()
            opt.step()
    w1, b1, w2, b2 = (t.detach().numpy() for t in (fc1.weight, fc1.bias, fc2.weight, fc2.bias))
    return [
        LayerSpec("linear", w1, "relu", b1, {"in": 784, "out": hidden}, name="fc1"),
        LayerSpec("linear", w2, "softmax", b2, {"in": hidden, "out": 10}, name="fc2"),
    ]


def train_conv(x, y, epochs=15, seed=0):
    import torch
    from torch import nn

    torch.manual_seed(seed)
    net = nn.Sequential(nn.Conv2d(1, 8, 5, stride=2), nn.ReLU(), nn.Flatten(), nn.Linear(8 * 12 * 12, 10))
    xt = torch.tensor(x.reshape(-1, 1, 28, 28), dtype=torch.float32)
    yt = torch.tensor(y)
    opt = torch.optim.Adam(net.parameters(), lr=2e-3, weight_decay=1e-4)
    for _ in range(epochs):
        perm = torch.randperm(len(yt))
        for i in range(0, len(yt), 64):
            b = perm[i:i + 64]
            opt.zero_grad()
            nn.functional.cross_entropy(net(xt[b]), yt[b]).backward()
            opt.step()
    conv, fc = net[0], net[3]
    dims = {"in_channels": 1, "height": 28, "width": 28, "kernel": [5, 5], "stride": 2, "padding": 0}
    return [
        LayerSpec("conv2d", conv.weight.detach().numpy().reshape(8, -1), "relu",
                  conv.bias.detach().numpy(), dims, name="conv1"),
        LayerSpec("linear", fc.weight.detach().numpy(), "softmax", fc.bias.detach().numpy(),
                  {"in": 1152, "out": 10}, name="fc"),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    args = ap.parse_args()
    (xtr, ytr), (xte, yte) = split(args.csv)
    DATA.mkdir(exist_ok=True)
    write_idx(DATA / "mnist-test-images.idx.gz", xte.reshape(-1, 28, 28))
    write_idx(DATA / "mnist-test-labels.idx.gz", yte.astype(np.uint8))
    xtr = xtr / 255.0
    for name, model in (("mnist_mlp", train_mlp(xtr, ytr)), ("mnist_conv", train_conv(xtr, ytr))):
        manifest = save_model(DATA / name, model, name)
        print(name, "->", manifest)


if __name__ == "__main__":
    main()
