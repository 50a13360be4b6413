"""Linear tied autoencoder vs PCA subspace, and a sparse sigmoid autoencoder on contact data.

    python3 scripts/autoencoder_recovery.py --images ae_images
"""

import argparse
from pathlib import Path

import numpy as np
from scipy.linalg import subspace_angles

from contactmsm import autoencoder as ae
from contactmsm import pipeline as pl
from contactmsm import synth
from contactmsm.projectors import pca_fit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--images", help="directory for P3 images of the sparse encoder weights")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    basis, _ = np.linalg.qr(rng.standard_normal((10, 2)))
    x = rng.standard_normal((3000, 2)) * [4.0, 2.5] @ basis.T + 0.2 * rng.standard_normal((3000, 10))
    x -= x.mean(axis=0)
    p, res = ae.ae_train(x, 2, ae.AeHyper(lam=0.0, beta=0.0, epochs=args.epochs, seed=args.seed),
                         ae.LINEAR, tied=True, return_info=True)
    angles = np.degrees(subspace_angles(p.W1.T, pca_fit(x).components[:, :2]))
    print(f"linear tied AE: {res.n_iter} iterations, principal angles to PCA plane {np.round(angles, 6)} deg")

    # 15 features = contact map of 6 residues, so encoder rows fold into 6 x 6 images
    T = synth.metastable_chain(0.98, 3)
    hidden, feats = synth.gen_hmm(synth.HmmSpec(T, synth.block_templates(3, 15), 20, 500, seed=3))
    data = feats.concatenated()
    states = np.concatenate(list(hidden))
    # with rho = 0 the sparsity term pushes every unit towards zero activation;
    # the beta = 0 run shows what the same net learns without it
    for label, h in (("default (lam 0.003, rho 0, beta 3)", ae.AeHyper(epochs=args.epochs, seed=args.seed)),
                     ("no sparsity (beta 0)", ae.AeHyper(beta=0.0, epochs=args.epochs, seed=args.seed))):
        sp, res = ae.ae_train(data, 3, h, return_info=True)
        terms = ae.ae_cost_terms(sp, data, h)
        print(f"sparse AE {label}: J {res.history[0]:.4f} -> {res.f:.4f} in {res.n_iter} iterations; "
              + ", ".join(f"{k} {v:.4f}" for k, v in terms.items()))
        code = ae.ae_encode(sp, data)
        for s in range(3):
            print(f"  hidden state {s}: mean code {np.round(code[states == s].mean(axis=0), 3)}")
        if args.images:
            out = Path(args.images) / ("sparse" if h.beta else "dense")
            out.mkdir(parents=True, exist_ok=True)
            for i, w in enumerate(sp.W1):
                pl.export_component_image(pl.fold_component(w, 6), out / f"unit{i}.ppm")
            print(f"  encoder weight images -> {out}")

if __name__ == "__main__":
    main()
