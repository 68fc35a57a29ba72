"""Freeze independent reference values used by the test-suite.

Sources are deliberately separate from the package code:
  * bivariate normal cdf by 30-digit mpmath quadrature of the conditional form;
  * independence MLE on the arthritis file from statsmodels' OrderedModel;
  * Gumbel copula cluster probabilities by mpmath inclusion-exclusion.

Run from the repository root:  python3 scripts/make_oracles.py
"""
import json
from pathlib import Path

import mpmath as mp
import numpy as np

mp.mp.dps = 30
ROOT = Path(__file__).resolve().parents[1]


def bvn_mp(a, b, r):
    a, b, r = mp.mpf(a), mp.mpf(b), mp.mpf(r)
    s = mp.sqrt(1 - r * r)
    f = lambda x: mp.npdf(x) * mp.ncdf((b - r * x) / s)
    lo = -mp.inf
    return mp.quad(f, [lo, min(a, 0), a]) if a > 0 else mp.quad(f, [lo, a])


def bvn_points():
    rng = np.random.default_rng(11)
    pts = [(0.0, 0.0, r) for r in (-0.9, -0.5, 0.0, 0.5, 0.9)]
    for _ in range(25):
        a, b = rng.normal(0, 2, 2)
        r = rng.uniform(-0.99, 0.99)
        pts.append((float(a), float(b), float(r)))
    pts += [(-6.5, 1.0, 0.3), (7.0, 7.5, -0.95), (-3.0, -3.2, 0.999), (2.0, -2.0, -0.999)]
    return [{"a": a, "b": b, "rho": r, "p": float(bvn_mp(a, b, r))} for a, b, r in pts]


def arthritis_mle():
    import pandas as pd
    from statsmodels.miscmodels.ordinal_model import OrderedModel
    df = pd.read_csv(ROOT / "data" / "arthritis.csv").dropna(subset=["y"])
    X = pd.DataFrame({
        "time[2,3]": (df.time >= 3).astype(float), "time[3]": (df.time >= 5).astype(float),
        "trt": df.trt.astype(float),
        "baseline[2,3,4,5]": (df.baseline >= 2).astype(float), "baseline[3,4,5]": (df.baseline >= 3).astype(float),
        "baseline[4,5]": (df.baseline >= 4).astype(float), "baseline[5]": (df.baseline >= 5).astype(float),
        "age": df.age.astype(float),
    })
    out = {}
    for link, distr in (("logit", "logit"), ("probit", "probit")):
        mod = OrderedModel(df.y.astype(int), X, distr=distr)
        res = mod.fit(method="bfgs", disp=False, maxiter=5000)
        res = mod.fit(start_params=res.params.values, method="newton", disp=False, maxiter=200)
        assert res.mle_retvals["converged"], link
        p = X.shape[1]
        # statsmodels: P(Y <= j) = F(c_j - x'b), thresholds stored as c_1 and log increments
        beta = -res.params.values[:p]
        cuts = res.model.transform_threshold_params(res.params.values)[1:-1]
        out[link] = {"names": list(X.columns), "beta": beta.tolist(), "alpha": cuts.tolist(),
                     "loglik": float(res.llf)}
    return out


def gumbel_cells():
    theta = mp.mpf(2.5)
    C = lambda u: mp.e ** (-(sum((-mp.log(x)) ** theta for x in u)) ** (1 / theta)) if min(u) > 0 else mp.mpf(0)
    u_hi = [mp.mpf("0.7"), mp.mpf("0.4"), mp.mpf("0.9")]
    u_lo = [mp.mpf("0.2"), mp.mpf("0.0"), mp.mpf("0.5")]
    tot = mp.mpf(0)
    for bits in range(8):
        pick = [u_lo[j] if bits >> j & 1 else u_hi[j] for j in range(3)]
        tot += (-1) ** bin(bits).count("1") * C(pick)
    return {"theta": 2.5, "u_hi": [0.7, 0.4, 0.9], "u_lo": [0.2, 0.0, 0.5], "p": float(tot)}


if __name__ == "__main__":
    doc = {"bvn": bvn_points(), "arthritis_independence": arthritis_mle(), "gumbel_box": gumbel_cells()}
    path = ROOT / "tests" / "data" / "oracles.json"
    path.write_text(json.dumps(doc, indent=1))
    print(f"wrote {path}")
