#!/usr/bin/env python3
"""Smoke test for the diffusion_hmm_py extension module.

Builds nothing itself: expects `cargo build -p diffusion-hmm-py --release`
to have produced the cdylib under target/, copies it next to this script
under the importable name, then exercises the main bindings.
"""

import pathlib
import shutil
import sys

HERE = pathlib.Path(__file__).resolve().parent
ROOT = HERE.parent


def locate_extension() -> pathlib.Path:
    candidates = [
        ROOT / "target" / "release" / "libdiffusion_hmm_py.so",
        ROOT / "target" / "release" / "libdiffusion_hmm_py.dylib",
        ROOT / "target" / "release" / "diffusion_hmm_py.dll",
        ROOT / "target" / "debug" / "libdiffusion_hmm_py.so",
    ]
    for path in candidates:
        if path.exists():
            return path
    sys.exit(
        "extension not found; run `cargo build -p diffusion-hmm-py --release` first"
    )


def import_module():
    src = locate_extension()
    suffix = ".pyd" if src.suffix == ".dll" else ".so"
    dst = HERE / f"diffusion_hmm_py{suffix}"
    if not dst.exists() or src.stat().st_mtime > dst.stat().st_mtime:
        shutil.copy2(src, dst)
    sys.path.insert(0, str(HERE))
    import diffusion_hmm_py

    return diffusion_hmm_py


def main() -> None:
    m = import_module()

    transition = m.TransitionModel.bsc(0.1)
    assert transition.hypothesis_count == 2
    assert abs(transition.kappa - 0.8) < 1e-12
    pi = transition.stationary()
    assert abs(sum(pi) - 1.0) < 1e-12 and abs(pi[0] - 0.5) < 1e-12

    like = m.LikelihoodModel.gaussian([-1.0, 1.0], 1.0)
    # Log-likelihood ratio of a Gaussian pair at x equals 2x here.
    llr = like.log_likelihood(1, 0.7) - like.log_likelihood(0, 0.7)
    assert abs(llr - 1.4) < 1e-12, llr

    net = m.Network.metropolis(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])
    assert net.agents == 5
    assert 0.0 < net.rho2 < 1.0
    row = sum(net.weight(l, 0) for l in range(5))
    assert abs(row - 1.0) < 1e-12

    scenario = m.Scenario(transition, like, net)
    assert scenario.agents == 5

    theta, maps, errors, kl = scenario.simulate("dhs", 20, seed=3, gamma=5.0)
    assert len(theta) == 21 and len(maps) == 20 and len(maps[0]) == 5
    assert all(t in (0, 1) for t in theta)
    assert all(isinstance(e, bool) for e in errors[0])
    assert all(k >= -1e-12 for row in kl for k in row)

    # Identical seeds give identical trajectories.
    again = scenario.simulate("dhs", 20, seed=3, gamma=5.0)
    assert again[0] == theta and again[1] == maps

    risks = scenario.risks("dhs", runs=50, horizon=10, seed=1, gamma=5.0)
    assert len(risks) == 10 and all(r >= 0.0 for row in risks for r in row)

    probs = scenario.error_probabilities("asl", runs=50, horizon=10, seed=1, delta=0.1)
    assert all(0.0 <= p <= 1.0 for row in probs for p in row)

    bounded = m.LikelihoodModel.truncated_gaussian([0.0, 1.5], 1.0, -1.0, 2.0)
    bounded_scenario = m.Scenario(transition, bounded, net)
    post, prior = bounded_scenario.risk_bounds(5.0)
    assert post > prior > 0.0

    report = m.counterexample(runs=5000, seed=41)
    assert abs(report["analytic_ratio"] - 0.6) < 1e-12
    assert report["runs"] == 5000

    print("smoke test passed")


if __name__ == "__main__":
    main()
