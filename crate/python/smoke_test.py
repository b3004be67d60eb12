"""Quick check that the extension imports and its main entry points run."""

import math

import gepnet_py as g


def main():
    print("gepnet", g.version())

    rho, eps = g.constants("tanh")
    assert abs(rho - 0.6057055096) < 1e-8, rho
    assert abs(eps - 0.0274153260) < 1e-8, eps

    rho_id, eps_id = g.constants("identity")
    assert abs(rho_id - 1.0) < 1e-12 and abs(eps_id) < 1e-12

    m = g.Model(d=8, p=8, n=4, activation="tanh", readout="tanh", delta=0.5)
    assert abs(m.rho - rho) < 1e-12
    assert abs(m.kappa - g.kappa(8, 8, 4)) < 1e-15
    print(m)

    ds = g.gen_dataset(m, t=0.5, seed=7)
    assert len(ds) == 4 and len(ds.x) == 4 and len(ds.x[0]) == 8
    again = g.gen_dataset(m, t=0.5, seed=7)
    assert ds.y == again.y, "same seed must give the same dataset"
    assert ds.at_time(m, 0.5).y == ds.y

    fe = g.free_entropy(m, t=0.0, n_outer=20, m=2000, seed=1)
    assert math.isfinite(fe.value) and fe.stderr > 0
    print("free entropy", fe)

    null = g.Model(d=4, p=4, n=2, readout="zero", delta=0.3)
    ge = g.gen_error(null, t=0.0, n_outer=10, n_test=5, m=500, seed=3)
    assert abs(ge.value - 0.3) < 1e-12, ge
    print("null generalization error", ge)

    try:
        g.normalize_config("seed = 1\n[model]\nactivation = tanh\n")
    except ValueError as e:
        assert "line" in str(e), e
    else:
        raise AssertionError("missing keys must be rejected")

    print("smoke test passed")


if __name__ == "__main__":
    main()
