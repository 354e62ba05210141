"""Smoke test for the s3gd extension module.

Build and install first:  maturin develop -m crates/py/Cargo.toml
"""

import json
import math

import s3gd


def main():
    assert s3gd.top_k_sign([0.1, -3.0, 2.0, -0.5], 2) == [(1, -1), (2, 1)]
    support, rho = s3gd.top_k_select([0.1, -3.0, 2.0, -0.5], 2)
    assert support == [1, 2] and rho == 1.25

    msg, e_next, g = s3gd.error_feedback_step([1.0, -2.0, 0.5], [0.0, 0.0, 1.0], 1.0, 1)
    assert msg == [(1, -1)] and e_next == [1.0, 0.0, 1.5] and g == [1.0, -2.0, 1.5]

    mem = s3gd.ErrorMemory(3)
    assert mem.step([1.0, -2.0, 0.5], 1.0, 1) == [(1, -1)]
    assert mem.values == [1.0, 0.0, 0.5] and len(mem) == 3

    ternary, union, tallies = s3gd.majority_vote([[(0, 1)], [(0, -1)], [(0, -1), (2, 1)]], 3)
    assert ternary == [-1, 0, 1] and union == [0, 2] and tallies == [-1, 0, 1]

    data, bits = s3gd.encode_sparse_sign(8, [(0, 1), (5, -1)])
    assert bytes(data) == bytes([0b00100001, 0b10100000]) and bits == 12
    assert s3gd.decode_sparse_sign(data, bits, 8) == [(0, 1), (5, -1)]
    try:
        s3gd.decode_sparse_sign(data, bits - 1, 8)
    except ValueError:
        pass
    else:
        raise AssertionError("truncated stream accepted")

    assert s3gd.alpha(3, 0.5) == 0.875
    assert abs(s3gd.vote_error_exact(0.1, 3) - 0.028) < 1e-12
    assert abs(s3gd.gamma_star(8, 1.0, 1.0, 16.0, 1.0) - 0.5 ** (2 / 3)) < 1e-12
    assert s3gd.convergence_bound_topk(4, 1.0, 16.0, 1.0, 1.0, 100) == 0.7
    assert json.loads(s3gd.theory_eval("beta", '{"M": 4, "gamma": 1.0}'))["value"] == 0.5
    assert s3gd.total_cost_bits("SIGNSGD_MV", 3, 10, 10, 2) == 120.0

    cfg = {
        "algorithm": "S3GD_MV", "M": 4, "gamma": 0.25, "T": 50, "learning_rate": 0.01, "seed": 1,
        "model": {"kind": "quadratic", "dim": 16, "noise_std": 0.5},
    }
    out = json.loads(s3gd.run_experiment(json.dumps(cfg)))
    assert len(out["rounds"]) == 50 and out["K"] == 4
    assert out["final"]["train_loss"] < out["rounds"][0]["train_loss"]
    assert math.isclose(out["cumulative_bits"], out["rounds"][-1]["cumulative_bits"])
    print("s3gd smoke test passed")


if __name__ == "__main__":
    main()
