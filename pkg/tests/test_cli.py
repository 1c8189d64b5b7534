import json
import math

import pytest

from plrvo.cli import main


def write_job(tmp_path, name="job.json", **overrides):
    doc = {
        "mechanism": "plrvo",
        "params": {"k": 141.06, "theta": 8.32e-4},
        "job": {"steps_T": 250, "sampling_rate_zeta": 0.01024, "model_dim_N": 500,
                "clip_C": 10.0, "delta": 2e-5, "lambda_max": 119},
    }
    doc.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestAccount:
    def test_output_shape(self, tmp_path, capsys):
        rc = main(["account", write_job(tmp_path), "--lambda-search", "coarse"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert set(out) == {"epsilon", "argmin_lambda", "per_step_alpha_at_argmin",
                            "mode", "lambda_search"}
        assert out["mode"] == "exact"
        assert out["epsilon"] > 0

    def test_curve_export(self, tmp_path, capsys):
        curve_path = tmp_path / "curve.csv"
        rc = main(["account", write_job(tmp_path), "--curve", str(curve_path)])
        assert rc == 0
        lines = curve_path.read_text().strip().split("\n")
        assert lines[0] == "lambda,alpha_per_step"
        assert len(lines) == 120  # header + effective cap of 119

    def test_zeta_zero_job_hits_conversion_floor(self, tmp_path, capsys):
        job = {"steps_T": 100, "sampling_rate_zeta": 0.0, "model_dim_N": 10,
               "clip_C": 1.0, "delta": 1e-5, "lambda_max": 64}
        rc = main(["account", write_job(tmp_path, job=job)])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        floor = min(
            math.log(l / (l + 1)) - (math.log(1e-5) + math.log(l + 1)) / l
            for l in range(1, 65))
        assert out["epsilon"] == pytest.approx(floor, rel=1e-12)
        assert out["argmin_lambda"] == 64

    def test_gaussian_and_laplace_mechanisms(self, tmp_path, capsys):
        for mech, params in [("gaussian", {"sigma": 1.5}), ("laplace", {"b": 2.0})]:
            rc = main(["account",
                       write_job(tmp_path, name=f"{mech}.json", mechanism=mech,
                                 params=params,
                                 job={"steps_T": 10, "sampling_rate_zeta": 0.1,
                                      "model_dim_N": 10, "clip_C": 1.0,
                                      "delta": 1e-5, "lambda_max": 32})])
            assert rc == 0
            assert json.loads(capsys.readouterr().out)["epsilon"] > 0

    def test_three_coordinate_job_matches_naive_oracle(self, tmp_path, capsys):
        # independent pipeline: extended-precision multivariate sums on the
        # majorization coordinates, then brute-force grid conversion
        import mpmath
        mpmath.mp.dps = 50
        k, theta, C, zeta, T, delta, lam_max = 25.0, 2e-3, 1.5, 0.2, 40, 1e-5, 12
        job = {"steps_T": T, "sampling_rate_zeta": zeta, "model_dim_N": 3,
               "clip_C": C, "delta": delta, "lambda_max": lam_max}
        rc = main(["account", write_job(tmp_path, params={"k": k, "theta": theta},
                                        job=job)])
        assert rc == 0
        got = json.loads(capsys.readouterr().out)["epsilon"]

        def kernel(x, eta):
            if eta in (0, 1):
                return mpmath.mpf(1)
            b1 = mpmath.mpf(eta) / (2 * eta - 1)
            b2 = mpmath.mpf(eta - 1) / (2 * eta - 1)
            return (b1 * (1 - (eta - 1) * x * theta) ** (-mpmath.mpf(k))
                    + b2 * (1 + eta * x * theta) ** (-mpmath.mpf(k)))

        best = math.inf
        for lam in range(1, lam_max + 1):
            alpha = mpmath.mpf(0)
            for i in (1, 2, 3):
                x = C * (mpmath.sqrt(i) - mpmath.sqrt(i - 1))
                inner = sum(mpmath.binomial(lam + 1, e)
                            * (1 - mpmath.mpf(zeta)) ** (lam + 1 - e)
                            * mpmath.mpf(zeta) ** e * kernel(x, e)
                            for e in range(lam + 2))
                alpha += mpmath.log(inner)
            term = float(T * alpha / lam + math.log(lam / (lam + 1))
                         - (math.log(delta) + math.log(lam + 1)) / lam)
            best = min(best, term)
        assert got == pytest.approx(best, rel=1e-10)

    def test_accelerated_mode_prints_error_estimate(self, tmp_path, capsys):
        job = {"steps_T": 100, "sampling_rate_zeta": 0.05, "model_dim_N": 20_000,
               "clip_C": 1.0, "delta": 1e-5, "lambda_max": 16}
        params = {"k": 50.0, "theta": 2e-4}
        rc = main(["account", write_job(tmp_path, job=job, params=params),
                   "--mode", "accelerated", "--lambda-search", "coarse"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["mode"] == "accelerated"
        assert "accel_error_estimate" in out


class TestExitCodes:
    def test_schema_error_unknown_key(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"mechanism": "plrvo", "params": {"k": 2, "theta": 0.1},
                                    "job": {}, "extra": 1}))
        assert main(["account", str(path)]) == 1
        assert "unknown keys" in capsys.readouterr().err

    def test_schema_error_bad_mechanism(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"mechanism": "cauchy", "params": {}, "job": {}}))
        assert main(["account", str(path)]) == 1

    def test_schema_error_missing_file(self):
        assert main(["account", "/nonexistent/job.json"]) == 1

    def test_mgf_domain_error_exit_2(self, tmp_path, capsys):
        # C * theta >= 1: no admissible moment order at all
        job = {"steps_T": 10, "sampling_rate_zeta": 0.1, "model_dim_N": 5,
               "clip_C": 10.0, "delta": 1e-5, "lambda_max": 8}
        rc = main(["account", write_job(tmp_path, params={"k": 2.0, "theta": 0.2},
                                        job=job)])
        assert rc == 2
        assert "admissible" in capsys.readouterr().err

    def test_infeasible_exit_3(self, tmp_path, capsys):
        rc = main(["optimize",
                   write_job(tmp_path,
                             job={"steps_T": 10_000, "sampling_rate_zeta": 0.5,
                                  "model_dim_N": 100, "clip_C": 1.0,
                                  "delta": 1e-5, "lambda_max": 16},
                             target={"epsilon_star": 1e-6, "delta_star": 1e-5},
                             optimizer={"clip_min": 0.5, "clip_max": 1.0})])
        assert rc == 3
        assert "infeasible" in capsys.readouterr().err


class TestSweep:
    def test_monotone_and_csv(self, tmp_path, capsys):
        out_path = tmp_path / "sweep.csv"
        job = {"steps_T": 1, "sampling_rate_zeta": 0.05, "model_dim_N": 100,
               "clip_C": 1.0, "delta": 1e-5, "lambda_max": 32}
        rc = main(["sweep-t", write_job(tmp_path, params={"k": 80.0, "theta": 4e-4},
                                        job=job),
                   "--t-values", "1,10,100,1000", "--out", str(out_path)])
        assert rc == 0
        lines = out_path.read_text().strip().split("\n")
        assert lines[0] == "T,epsilon"
        eps = [float(line.split(",")[1]) for line in lines[1:]]
        assert eps == sorted(eps) and eps[0] < eps[-1]

    def test_clip_ordering(self, tmp_path):
        # pointwise domination of the epsilon curve in the clip threshold
        results = {}
        for C in (0.5, 1.0):
            job = {"steps_T": 1, "sampling_rate_zeta": 0.05, "model_dim_N": 100,
                   "clip_C": C, "delta": 1e-5, "lambda_max": 32}
            out_path = tmp_path / f"sweep_{C}.csv"
            assert main(["sweep-t",
                         write_job(tmp_path, name=f"j{C}.json",
                                   params={"k": 80.0, "theta": 4e-4}, job=job),
                         "--t-values", "1,10,100", "--out", str(out_path)]) == 0
            lines = out_path.read_text().strip().split("\n")[1:]
            results[C] = [float(line.split(",")[1]) for line in lines]
        assert all(a <= b for a, b in zip(results[0.5], results[1.0]))


class TestOptimizeCommand:
    def test_round_trip_with_account(self, tmp_path, capsys):
        job = {"steps_T": 100, "sampling_rate_zeta": 0.05, "model_dim_N": 200,
               "clip_C": 1.0, "delta": 1e-5, "lambda_max": 16}
        rc = main(["optimize",
                   write_job(tmp_path, job=job,
                             target={"epsilon_star": 2.0, "delta_star": 1e-5},
                             optimizer={"clip_min": 0.5, "clip_max": 1.0})])
        assert rc == 0
        result = json.loads(capsys.readouterr().out)
        assert result["constraint_report"]["c2"]["passed"]
        # re-verify through cmd_account with the solved parameters
        job["clip_C"] = result["C_star"]
        rc = main(["account",
                   write_job(tmp_path, name="verify.json", job=job,
                             params={"k": result["k_star"], "theta": result["theta_star"]})])
        assert rc == 0
        eps = json.loads(capsys.readouterr().out)["epsilon"]
        assert eps == result["achieved_epsilon"]

    def test_missing_sections_rejected(self, tmp_path):
        assert main(["optimize", write_job(tmp_path)]) == 1


class TestSampleAndDistortion:
    def test_sample_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            rc = main(["sample", "--mechanism", "plrvo", "--k", "10", "--theta", "0.1",
                       "--n", "4", "--draws", "8", "--seed", "33", "--out", str(path)])
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()
        header = a.read_text().split("\n")[0]
        assert header == "draw_index,scale_b,coord_0,coord_1,coord_2,coord_3"

    def test_sample_empirical_distortion(self, tmp_path, capsys):
        rc = main(["sample", "--mechanism", "plrvo", "--k", "10", "--theta", "0.1",
                   "--n", "20", "--draws", "5000", "--seed", "1"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().split("\n")[1:]
        import numpy as np
        coords = np.array([[float(v) for v in line.split(",")[2:]] for line in lines])
        assert np.abs(coords).mean() == pytest.approx(1.0 / (9 * 0.1), rel=0.05)

    def test_gaussian_sample_mean_abs(self, capsys):
        rc = main(["sample", "--mechanism", "gaussian", "--sigma-eff", "2.0",
                   "--n", "100", "--draws", "500", "--seed", "2"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().split("\n")[1:]
        import numpy as np
        coords = np.array([[float(v) for v in line.split(",")[2:]] for line in lines])
        n = coords.size
        se = 2.0 * math.sqrt(1 - 2 / math.pi) / math.sqrt(n)
        assert abs(np.abs(coords).mean() - 2.0 * math.sqrt(2 / math.pi)) <= 4 * se

    def test_distortion_self_test(self, capsys):
        assert main(["distortion", "--table2"]) == 0
        assert json.loads(capsys.readouterr().out)["all_passed"]

    def test_distortion_csv_row(self, capsys):
        rc = main(["distortion", "--mechanism", "plrvo", "--k", "5", "--theta", "0.1",
                   "--csv"])
        assert rc == 0
        out = capsys.readouterr().out.strip().split("\n")
        assert out[0] == "mechanism,l1_per_coord,finite"
        assert out[1].startswith("plrvo,2.5")


class TestThreads:
    def test_env_var_mirrors_flag(self, monkeypatch):
        from plrvo.accountant import resolve_threads
        monkeypatch.setenv("PLRV_THREADS", "3")
        assert resolve_threads(None) == 3
        assert resolve_threads(7) == 7  # explicit flag wins
        monkeypatch.delenv("PLRV_THREADS")
        assert resolve_threads(None) >= 1


class TestTrainDemo:
    def test_ledger_deterministic_across_threads(self, capsys):
        flags = ["train-demo", "--mechanism", "gaussian", "--epsilon", "2.0",
                 "--epochs", "1", "--batch", "25", "--examples", "100",
                 "--clip", "1.0", "--dim", "2", "--seed", "9"]
        assert main(["--threads", "1"] + flags) == 0
        first = capsys.readouterr().out
        assert main(["--threads", "4"] + flags) == 0
        second = capsys.readouterr().out
        assert first == second
        ledger = json.loads(first)
        assert ledger["epsilon_report"]["epsilon"] <= 2.0
        assert ledger["seed"] == 9
