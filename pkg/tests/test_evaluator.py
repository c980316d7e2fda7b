import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempdistill.data import Dataset
from tempdistill.evaluator import (
    dump_logits,
    early_exit_eval,
    early_exit_grid,
    eval_at,
    firing_rate_stats,
    full_range_sweep,
    write_early_exit_csv,
    write_firing_rates_csv,
    write_sweep_csv,
)
from tempdistill.snn import LifConfig, SnnNetwork
from tempdistill.tensor import ContractError
from tempdistill.trainer import predict_accuracy


def random_data(m=300, d=2, n=3, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(m, d)) * 2, rng.integers(0, n, m), n)


def random_net(seed=0, sizes=(2, 32, 3), lif=None):
    rng = np.random.default_rng(seed)
    net = SnnNetwork.init(list(sizes), rng, lif)
    for i in range(1, len(net.params), 2):
        net.params[i] = rng.uniform(-0.5, 1.0, net.params[i].shape)
    return net


def memorizer(n=4):
    # One-hot inputs drive their own hidden unit above threshold each step;
    # the identity readout then votes for the input's class.
    eye = np.eye(n)
    net = SnnNetwork([n, n, n], [2.0 * eye, np.zeros(n), eye, np.zeros(n)])
    labels = np.arange(40) % n
    return net, Dataset(eye[labels], labels, n)


class TestEvalAt:
    def test_memorizer_is_perfect(self):
        net, data = memorizer()
        assert eval_at(net, data, 4) == 1.0

    def test_random_net_near_chance(self):
        rng = np.random.default_rng(1)
        data = Dataset(rng.normal(size=(3000, 2)), rng.integers(0, 4, 3000), 4)
        net = random_net(2, (2, 16, 4))
        assert abs(eval_at(net, data, 3) - 0.25) < 0.05

    @pytest.mark.parametrize("T_k", [0, 7])
    def test_range(self, T_k):
        with pytest.raises(ContractError):
            eval_at(random_net(), random_data(), T_k, horizon=6)


class TestSweep:
    def test_matches_eval_at_and_predict(self):
        net, data = random_net(3), random_data()
        sweep = full_range_sweep(net, data, 6)
        assert list(sweep.accuracy) == [1, 2, 3, 4, 5, 6]
        for k, acc in sweep.accuracy.items():
            assert acc == eval_at(net, data, k)
            assert 0.0 <= acc <= 1.0
        assert sweep.accuracy[6] == predict_accuracy(net, data, 6)

    def test_csv(self, tmp_path):
        net, data = random_net(), random_data()
        write_sweep_csv([full_range_sweep(net, data, 3)], tmp_path / "s.csv")
        rows = list(csv.reader(open(tmp_path / "s.csv")))
        assert rows[0] == ["trained_T", "T1", "T2", "T3"] and rows[1][0] == "3"


class TestEarlyExit:
    def test_tiny_threshold_exits_at_one(self):
        net, data = random_net(4), random_data()
        r = early_exit_eval(net, data, 1e-9, 6)
        assert r.avg_timesteps == 1.0
        assert r.accuracy == eval_at(net, data, 1)

    def test_threshold_one(self):
        net, data = random_net(5), random_data()
        r = early_exit_eval(net, data, 1.0, 6)
        assert 1.0 <= r.avg_timesteps <= 6.0
        assert r.accuracy == pytest.approx(eval_at(net, data, 6), abs=0.05)

    @pytest.mark.parametrize("cs", [0.0, -0.1, 1.0 + 1e-12])
    def test_threshold_range(self, cs):
        with pytest.raises(ContractError):
            early_exit_eval(random_net(), random_data(), cs, 4)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_avg_steps_non_decreasing(self, seed):
        net, data = random_net(seed), random_data(100, seed=seed)
        grid = [0.4, 0.5, 0.7, 0.8, 0.9, 0.99, 0.999, 1.0]
        res = early_exit_grid(net, data, grid, 6)
        steps = [r.avg_timesteps for r in res]
        assert all(a <= b for a, b in zip(steps, steps[1:]))
        assert all(1.0 <= s <= 6.0 for s in steps)

    def test_csv(self, tmp_path):
        res = early_exit_grid(random_net(), random_data(), [0.7, 0.9], 4)
        write_early_exit_csv(res, tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[0] == "cs,acc,T_avg" and lines[1].startswith("0.7,")


class TestFiringRates:
    def test_silent(self):
        net = random_net(lif=LifConfig(threshold=1e6))
        fr = firing_rate_stats(net, random_data(), 5)
        assert fr.overall == 0.0 and not fr.per_timestep.any()

    def test_saturated(self):
        net = SnnNetwork([2, 5, 5, 3], [np.zeros((2, 5)), np.full(5, 2.0), np.zeros((5, 5)),
                                        np.full(5, 2.0), np.zeros((5, 3)), np.zeros(3)])
        fr = firing_rate_stats(net, random_data(), 4)
        assert fr.overall == 1.0 and (fr.per_timestep == 1.0).all()

    def test_range_and_csv(self, tmp_path):
        fr = firing_rate_stats(random_net(7), random_data(), 6)
        assert len(fr.per_timestep) == 6 and 0.0 <= fr.overall <= 1.0
        write_firing_rates_csv(fr, tmp_path / "f.csv")
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0] == "t,rate" and lines[-1].startswith("mean,") and len(lines) == 8


class TestDumpLogits:
    def test_counts(self, tmp_path):
        net = random_net(sizes=(2, 4, 2))
        dump_logits(net, random_data(2, n=2), 2, tmp_path / "l.csv")
        lines = (tmp_path / "l.csv").read_text().splitlines()
        assert lines[0] == "sample_id,label,t,z_1,z_2" and len(lines) == 1 + 6

    def test_empty(self, tmp_path):
        dump_logits(random_net(), Dataset(np.zeros((0, 2)), np.zeros(0), 3), 3, tmp_path / "l.csv")
        assert (tmp_path / "l.csv").read_text() == "sample_id,label,t,z_1,z_2,z_3\n"

    def test_ensemble_rows_are_means(self, tmp_path):
        data = random_data(25)
        dump_logits(random_net(9), data, 5, tmp_path / "l.csv")
        steps, ens = {}, {}
        with open(tmp_path / "l.csv") as fh:
            for row in csv.DictReader(fh):
                z = [float(row[f"z_{j}"]) for j in (1, 2, 3)]
                sid = int(row["sample_id"])
                assert int(row["label"]) == data.labels[sid]
                if row["t"] == "ens":
                    ens[sid] = z
                else:
                    steps.setdefault(sid, []).append(z)
        assert sorted(ens) == list(range(25))
        for sid, rows in steps.items():
            assert len(rows) == 5
            np.testing.assert_allclose(np.mean(rows, axis=0), ens[sid], rtol=0, atol=1e-9)

    def test_io_failure(self, tmp_path):
        with pytest.raises(OSError):
            dump_logits(random_net(), random_data(3), 2, tmp_path / "missing" / "l.csv")
