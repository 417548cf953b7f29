import numpy as np
import pytest
import torch

from oospa import datagen, linalg, model as model_mod
from oospa.chem import Geometry
from oospa.errors import InvalidInput
from oospa.losses import LossWeights, batch_loss, occupied_columns
from oospa.model import (
    FeatureTensors,
    GraphBatch,
    ModelConfig,
    OrbitalModel,
    featurize_for_model,
    forward_geometry,
    load_checkpoint,
    save_checkpoint,
    torch_expm_skew,
    unpack_upper_torch,
)

from conftest import TINY_MODEL
from oracles import random_rotation, random_skew, rigid_motion


def random_case(n, seed):
    geom = datagen.sample_geometry("random_3d", n, seed=seed)
    return geom, datagen.min_weight_matching(geom)


def make_batch_refs(cases, rng):
    """Synthetic targets for gradient checks."""
    refs = []
    for geom, matching in cases:
        n = geom.n_atoms
        a = random_skew(n, 0.8, rng)
        refs.append(
            {
                "upper": torch.as_tensor(linalg.pack_upper(a)),
                "m": torch.as_tensor(linalg.expm_antisymmetric(a)),
                "occ": occupied_columns(matching),
            }
        )
    return refs


class TestTorchExpm:
    def test_matches_numpy_implementation(self, rng):
        for n in (2, 6, 10):
            a = random_skew(n, 2.0, rng)
            ours = torch_expm_skew(torch.as_tensor(a)).numpy()
            assert np.max(np.abs(ours - linalg.expm_antisymmetric(a))) < 1e-13

    def test_unpack_round_trip(self, rng):
        a = random_skew(5, 1.0, rng)
        packed = torch.as_tensor(linalg.pack_upper(a))
        assert np.array_equal(unpack_upper_torch(packed, 5).numpy(), a)


class TestInit:
    def test_same_seed_bit_identical(self):
        m1 = OrbitalModel(TINY_MODEL)
        m2 = OrbitalModel(TINY_MODEL)
        for (n1, p1), (n2, p2) in zip(m1.named_parameters(), m2.named_parameters()):
            assert n1 == n2
            assert torch.equal(p1, p2)

    def test_different_seed_differs(self):
        from dataclasses import replace

        m1 = OrbitalModel(TINY_MODEL)
        m2 = OrbitalModel(replace(TINY_MODEL, seed=8))
        assert any(
            not torch.equal(p1, p2)
            for (_, p1), (_, p2) in zip(m1.named_parameters(), m2.named_parameters())
        )

    def test_manifest_consistent_shapes(self):
        m = OrbitalModel(TINY_MODEL)
        manifest = m.manifest()
        assert len(manifest) == sum(1 for _ in m.named_parameters())
        params = dict(m.named_parameters())
        for name, shape in manifest:
            assert tuple(params[name].shape) == shape

    def test_biases_zero_gains_one(self):
        m = OrbitalModel(TINY_MODEL)
        for name, p in m.named_parameters():
            if name.endswith("bias"):
                assert torch.all(p == 0.0)


class TestForward:
    def test_output_sizes_across_n(self):
        m = OrbitalModel(TINY_MODEL)
        for n, expected in ((4, 6), (8, 28), (12, 66)):
            geom, matching = random_case(n, seed=n)
            a_upper, m_pred = forward_geometry(m, geom, matching)
            assert a_upper.shape == (expected,)
            assert m_pred.shape == (n, n)
            assert np.max(np.abs(m_pred.T @ m_pred - np.eye(n))) < 1e-10

    def test_zero_readout_gives_identity(self):
        m = OrbitalModel(TINY_MODEL)
        with torch.no_grad():
            m.readout[-1].weight.zero_()
            m.readout[-1].bias.zero_()
        geom, matching = random_case(6, seed=2)
        a_upper, m_pred = forward_geometry(m, geom, matching)
        assert np.all(a_upper == 0.0)
        assert np.allclose(m_pred, np.eye(6), atol=1e-15)

    def test_rigid_motion_invariance(self, rng):
        m = OrbitalModel(TINY_MODEL)
        geom, matching = random_case(6, seed=5)
        base, _ = forward_geometry(m, geom, matching)
        for _ in range(5):
            moved = Geometry(rigid_motion(geom.coords, rng), geom.elements)
            out, _ = forward_geometry(m, moved, matching)
            assert np.max(np.abs(out - base)) < 1e-9

    def test_deterministic_forward(self):
        m = OrbitalModel(TINY_MODEL)
        geom, matching = random_case(6, seed=9)
        a1, m1 = forward_geometry(m, geom, matching)
        a2, m2 = forward_geometry(m, geom, matching)
        assert np.array_equal(a1, a2)
        assert np.array_equal(m1, m2)


class TestGradients:
    def _loss_for(self, m, cases, refs, weights):
        batch = GraphBatch([featurize_for_model(g, e, m.cfg) for g, e in cases])
        uppers, ms = batch.forward(m)
        loss, _ = batch_loss(
            uppers,
            ms,
            [r["upper"] for r in refs],
            [r["m"] for r in refs],
            weights,
            [r["occ"] for r in refs],
        )
        return loss

    def test_finite_difference_check(self, rng):
        torch.set_num_threads(1)
        m = OrbitalModel(TINY_MODEL)
        cases = [random_case(4, seed=21), random_case(4, seed=22)]
        refs = make_batch_refs(cases, rng)
        weights = LossWeights(lambda1=0.1, lambda2=0.1, huber_delta=1.0)

        loss = self._loss_for(m, cases, refs, weights)
        m.zero_grad()
        loss.backward()

        h = 1e-6
        for name, param in m.named_parameters():
            grad = param.grad.detach().clone()
            flat = param.detach().view(-1)
            # probe a few entries of every parameter group
            probe = range(flat.numel()) if flat.numel() <= 6 else [0, flat.numel() // 2, flat.numel() - 1]
            for idx in probe:
                original = float(flat[idx])
                with torch.no_grad():
                    flat[idx] = original + h
                up = float(self._loss_for(m, cases, refs, weights))
                with torch.no_grad():
                    flat[idx] = original - h
                down = float(self._loss_for(m, cases, refs, weights))
                with torch.no_grad():
                    flat[idx] = original
                fd = (up - down) / (2 * h)
                an = float(grad.view(-1)[idx])
                scale = max(abs(fd), abs(an), 1e-6)
                assert abs(fd - an) / scale < 1e-4, f"{name}[{idx}]: fd {fd} vs autograd {an}"

    def test_zero_gauge_weights_match_huber_only(self, rng):
        m = OrbitalModel(TINY_MODEL)
        cases = [random_case(4, seed=31)]
        refs = make_batch_refs(cases, rng)
        zeroed = LossWeights(lambda1=0.0, lambda2=0.0, huber_delta=1.0)

        loss = self._loss_for(m, cases, refs, zeroed)
        m.zero_grad()
        loss.backward()
        grads_zeroed = {n: p.grad.detach().clone() for n, p in m.named_parameters()}

        from oospa.losses import huber_loss

        batch = GraphBatch([featurize_for_model(g, e, m.cfg) for g, e in cases])
        uppers, _ = batch.forward(m)
        huber_only = huber_loss(torch.cat(uppers), torch.cat([r["upper"] for r in refs]), 1.0)
        m.zero_grad()
        huber_only.backward()
        for n, p in m.named_parameters():
            assert torch.equal(p.grad, grads_zeroed[n]), n

    def test_duplicated_sample_mean_reduction(self, rng):
        m = OrbitalModel(TINY_MODEL)
        case = random_case(4, seed=41)
        refs1 = make_batch_refs([case], rng)
        refs2 = [refs1[0], refs1[0]]
        weights = LossWeights()

        loss_single = self._loss_for(m, [case], refs1, weights)
        m.zero_grad()
        loss_single.backward()
        single = {n: p.grad.detach().clone() for n, p in m.named_parameters()}

        loss_double = self._loss_for(m, [case, case], refs2, weights)
        m.zero_grad()
        loss_double.backward()
        # mean reduction: doubling the batch doubles every per-entry term and
        # halves every weight, so the gradient matches the single sample up
        # to the accumulation order of backward
        for n, p in m.named_parameters():
            ref_grad = single[n]
            scale = float(ref_grad.abs().max()) + 1e-30
            assert float((p.grad - ref_grad).abs().max()) / scale < 1e-12, n


class TestSizeTransfer:
    def test_same_params_evaluate_everywhere(self):
        m = OrbitalModel(TINY_MODEL)
        for n in (4, 6, 8, 10, 12):
            geom, matching = random_case(n, seed=50 + n)
            a_upper, m_pred = forward_geometry(m, geom, matching)
            assert np.all(np.isfinite(a_upper)) and np.all(np.isfinite(m_pred))
            assert np.max(np.abs(m_pred.T @ m_pred - np.eye(n))) < 1e-10


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        m = OrbitalModel(TINY_MODEL)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, m, extra={"note": "test"})
        loaded, extra = load_checkpoint(path)
        assert extra["note"] == "test"
        assert loaded.cfg == m.cfg
        for (n1, p1), (n2, p2) in zip(m.named_parameters(), loaded.named_parameters()):
            assert n1 == n2 and torch.equal(p1, p2)

    def test_save_load_save_identical_bytes(self, tmp_path):
        m = OrbitalModel(TINY_MODEL)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(p1, m, extra={})
        loaded, _ = load_checkpoint(p1)
        save_checkpoint(p2, loaded, extra={})
        assert p1.read_bytes() == p2.read_bytes()

    def test_corruption_detected(self, tmp_path):
        m = OrbitalModel(TINY_MODEL)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, m)
        raw = bytearray(path.read_bytes())
        truncated = tmp_path / "broken.ckpt"
        truncated.write_bytes(bytes(raw[:-16]))
        with pytest.raises(InvalidInput):
            load_checkpoint(truncated)
        not_ckpt = tmp_path / "junk.ckpt"
        not_ckpt.write_bytes(b"definitely not a checkpoint")
        with pytest.raises(InvalidInput):
            load_checkpoint(not_ckpt)
