"""Acceptance gate: one test per headline criterion, each printing a single
pass/fail line with the tolerance it was checked at.
"""
import base64
import contextlib
import itertools
import json
import math
import time

import pytest
import torch

import pixelman.sampler as sampler_mod
from pixelman.attention import (AttentionDirectives, effective_leak_mask,
                                extract_sim_mask, masked_softmax)
from pixelman.backend import ToyBackend
from pixelman.bench import PSNR_CAP_DB, load_manifest, region_psnr, run_benchmark
from pixelman.guidance import EnergyConfig, energy
from pixelman.masks import EditTransform, derive_mask_set, make_manipulated_image
from pixelman.sampler import EditRequest, SamplerConfig, blend_step, run_edit
from pixelman.schedule import ScheduleConfig, build_schedule, fdp, rgp_predict_x0

from conftest import block_image
from test_bench import write_fixture_set


@contextlib.contextmanager
def criterion(name: str):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        print(f"[FAIL] {name}: {exc}")
        raise
    print(f"[PASS] {name} ({time.perf_counter() - start:.2f}s)")


def standard_request(image, dx=24, dy=24):
    mask = torch.zeros(64, 64, dtype=torch.bool)
    mask[8:24, 8:24] = True
    return EditRequest(task="move", image=image, object_mask=mask, dx=dx, dy=dy)


def test_fdp_rgp_roundtrip():
    with criterion("FDP/RGP roundtrip, 100 triples per T in {8,16,50}, "
                   "relative error < 1e-6, runtime < 5 s"):
        start = time.perf_counter()
        gen = torch.Generator().manual_seed(0)
        for T in (8, 16, 50):
            sched = build_schedule(ScheduleConfig(inference_steps=T))
            for _ in range(100):
                t = int(torch.randint(1, T + 1, (1,), generator=gen))
                z0 = torch.randn(4, 8, 8, generator=gen)
                eps = torch.randn(4, 8, 8, generator=gen)
                back = rgp_predict_x0(fdp(z0, eps, t, sched), eps, t, sched)
                rel = float((back - z0).norm() / z0.norm())
                assert rel < 1e-6, f"T={T} t={t} rel={rel:.2e}"
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"runtime {elapsed:.2f}s"


def test_identity_edit_consistency(monkeypatch):
    with criterion("identity edit: z0_out == encode(source) exactly at every "
                   "step, decoded PSNR >= 60 dB, runtime < 10 s"):
        start = time.perf_counter()
        image = block_image()
        backend = ToyBackend.from_image(image)
        z0_src = backend.encode(image)

        step_outputs = []
        real_blend = blend_step

        def spying_blend(*args, **kwargs):
            out = real_blend(*args, **kwargs)
            step_outputs.append(out.detach().clone())
            return out

        monkeypatch.setattr(sampler_mod, "blend_step", spying_blend)
        cfg = SamplerConfig(steps=16, guidance=EnergyConfig(enabled=False))
        report = run_edit(standard_request(image, 0, 0), cfg, backend=backend)

        assert len(step_outputs) == 16
        for i, z0_out in enumerate(step_outputs):
            assert torch.equal(z0_out, z0_src), f"step index {i} not exact"
        full = torch.ones(64, 64, dtype=torch.bool)
        psnr = region_psnr(report.output, image, full)
        assert psnr >= 60.0, f"decoded PSNR {psnr:.1f} dB"
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"runtime {elapsed:.2f}s"


def test_anchoring_inside_m_new(monkeypatch):
    with criterion("anchoring: hard masks, t > 2 => latents inside m_new "
                   "equal z0_man bitwise at every step"):
        image = block_image()
        request = standard_request(image)
        backend = ToyBackend.from_image(image)
        i_man = make_manipulated_image(image, request.object_mask,
                                       request.transform())
        z0_man = backend.encode(i_man)
        masks = derive_mask_set(request.object_mask, request.transform())
        m_new_lat = masks.at_resolution("m_new", (8, 8), "nearest")
        assert torch.any(m_new_lat)

        blends = []
        real_blend = blend_step

        def spying_blend(*args, **kwargs):
            out = real_blend(*args, **kwargs)
            blends.append((args[4], out.detach().clone()))
            return out

        monkeypatch.setattr(sampler_mod, "blend_step", spying_blend)
        cfg = SamplerConfig(steps=16, blur_kernel=1, unmasked_tail=2)
        run_edit(request, cfg, backend=backend)

        checked = 0
        for t, z0_out in blends:
            if t > 2:
                assert torch.equal(z0_out[:, m_new_lat], z0_man[:, m_new_lat]), \
                    f"step t={t} not bitwise-anchored"
                checked += 1
        assert checked == 14


def test_leakproof_self_attention_exhaustive():
    with criterion("leak-proof attention: exhaustive over all 2^16 column "
                   "masks on the 16-key toy layer; masked weight exactly 0, "
                   "rows stochastic within 1e-6, guard at >= 95% coverage"):
        image = block_image()
        backend = ToyBackend.from_image(image)
        sched = build_schedule(ScheduleConfig(inference_steps=16))
        z_t = fdp(backend.mu, torch.randn(3, 8, 8,
                  generator=torch.Generator().manual_seed(7)), 8, sched)
        # the half-resolution layer's real pre-softmax scores (16 keys)
        spec = next(s for s in backend.layer_specs if s.name == "up1")
        x = torch.nn.functional.avg_pool2d(z_t[None], spec.downscale)[0]
        tokens = x.reshape(x.shape[0], -1).T
        wq, wk, _ = backend._proj["up1"]
        scores = (tokens @ wq) @ (tokens @ wk).T / math.sqrt(spec.head_dim)
        assert scores.shape == (16, 16)

        n_guarded = 0
        ones = torch.ones(16)
        for bits in range(2 ** 16):
            mask = torch.tensor([(bits >> i) & 1 for i in range(16)],
                                dtype=torch.bool)
            kept, skipped = effective_leak_mask(mask)
            if skipped:
                n_guarded += 1
                assert int(mask.sum()) / 16 >= 0.95
                continue
            w = masked_softmax(scores, kept)
            if kept is not None and torch.any(kept):
                assert torch.all(w[:, kept] == 0)
            assert torch.allclose(w.sum(dim=-1), ones, atol=1e-6)
        # guard fires for coverage >= 0.95: only the all-masked pattern at 16 keys
        assert n_guarded == 1


def test_sim_mask_fixture():
    with criterion("m_sim: planted score matrices recover the twin region "
                   "exactly at tau = 0.1; empty at t = T"):
        res = (8, 8)
        obj = torch.zeros(*res, dtype=torch.bool)
        obj[1:3, 1:3] = True
        twin = torch.zeros(*res, dtype=torch.bool)
        twin[5:7, 5:7] = True
        n = 64
        hot, cold = 0.9, 0.1 / (n - 4)
        p = torch.full((n, n), 1.0 / n)
        for r in obj.flatten().nonzero().flatten().tolist():
            row = torch.full((n,), cold)
            row[twin.flatten()] = hot / 4
            p[r] = row
        _, m_sim = extract_sim_mask({"up0": p}, {"up0": obj}, exclude=obj,
                                    common_res=res, tau=0.1)
        assert torch.equal(m_sim, twin)

        # empty at t = T: the first logged sampler step carries no m_sim cells
        image = block_image()
        report = run_edit(standard_request(image),
                          SamplerConfig(steps=8, guidance=EnergyConfig(enabled=False)))
        masks = derive_mask_set(standard_request(image).object_mask,
                                EditTransform("move", 24, 24))
        base = int(masks.at_resolution("leak_union", (8, 8), "any_overlap").sum())
        assert report.steps[0].t == 8
        assert report.steps[0].leak_cells == base


def test_guidance_gradient_oracle():
    with criterion("guidance gradient: autograd vs central finite differences "
                   "in float64, relative error < 1e-4 on >= 20 coordinates"):
        image = block_image()
        backend = ToyBackend.from_image(image)
        backend.mu = backend.mu.double()
        sched = build_schedule(ScheduleConfig(inference_steps=16))
        masks = derive_mask_set(standard_request(image).object_mask,
                                EditTransform("move", 24, 24))
        gen = torch.Generator().manual_seed(17)
        z_man = fdp(backend.mu, torch.randn(3, 8, 8, generator=gen).double(), 8, sched)
        z_tgt = fdp(backend.mu, torch.randn(3, 8, 8, generator=gen).double(), 8, sched)
        cfg = EnergyConfig()
        _, grad = energy(z_tgt, z_man, masks, 8, backend, sched, cfg)

        h = 1e-6
        coords = torch.randperm(z_tgt.numel(), generator=gen)[:24].tolist()
        checked = 0
        for idx in coords:
            zp, zm = z_tgt.flatten().clone(), z_tgt.flatten().clone()
            zp[idx] += h
            zm[idx] -= h
            ep, _ = energy(zp.view_as(z_tgt), z_man, masks, 8, backend, sched, cfg)
            em, _ = energy(zm.view_as(z_tgt), z_man, masks, 8, backend, sched, cfg)
            fd = (ep - em) / (2 * h)
            ad = float(grad.flatten()[idx])
            if abs(fd) < 1e-10 and abs(ad) < 1e-10:
                checked += 1
                continue
            rel = abs(ad - fd) / max(abs(fd), abs(ad))
            assert rel < 1e-4, f"coord {idx}: ad={ad:.3e} fd={fd:.3e} rel={rel:.2e}"
            checked += 1
        assert checked >= 20


def test_nfe_accounting():
    with criterion("NFE accounting: defaults report exactly 28 / 64 / 206 at "
                   "8 / 16 / 50 steps; guidance-off 16-step run reports 48"):
        image = block_image()
        for T, expected in ((8, 28), (16, 64), (50, 206)):
            report = run_edit(standard_request(image), SamplerConfig(steps=T))
            assert report.nfe == expected, f"T={T}: nfe={report.nfe}"
        off = run_edit(standard_request(image),
                       SamplerConfig(steps=16, guidance=EnergyConfig(enabled=False)))
        assert off.nfe == 48, f"guidance off: nfe={off.nfe}"


def test_determinism():
    with criterion("determinism: identical seed/config/backend => bitwise "
                   "identical outputs and identical reports"):
        image = block_image()
        cfg = SamplerConfig(steps=16)
        a = run_edit(standard_request(image), cfg)
        b = run_edit(standard_request(image), cfg)
        assert torch.equal(a.output, b.output)
        assert torch.equal(a.output_latents, b.output_latents)
        sa, sb = a.summary(), b.summary()
        sa.pop("latency_seconds"), sb.pop("latency_seconds")
        assert sa == sb


@pytest.mark.skip(reason="manual/optional: requires a pretrained "
                         "latent-diffusion adapter and weights supplied "
                         "out-of-band; run a 16-step repositioning edit and "
                         "check the vacated region's mean pixel moved away "
                         "from the original object region")
def test_pretrained_adapter_smoke():
    pass


def test_benchmark_harness(tmp_path):
    with criterion("benchmark: 5-entry toy manifest completes, emits CSV and "
                   "JSON, identity entries at the PSNR cap, runtime < 60 s"):
        start = time.perf_counter()
        manifest = load_manifest(write_fixture_set(tmp_path))
        assert len(manifest.entries) == 5
        out = tmp_path / "out"
        report = run_benchmark(manifest, SamplerConfig(steps=8), out)
        agg = report.aggregate()
        assert agg["entries_failed"] == 0
        for entry in report.entries:
            if entry.id.startswith("identity"):
                assert entry.object_psnr == PSNR_CAP_DB
                assert entry.background_psnr == PSNR_CAP_DB
        assert (out / "report.json").exists() and (out / "report.csv").exists()
        json.loads((out / "report.json").read_text())
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"runtime {elapsed:.2f}s"
