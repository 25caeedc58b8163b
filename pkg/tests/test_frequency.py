import math

import numpy as np
import pytest
import torch
from oracles import dft2_brute, haar_dwt2_by_hand

from relight.frequency import WaveletPyramid, dft_amp_pha, dwt2, idwt2, laplacian


def _rand(shape, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(shape, generator=g, dtype=torch.float64)


class TestDWT:
    def test_constant_image(self):
        x = torch.full((3, 8, 12), 0.5, dtype=torch.float64)
        p = dwt2(x)
        assert torch.allclose(p.ll, torch.ones_like(p.ll))
        for band in p.details:
            assert band.abs().max() == 0.0

    def test_2x2_identity_against_hand_filter_bank(self):
        x = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        p = dwt2(x)
        ll, lh, hl, hh = haar_dwt2_by_hand(x.numpy())
        assert abs(p.ll.item() - ll[0, 0]) < 1e-12
        assert abs(p.lh.item() - lh[0, 0]) < 1e-12
        assert abs(p.hl.item() - hl[0, 0]) < 1e-12
        assert abs(p.hh.item() - hh[0, 0]) < 1e-12
        assert abs(p.ll.item() - 1.0) < 1e-12
        assert abs(abs(p.hh.item()) - 1.0) < 1e-12

    def test_matches_hand_filter_bank_on_random(self):
        x = _rand((6, 10), seed=3)
        p = dwt2(x)
        for got, want in zip((p.ll, p.lh, p.hl, p.hh), haar_dwt2_by_hand(x.numpy())):
            np.testing.assert_allclose(got.numpy(), want, atol=1e-12)

    def test_round_trip(self):
        x = _rand((3, 16, 22), seed=1)
        assert (idwt2(dwt2(x)) - x).abs().max() <= 1e-6

    def test_parseval(self):
        for seed in range(5):
            x = _rand((3, 8, 14), seed=seed)
            p = dwt2(x)
            e_in = float((x**2).sum())
            e_out = sum(float((b**2).sum()) for b in (p.ll, p.lh, p.hl, p.hh))
            assert abs(e_in - e_out) / e_in <= 1e-9

    def test_linearity(self):
        a, b = _rand((2, 6, 6), seed=5), _rand((2, 6, 6), seed=6)
        p_sum = dwt2(2.0 * a + 3.0 * b)
        pa, pb = dwt2(a), dwt2(b)
        assert torch.allclose(p_sum.ll, 2.0 * pa.ll + 3.0 * pb.ll, atol=1e-12)
        assert torch.allclose(p_sum.hh, 2.0 * pa.hh + 3.0 * pb.hh, atol=1e-12)

    def test_odd_dims_rejected(self):
        with pytest.raises(ValueError, match="even"):
            dwt2(torch.zeros((3, 5, 4), dtype=torch.float64))


class TestIDWT:
    def test_zero_pyramid(self):
        z = torch.zeros((3, 4, 4), dtype=torch.float64)
        p = WaveletPyramid(ll=z, lh=z, hl=z, hh=z)
        assert idwt2(p).abs().max() == 0.0

    def test_constant_ll(self):
        c = 0.3
        ll = torch.full((1, 4, 4), 2 * c, dtype=torch.float64)
        z = torch.zeros_like(ll)
        out = idwt2(WaveletPyramid(ll=ll, lh=z, hl=z, hh=z))
        assert torch.allclose(out, torch.full_like(out, c), atol=1e-12)

    def test_mismatched_subbands(self):
        with pytest.raises(ValueError, match="subband"):
            WaveletPyramid(
                ll=torch.zeros((1, 4, 4)),
                lh=torch.zeros((1, 4, 4)),
                hl=torch.zeros((1, 2, 4)),
                hh=torch.zeros((1, 4, 4)),
            )


class TestDFT:
    def test_constant_dc_only(self):
        n, c = 6, 0.7
        s = dft_amp_pha(torch.full((n, n), c, dtype=torch.float64))
        assert abs(s.amp[0, 0].item() - n * n * c) < 1e-9
        rest = s.amp.flatten()[1:]
        assert rest.abs().max() <= 1e-9
        assert s.pha[0, 0].item() == 0.0

    def test_2x2_brute_force(self):
        x = torch.tensor([[1.0, 2.0], [3.0, 4.0]], dtype=torch.float64)
        s = dft_amp_pha(x)
        amp, _ = dft2_brute(x.numpy())
        np.testing.assert_allclose(s.amp.numpy(), amp, atol=1e-10)

    def test_random_4x4_brute_force(self):
        for seed in range(3):
            x = _rand((4, 4), seed=seed)
            s = dft_amp_pha(x)
            amp, pha = dft2_brute(x.numpy())
            np.testing.assert_allclose(s.amp.numpy(), amp, atol=1e-8)
            # compare phases where amplitude is meaningfully nonzero
            mask = amp > 1e-8
            recon = s.amp.numpy() * np.exp(1j * s.pha.numpy())
            recon_ref = amp * np.exp(1j * pha)
            np.testing.assert_allclose(recon[mask], recon_ref[mask], atol=1e-8)

    def test_scaling(self):
        x = _rand((4, 6), seed=9) + 0.1
        s1, s2 = dft_amp_pha(x), dft_amp_pha(2.0 * x)
        np.testing.assert_allclose(s2.amp.numpy(), 2.0 * s1.amp.numpy(), atol=1e-10)
        nonzero = s1.amp.numpy() > 1e-9
        np.testing.assert_allclose(s2.pha.numpy()[nonzero], s1.pha.numpy()[nonzero], atol=1e-10)

    def test_amp_pha_invert(self):
        x = _rand((3, 6, 8), seed=4)
        s = dft_amp_pha(x)
        back = torch.fft.ifft2(s.amp * torch.exp(1j * s.pha), dim=(-2, -1)).real
        assert (back - x).abs().max() <= 1e-8

    def test_invariants(self):
        s = dft_amp_pha(_rand((5, 4, 4), seed=8))
        assert float(s.amp.min()) >= 0.0
        assert float(s.pha.min()) > -math.pi
        assert float(s.pha.max()) <= math.pi

    def test_nonfinite_rejected(self):
        bad = torch.full((4, 4), math.nan, dtype=torch.float64)
        with pytest.raises(ValueError, match="finite"):
            dft_amp_pha(bad)


class TestLaplacian:
    def test_constant_annihilated(self):
        out = laplacian(torch.full((3, 5, 5), 0.4, dtype=torch.float64))
        assert out.abs().max() <= 1e-12

    def test_unit_impulse(self):
        x = torch.zeros((1, 7, 7), dtype=torch.float64)
        x[0, 3, 3] = 1.0
        out = laplacian(x)
        assert out[0, 3, 3].item() == -4.0
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            assert out[0, 3 + dy, 3 + dx].item() == 1.0
        assert out[0, 2, 2].item() == 0.0

    def test_ramp_interior_zero(self):
        ramp = (torch.arange(8, dtype=torch.float64) / 10).repeat(8, 1)[None]
        out = laplacian(ramp)
        assert out[0, 1:-1, 1:-1].abs().max() <= 1e-12

    def test_too_small(self):
        with pytest.raises(ValueError, match=">= 3"):
            laplacian(torch.zeros((1, 2, 5), dtype=torch.float64))
