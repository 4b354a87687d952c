import math

import numpy as np
import pytest
import torch

from sssrdist.audio_io import TimeSignal, UtterancePair
from sssrdist.enhancement import (
    Checkpoint,
    LossConfigError,
    MaskNet,
    MaskNetConfig,
    TrainingConfig,
    TrainingDiverged,
    enhance,
    enhance_tensor,
    forward_mask,
    loss_fe,
    loss_minimum,
    loss_ol,
    loss_sg,
    loss_sisdr,
    loss_stoi,
    make_loss,
    model_from_checkpoint,
    parameter_checksum,
    register_stoi_plugin,
    select_checkpoint,
    train,
)
from sssrdist.metrics import SI_SDR_CEILING_DB, si_sdr
from sssrdist.representations import istft_tensor, stft_tensor
from sssrdist.synthetic import colored_noise, mix_at_snr, speechlike, synthetic_pairs

from gradcheck import parameter_gradcheck, relative_error


class ConstantMask(torch.nn.Module):
    def __init__(self, value):
        super().__init__()
        self.value = value
        self.dummy = torch.nn.Parameter(torch.zeros(1, dtype=torch.float64))

    def forward(self, mag):
        return torch.full_like(mag, self.value)


@pytest.fixture(scope="module")
def short_pair():
    rng = np.random.default_rng(11)
    s = speechlike(rng, 0.2)
    x = mix_at_snr(s.samples, colored_noise(rng, len(s)), 5.0)
    return torch.from_numpy(s.samples), torch.from_numpy(x)


def test_masknet_config_defaults():
    cfg = MaskNetConfig()
    assert (cfg.input_dim, cfg.output_dim, cfg.recurrent_layers, cfg.recurrent_hidden_size) == (257, 257, 2, 256)
    assert cfg.bidirectional and cfg.leaky_slope == 0.3
    with pytest.raises(ValueError):
        MaskNetConfig(output_dim=129)


def test_forward_mask_bounds_and_shapes(rng):
    model = MaskNet()
    for t in (1, 5, 63):
        mask = forward_mask(model, rng.random((t, 257)) * 10)
        assert mask.shape == (t, 257)
        assert torch.all(mask > 0) and torch.all(mask < 1)
    with pytest.raises(ValueError):
        forward_mask(model, np.full((2, 257), np.nan))


def test_forward_mask_deterministic(rng):
    x = rng.random((20, 257))
    a = forward_mask(MaskNet(seed=3), x)
    b = forward_mask(MaskNet(seed=3), x)
    assert torch.equal(a, b)
    assert not torch.equal(a, forward_mask(MaskNet(seed=4), x))


def test_enhance_length_and_constant_masks(clean_noisy):
    _, x = clean_noisy
    assert len(enhance(MaskNet(), x)) == len(x)
    ones = enhance(ConstantMask(1.0), x)
    np.testing.assert_allclose(ones.samples, x.samples, atol=1e-10)
    zeros = enhance(ConstantMask(0.0), x)
    assert np.max(np.abs(zeros.samples)) == 0.0


def test_losses_at_minimum(short_pair, hubert_small64):
    s, _ = short_pair
    assert loss_sg(s, s.clone()).item() == 0.0
    assert loss_fe(hubert_small64, s, s.clone()).item() == 0.0
    assert loss_ol(hubert_small64, s, s.clone()).item() == 0.0
    assert loss_sisdr(s, s.clone()).item() == pytest.approx(-SI_SDR_CEILING_DB, abs=1e-6)
    assert loss_minimum("sisdr") == -SI_SDR_CEILING_DB and loss_minimum("sg") == 0.0


def test_soft_sisdr_tracks_metric(short_pair):
    s, x = short_pair
    # the residual floor only matters near the ceiling
    assert -loss_sisdr(s, x).item() == pytest.approx(si_sdr(s.numpy(), x.numpy()), abs=1e-3)
    assert loss_sisdr(s, 3.0 * x).item() == pytest.approx(loss_sisdr(s, x).item(), abs=1e-9)


def test_loss_sg_gradient_wrt_single_mask_entry(short_pair):
    s, x = short_pair
    spec = stft_tensor(x)
    mask = torch.full(spec.shape, 0.5, dtype=torch.float64, requires_grad=True)

    def objective(m):
        return loss_sg(s, istft_tensor(spec * m, len(x)))

    objective(mask).backward()
    rng = np.random.default_rng(0)
    for _ in range(5):
        t, f = rng.integers(spec.shape[0]), rng.integers(1, spec.shape[1] - 1)
        h = 1e-4
        with torch.no_grad():
            up, down = mask.clone(), mask.clone()
            up[t, f] += h
            down[t, f] -= h
            fd = (objective(up) - objective(down)).item() / (2 * h)
        assert mask.grad[t, f].item() == pytest.approx(fd, rel=1e-4, abs=1e-12)


@pytest.mark.parametrize("name", ["sg", "fe", "ol", "sisdr"])
def test_parameter_gradients_match_finite_differences(name, short_pair, hubert_small64):
    s, x = short_pair
    model = MaskNet(seed=1).double()
    loss = {
        "sg": lambda e: loss_sg(s, e),
        "fe": lambda e: loss_fe(hubert_small64, s, e),
        "ol": lambda e: loss_ol(hubert_small64, s, e),
        "sisdr": lambda e: loss_sisdr(s, e),
    }[name]
    analytic, numeric = parameter_gradcheck(model, lambda: loss(enhance_tensor(model, x)))
    assert relative_error(analytic, numeric) < 1e-3


def test_stoi_loss_requires_plugin(short_pair):
    s, x = short_pair
    register_stoi_plugin(None)
    try:
        import torch_stoi  # noqa: F401
        pytest.skip("torch_stoi installed")
    except Exception:
        pass
    with pytest.raises(LossConfigError, match="plugin"):
        loss_stoi(s, x)
    with pytest.raises(LossConfigError):
        make_loss("stoi")


def test_stoi_loss_uses_registered_plugin(short_pair):
    s, x = short_pair
    calls = []

    def plugin(ref, est, rate):
        calls.append(rate)
        return -torch.nn.functional.cosine_similarity(ref, est, dim=-1)

    register_stoi_plugin(plugin)
    try:
        assert loss_stoi(s, s).item() == pytest.approx(-1.0)
        assert make_loss("stoi")(s, x).item() > -1.0
        assert calls == [16000, 16000]
    finally:
        register_stoi_plugin(None)


def test_make_loss_errors():
    with pytest.raises(LossConfigError):
        make_loss("l1")
    with pytest.raises(LossConfigError, match="backend"):
        make_loss("fe_hubert", {})


def test_frozen_backend_through_training_steps(hubert_small):
    pairs = [UtterancePair(u, c, n, snr) for u, c, n, snr in synthetic_pairs(3, seed=2, duration=0.5)]
    before = hubert_small.parameter_checksum()
    train(pairs, [], TrainingConfig(loss="fe_hubert", epochs=1), backends={"hubert": hubert_small})
    assert hubert_small.parameter_checksum() == before
    assert all(p.grad is None for p in hubert_small.model.parameters())


def _pairs(n, seed=0, duration=0.5):
    return [UtterancePair(u, c, x, snr) for u, c, x, snr in synthetic_pairs(n, seed, duration)]


def test_training_seed_determinism(tmp_path):
    pairs = _pairs(4)
    cfg = TrainingConfig(loss="sg", epochs=2, seed=5, validation_metric="si_sdr")
    a = train(pairs[:3], pairs[3:], cfg, out_dir=tmp_path / "a")
    b = train(pairs[:3], pairs[3:], cfg)
    assert [c.train_loss for c in a] == [c.train_loss for c in b]
    assert all(torch.equal(a[-1].parameters[k], b[-1].parameters[k]) for k in a[-1].parameters)
    log = (tmp_path / "a" / "training_log.csv").read_text().splitlines()
    assert log[0] == "epoch,train_loss,valid_pesq" and len(log) == 3
    loaded = Checkpoint.load(tmp_path / "a" / "epoch_002.pt")
    assert loaded.config_hash == cfg.config_hash() and loaded.validation_pesq == a[-1].validation_pesq
    model = model_from_checkpoint(loaded)
    assert parameter_checksum(model) == parameter_checksum(model_from_checkpoint(a[-1]))


def test_training_batches_and_clipping():
    pairs = _pairs(4, seed=1)
    ckpts = train(pairs, [], TrainingConfig(loss="sisdr", epochs=1, batch_size=3, grad_clip=1.0))
    assert len(ckpts) == 1 and math.isfinite(ckpts[0].train_loss)
    assert ckpts[0].validation_pesq is None


def test_training_divergence_is_reported():
    pairs = _pairs(2)

    def bad_plugin(ref, est, rate):
        return est.sum() * float("nan")

    register_stoi_plugin(bad_plugin)
    try:
        with pytest.raises(TrainingDiverged) as info:
            train(pairs, [], TrainingConfig(loss="stoi", epochs=2))
        assert info.value.epoch == 1
    finally:
        register_stoi_plugin(None)


def test_training_config_validation():
    with pytest.raises(LossConfigError):
        TrainingConfig(loss="l2")
    with pytest.raises(ValueError):
        TrainingConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainingConfig(epochs=0)
    cfg = TrainingConfig()
    assert (cfg.epochs, cfg.learning_rate, cfg.validation_metric) == (50, 1e-3, "pesq")


def _ck(epoch, score):
    return Checkpoint(epoch, {}, score, "h", 0.0)


def test_select_checkpoint():
    only = _ck(1, 2.0)
    assert select_checkpoint([only]) is only
    assert select_checkpoint([_ck(1, 1.0), _ck(2, 1.5), _ck(3, 2.0)]).epoch == 3
    tie = [_ck(e, 2.5 if e in (3, 7) else 1.0) for e in range(1, 9)]
    assert select_checkpoint(tie).epoch == 3
    assert select_checkpoint([_ck(1, None), _ck(2, 1.0)]).epoch == 2
    with pytest.raises(ValueError):
        select_checkpoint([])
