import torch

from model.networks import LOG_STD_MAX, LOG_STD_MIN, ActorNetwork, CriticNetwork, RunningMeanStd


def test_actor_output_shapes():
    torch.manual_seed(0)
    actor = ActorNetwork(dim_state=7, num_continuous=5, num_leds=2, num_layers=3, dim_hidden=16).double()
    out = actor(torch.randn(4, 7, dtype=torch.float64))
    assert out.mean.shape == (4, 5)
    assert out.log_std.shape == (4, 5)
    assert out.logits.shape == (4, 2)
    assert hasattr(actor, 'l0') and hasattr(actor, 'l1') and not hasattr(actor, 'l2')


def test_log_std_is_clamped():
    actor = ActorNetwork(dim_state=3, num_continuous=2, num_leds=2, num_layers=2, dim_hidden=4)
    with torch.no_grad():
        actor.log_std.copy_(torch.tensor([-20.0, 20.0]))
    out = actor(torch.zeros(1, 3))
    assert out.log_std[0, 0].item() == LOG_STD_MIN
    assert out.log_std[0, 1].item() == LOG_STD_MAX


def test_critic_output_shape():
    critic = CriticNetwork(dim_state=7, num_layers=2, dim_hidden=8)
    assert critic(torch.randn(5, 7)).shape == (5, )


def test_running_mean_std_merge():
    rms = RunningMeanStd(3)
    gen = torch.Generator().manual_seed(0)
    a = torch.randn(10, 3, generator=gen, dtype=torch.float64) * 2.0 + 1.0
    b = torch.randn(6, 3, generator=gen, dtype=torch.float64) - 3.0
    rms.update(a)
    rms.update(b)
    full = torch.cat([a, b])
    torch.testing.assert_close(rms.mean, full.mean(dim=0))
    torch.testing.assert_close(rms.var, full.var(dim=0, unbiased=False))
    assert rms.count.item() == 16.0


def test_running_mean_std_normalizes():
    rms = RunningMeanStd(2)
    x = torch.tensor([[1e-9, 1.0], [3e-9, 3.0]], dtype=torch.float64)
    rms.update(x)
    y = rms(x)
    torch.testing.assert_close(y, torch.tensor([[-1.0, -1.0], [1.0, 1.0]], dtype=torch.float64), rtol=1e-6,
                               atol=1e-6)
    assert torch.all(rms(x * 1e6).abs() <= rms.clip)
