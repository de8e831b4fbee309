"""Tests for the analytic cost model."""
import numpy as np
import pytest

from cea_kit.autograd import Tensor, count_macs
from cea_kit.models.assembly import dense_macs, low_rank_macs
from cea_kit.models.backbone import Restorer
from cea_kit.models.cost import flop_report, parameter_report
from cea_kit.schemas.cea import CeaConfig, FactorGenerator, FactorSource
from tests.conftest import tiny_backbone_config


def test_low_rank_cost_example():
    """N=256, d=64, r=8: 262,144 against 1,048,576 MACs."""
    assert low_rank_macs(256, 64, 64, 8) == 262_144
    assert dense_macs(256, 64, 64) == 1_048_576
    assert dense_macs(256, 64, 64) / low_rank_macs(256, 64, 64, 8) == 4.0


@pytest.mark.parametrize(("d_in", "d_out"), [(64, 64), (12, 24), (30, 20)])
def test_break_even_rank(d_in, d_out):
    """r = d_in d_out / (d_in + d_out) makes both formulations cost the same."""
    r = d_in * d_out // (d_in + d_out)
    assert r * (d_in + d_out) == d_in * d_out
    assert low_rank_macs(100, d_in, d_out, r) == dense_macs(100, d_in, d_out)
    assert low_rank_macs(100, d_in, d_out, r + 1) > dense_macs(100, d_in, d_out)


def test_full_rank_is_not_cheaper():
    """r = d gives a ratio at most one."""
    assert dense_macs(64, 32, 32) / low_rank_macs(64, 32, 32, 32) <= 1.0


@pytest.mark.parametrize(
    "cea",
    [
        CeaConfig(rank=4),
        CeaConfig(rank=4, injection_targets=("Q", "K", "V", "FFN_in")),
        CeaConfig(rank=4, generator=FactorGenerator.GAP_MLP),
        CeaConfig(rank=4, factor_source=FactorSource.STATIC),
        CeaConfig(injection_targets=()),
    ],
)
def test_report_matches_runtime_counter(rng, cea):
    """The analytic total equals the counted MACs of one forward pass."""
    config = tiny_backbone_config(cea)
    restorer = Restorer(config, seed=0)
    with count_macs() as counter:
        restorer(Tensor(rng.uniform(size=(16, 16, 3))))
    report = flop_report(config, 16, 16)
    assert report.total_macs == counter.total
    assert report.total_macs == sum(e.macs for e in report.entries)


def test_report_cea_sites(tiny_backbone):
    """One site per CEA block and target, with both formulations costed."""
    report = flop_report(tiny_backbone, 16, 16)
    assert len(report.cea_sites) == sum(tiny_backbone.cea_block_counts()) * 2
    for site in report.cea_sites:
        assert site.low_rank_macs == low_rank_macs(site.tokens, site.d_in, site.d_out, site.rank)
        assert site.dense_macs == dense_macs(site.tokens, site.d_in, site.d_out)
    assert report.cea_low_rank_macs == sum(s.low_rank_macs for s in report.cea_sites)
    assert report.cea_ratio == report.cea_dense_macs / report.cea_low_rank_macs


def test_report_without_cea_has_no_sites():
    """Disabling CEA removes every assembly entry."""
    report = flop_report(tiny_backbone_config(CeaConfig(injection_targets=())), 16, 16)
    assert report.cea_sites == []
    assert report.cea_ratio is None
    assert not any(e.sublayer.startswith("cea_assembly") for e in report.entries)


def test_parameter_report_groups(tiny_backbone):
    """Backbone and generator counts add up to the restorer's parameters."""
    counts = parameter_report(tiny_backbone)
    state = Restorer(tiny_backbone).state
    assert counts["total"] == state.count()
    assert counts["backbone"] == state.count() - sum(state[n].size for n in state.names() if ".cea." in n)
    assert counts["cea_generators"] > 0
    assert counts["static_factors"] == 0


def test_static_parameters_grouped_separately():
    """Static factors are reported under their own group."""
    counts = parameter_report(tiny_backbone_config(CeaConfig(rank=4, factor_source=FactorSource.STATIC)))
    assert counts["static_factors"] > 0
    assert counts["cea_generators"] == 0


def test_larger_inputs_cost_more(tiny_backbone):
    """Attention cost grows faster than linearly with the token count."""
    small = flop_report(tiny_backbone, 16, 16).total_macs
    large = flop_report(tiny_backbone, 32, 32).total_macs
    assert large > 4 * small
    assert np.isfinite(large)
