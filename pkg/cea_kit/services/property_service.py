"""Property service: seeded invariant suites with counterexample dumps."""
import logging
import math
from collections.abc import Callable
from dataclasses import replace

import numpy as np

from cea_kit.autograd import functional as F
from cea_kit.autograd.flops import count_macs
from cea_kit.autograd.gradcheck import grad_check
from cea_kit.autograd.tensor import Tensor
from cea_kit.core.errors import ConfigError
from cea_kit.degradations.operators import apply_blur, apply_haze, apply_lowlight, apply_noise, apply_rain, apply_snow
from cea_kit.metrics.bootstrap import paired_bootstrap
from cea_kit.metrics.losses import loss_total, smooth_target
from cea_kit.metrics.quality import psnr
from cea_kit.models.assembly import (
    FactorPair,
    assemble_residual_matrix,
    assemble_residual_tokenwise,
    assemble_residual_topk,
    rank_norm,
)
from cea_kit.models.backbone import BlockWeights, Restorer, transformer_block_forward
from cea_kit.models.cost import flop_report
from cea_kit.models.hyper_adapter import AdapterWeights, GapMlpWeights, condense, generate_dynamic, generate_gap_mlp, probe
from cea_kit.models.parameters import ParameterStore
from cea_kit.schemas.backbone import BackboneConfig
from cea_kit.schemas.cea import CeaConfig, FactorGenerator, RoutingRule, Target
from cea_kit.schemas.reports import PropertyReport, PropertyResult
from cea_kit.services.base import BaseService

logger = logging.getLogger(__name__)

FAULTS = ("skip_rank_norm",)
EQUIVALENCE_CASES = 50
SCALE_SEEDS = 20
GRADCHECK_SEEDS = 5
RESTORER_GRADCHECK_FRACTION = 0.01
RESTORER_GRADCHECK_ATOL = 1e-7


def _random_pair(rng: np.random.Generator, d_in: int, d_out: int, rank: int, target: Target = Target.Q) -> FactorPair:
    return FactorPair(A=Tensor(rng.normal(size=(d_in, rank))), B=Tensor(rng.normal(size=(rank, d_out))), target=target)


def _per_rank_scalars(rng: np.random.Generator, rank: int) -> np.ndarray:
    """Magnitudes in [0.1, 10] with random signs."""
    return rng.uniform(0.1, 10.0, size=rank) * rng.choice([-1.0, 1.0], size=rank)


def _max_abs(a: Tensor | np.ndarray, b: Tensor | np.ndarray) -> float:
    a = a.data if isinstance(a, Tensor) else a
    b = b.data if isinstance(b, Tensor) else b
    return float(np.max(np.abs(a - b))) if a.size else 0.0


class PropertyService(BaseService):
    """Service running the invariant suites behind ``cea-kit props``."""

    def __init__(self, fault: str | None = None, threads: int | None = None):
        super().__init__(threads)
        if fault is not None and fault not in FAULTS:
            raise ConfigError(f"unknown fault {fault!r}; choose from {list(FAULTS)}")
        self.fault = fault
        self.suites: dict[str, Callable[[], PropertyResult]] = {
            "tokenwise_matrix_equivalence": self.suite_equivalence,
            "dense_linearity": self.suite_linearity,
            "ranknorm_scale_invariance": self.suite_scale_invariance,
            "ranknorm_unit_norm": self.suite_unit_norm,
            "alpha_bounded_in_rank": self.suite_alpha_bounded,
            "assembly_flop_count": self.suite_flop_count,
            "probe_attention_normalized": self.suite_probe_attention,
            "gap_permutation_invariance": self.suite_gap_permutation,
            "zeroed_factors_match_backbone": self.suite_zeroed_factors,
            "cea_placement": self.suite_placement,
            "restorer_flop_crosscheck": self.suite_flop_crosscheck,
            "block_gradients": self.suite_block_gradients,
            "restorer_gradients": self.suite_restorer_gradients,
            "loss_gradients": self.suite_loss_gradients,
            "degradation_identity_and_range": self.suite_degradations,
            "psnr_monotone": self.suite_psnr_monotone,
            "bootstrap_determinism": self.suite_bootstrap,
        }

    # ------------------------------------------------------------------
    # Fault hooks
    # ------------------------------------------------------------------
    def _rank_norm(self, fp: FactorPair, epsilon: float) -> FactorPair:
        if self.fault == "skip_rank_norm":
            return replace(fp, normalized=True)
        return rank_norm(fp, epsilon)

    # ------------------------------------------------------------------
    # Assembly suites
    # ------------------------------------------------------------------
    def suite_equivalence(self) -> PropertyResult:
        worst = 0.0
        for seed in range(EQUIVALENCE_CASES):
            rng = np.random.default_rng(seed)
            n, d_in, d_out = (int(v) for v in rng.integers(1, [65, 33, 33]))
            r = int(rng.integers(1, 17))
            cfg = CeaConfig(rank=r)
            fp = self._rank_norm(_random_pair(rng, d_in, d_out, r), cfg.epsilon)
            X = Tensor(rng.normal(size=(n, d_in)))
            err = _max_abs(assemble_residual_matrix(X, fp, cfg), assemble_residual_tokenwise(X, fp, cfg))
            worst = max(worst, err)
            if err >= 1e-10:
                return PropertyResult(
                    name="tokenwise_matrix_equivalence", passed=False, cases=seed + 1,
                    detail=f"max error {err:.3e}", counterexample={"seed": seed, "N": n, "d_in": d_in, "d_out": d_out, "r": r},
                )
        return PropertyResult(name="tokenwise_matrix_equivalence", passed=True, cases=EQUIVALENCE_CASES, detail=f"max error {worst:.3e}")

    def suite_linearity(self) -> PropertyResult:
        cases = 20
        for seed in range(cases):
            rng = np.random.default_rng(1000 + seed)
            cfg = CeaConfig(rank=4)
            fp = self._rank_norm(_random_pair(rng, 8, 8, 4), cfg.epsilon)
            x1, x2 = rng.normal(size=(6, 8)), rng.normal(size=(6, 8))
            joint = assemble_residual_matrix(Tensor(x1 + x2), fp, cfg)
            split = assemble_residual_matrix(Tensor(x1), fp, cfg).data + assemble_residual_matrix(Tensor(x2), fp, cfg).data
            err = _max_abs(joint, split)
            if err >= 1e-10:
                return PropertyResult(name="dense_linearity", passed=False, cases=seed + 1, detail=f"error {err:.3e}", counterexample={"seed": 1000 + seed})

        # Top-k softmax routing must break additivity somewhere.
        topk = CeaConfig(rank=4, routing_rule=RoutingRule.TOPK_SOFTMAX, top_k=2)
        rng = np.random.default_rng(7)
        fp = rank_norm(_random_pair(rng, 8, 8, 4), topk.epsilon)
        x1, x2 = rng.normal(size=(6, 8)), rng.normal(size=(6, 8))
        gap = _max_abs(
            assemble_residual_topk(Tensor(x1 + x2), fp, topk),
            assemble_residual_topk(Tensor(x1), fp, topk).data + assemble_residual_topk(Tensor(x2), fp, topk).data,
        )
        passed = gap > 1e-6
        return PropertyResult(
            name="dense_linearity", passed=passed, cases=cases + 1,
            detail=f"top-k additivity gap {gap:.3e}", counterexample=None if passed else {"seed": 7, "gap": gap},
        )

    def suite_scale_invariance(self) -> PropertyResult:
        """Per-rank rescaling of raw factors leaves the assembled residual unchanged after RankNorm."""
        cfg = CeaConfig(rank=4, epsilon=1e-12)
        worst = 0.0
        for seed in range(SCALE_SEEDS):
            rng = np.random.default_rng(2000 + seed)
            fp = _random_pair(rng, 8, 6, cfg.rank)
            X = Tensor(rng.normal(size=(10, 8)))
            c = _per_rank_scalars(rng, cfg.rank)
            reference = assemble_residual_matrix(X, self._rank_norm(fp, cfg.epsilon), cfg)
            for label, b_scale in (("ambiguity", 1.0 / c), ("per_rank", c)):
                scaled = FactorPair(A=Tensor(fp.A.data * c), B=Tensor(fp.B.data * b_scale[:, None]), target=fp.target)
                err = _max_abs(assemble_residual_matrix(X, self._rank_norm(scaled, cfg.epsilon), cfg), reference)
                worst = max(worst, err)
                if err >= 1e-9:
                    return PropertyResult(
                        name="ranknorm_scale_invariance", passed=False, cases=seed + 1, detail=f"{label} error {err:.3e}",
                        counterexample={"seed": 2000 + seed, "form": label, "scalars": c.tolist(), "error": err},
                    )
        return PropertyResult(name="ranknorm_scale_invariance", passed=True, cases=SCALE_SEEDS, detail=f"max error {worst:.3e}")

    def suite_unit_norm(self) -> PropertyResult:
        cases = 20
        for seed in range(cases):
            rng = np.random.default_rng(3000 + seed)
            fp = self._rank_norm(_random_pair(rng, 12, 9, 5), 1e-6)
            cols = np.linalg.norm(fp.A.data, axis=0)
            rows = np.linalg.norm(fp.B.data, axis=1)
            err = float(max(np.max(np.abs(cols - 1.0)), np.max(np.abs(rows - 1.0))))
            if err > 1e-6:
                return PropertyResult(name="ranknorm_unit_norm", passed=False, cases=seed + 1, detail=f"norm error {err:.3e}", counterexample={"seed": 3000 + seed})
        return PropertyResult(name="ranknorm_unit_norm", passed=True, cases=cases)

    def suite_alpha_bounded(self) -> PropertyResult:
        ranks = (1, 2, 4, 8, 16, 32)
        rng = np.random.default_rng(4000)
        X = Tensor(rng.normal(size=(64, 32)))
        norms = {}
        for r in ranks:
            cfg = CeaConfig(rank=r)
            values = []
            for _ in range(20):
                fp = rank_norm(_random_pair(rng, 32, 32, r), cfg.epsilon)
                values.append(float(np.mean(np.linalg.norm(assemble_residual_matrix(X, fp, cfg).data, axis=1))))
            norms[r] = float(np.mean(values))
        passed = max(norms.values()) <= 2.0 * norms[1]
        return PropertyResult(
            name="alpha_bounded_in_rank", passed=passed, cases=len(ranks) * 20,
            detail=", ".join(f"r={r}: {v:.3f}" for r, v in norms.items()), counterexample=None if passed else {"norms": norms},
        )

    def suite_flop_count(self) -> PropertyResult:
        cases = 20
        for seed in range(cases):
            rng = np.random.default_rng(5000 + seed)
            n, d_in, d_out, r = (int(v) for v in rng.integers(1, [65, 33, 33, 17]))
            cfg = CeaConfig(rank=r)
            fp = _random_pair(rng, d_in, d_out, r)
            with count_macs() as counter:
                assemble_residual_matrix(Tensor(rng.normal(size=(n, d_in))), fp, cfg)
            expected = n * d_in * r + n * r * d_out
            if counter.total != expected:
                return PropertyResult(
                    name="assembly_flop_count", passed=False, cases=seed + 1, detail=f"{counter.total} != {expected}",
                    counterexample={"N": n, "d_in": d_in, "d_out": d_out, "r": r},
                )
        return PropertyResult(name="assembly_flop_count", passed=True, cases=cases)

    # ------------------------------------------------------------------
    # Generator suites
    # ------------------------------------------------------------------
    def suite_probe_attention(self) -> PropertyResult:
        cases = 10
        worst = 0.0
        for seed in range(cases):
            store = ParameterStore(seed)
            cfg = CeaConfig(rank=4)
            weights = AdapterWeights.create(store, "adapter", 8, cfg, {Target.Q: (8, 8)})
            features = Tensor(np.random.default_rng(seed).normal(size=(6, 6, 8)))
            _, attention = probe(weights.queries_a, condense(features, weights), weights, return_attention=True)
            for head in attention:
                worst = max(worst, float(np.max(np.abs(head.data.sum(axis=1) - 1.0))))
        passed = worst <= 1e-12
        return PropertyResult(name="probe_attention_normalized", passed=passed, cases=cases, detail=f"max row-sum error {worst:.3e}")

    def suite_gap_permutation(self) -> PropertyResult:
        rng = np.random.default_rng(6000)
        dims = {Target.Q: (8, 8), Target.K: (8, 8)}
        gap_cfg = CeaConfig(rank=4, generator=FactorGenerator.GAP_MLP)
        dyn_cfg = CeaConfig(rank=4)
        store = ParameterStore(6000)
        gap = GapMlpWeights.create(store, "gap", 8, gap_cfg, dims)
        adapter = AdapterWeights.create(store, "adapter", 8, dyn_cfg, dims)
        features = rng.normal(size=(8, 8, 8))
        perm = rng.permutation(64)
        permuted = features.reshape(64, 8)[perm].reshape(8, 8, 8)

        gap_a, gap_b = generate_gap_mlp(Tensor(features), gap, gap_cfg), generate_gap_mlp(Tensor(permuted), gap, gap_cfg)
        gap_equal = all(
            np.array_equal(gap_a[t].A.data, gap_b[t].A.data) and np.array_equal(gap_a[t].B.data, gap_b[t].B.data) for t in gap_a
        )
        dyn_a, dyn_b = generate_dynamic(Tensor(features), adapter, dyn_cfg), generate_dynamic(Tensor(permuted), adapter, dyn_cfg)
        dyn_diff = max(_max_abs(dyn_a[t].A, dyn_b[t].A) for t in dyn_a)
        passed = gap_equal and dyn_diff >= 1e-3
        return PropertyResult(
            name="gap_permutation_invariance", passed=passed, cases=2,
            detail=f"GAP exact={gap_equal}, dynamic difference {dyn_diff:.3e}",
            counterexample=None if passed else {"gap_equal": gap_equal, "dynamic_difference": dyn_diff},
        )

    # ------------------------------------------------------------------
    # Backbone suites
    # ------------------------------------------------------------------
    @staticmethod
    def _tiny_backbone(cea: CeaConfig) -> BackboneConfig:
        return BackboneConfig(
            embed_dim=8, encoder_blocks=(1, 1), latent_blocks=1, decoder_blocks=(2, 2),
            refinement_blocks=1, heads=(1, 2, 2), cea=cea,
        )

    def suite_zeroed_factors(self) -> PropertyResult:
        rng = np.random.default_rng(7000)
        image = Tensor(rng.uniform(size=(16, 16, 3)))
        head = rng.normal(scale=0.1, size=(8, 3))
        plain = Restorer(self._tiny_backbone(CeaConfig(injection_targets=())), seed=7)
        plain.state.set("head.w", head)
        reference = plain(image).data
        mismatches = []
        for cea in (CeaConfig(rank=4), CeaConfig(rank=4, injection_targets="Q+K+V+FFN_in"), CeaConfig(rank=4, generator=FactorGenerator.GAP_MLP)):
            restorer = Restorer(self._tiny_backbone(cea), seed=7)
            restorer.state.set("head.w", head)
            for name in restorer.state.names():
                if ".head_b." in name or name.endswith(".mlp.w2"):
                    restorer.state.set(name, np.zeros(restorer.state[name].shape))
            if not np.array_equal(restorer(image).data, reference):
                mismatches.append(cea.targets_label() + "/" + cea.generator.value)
        return PropertyResult(
            name="zeroed_factors_match_backbone", passed=not mismatches, cases=3,
            counterexample={"variants": mismatches} if mismatches else None,
        )

    def suite_placement(self) -> PropertyResult:
        cases = [(2, 2, 2), (2, 4, 4), (1, 3, 5)]
        for blocks in cases:
            config = BackboneConfig(decoder_blocks=blocks)
            counts = config.cea_block_counts()
            built = [sum(b.generator is not None for b in stage) for stage in Restorer(config, seed=0).decoder]
            expected = [math.ceil(d / 2) for d in blocks]
            if counts != expected or built != expected:
                return PropertyResult(name="cea_placement", passed=False, cases=len(cases), counterexample={"decoder_blocks": blocks, "counts": built})
        return PropertyResult(name="cea_placement", passed=True, cases=len(cases))

    def suite_flop_crosscheck(self) -> PropertyResult:
        mismatches = {}
        for cea in (CeaConfig(rank=4), CeaConfig(rank=4, generator=FactorGenerator.GAP_MLP), CeaConfig(injection_targets=())):
            config = self._tiny_backbone(cea)
            restorer = Restorer(config, seed=0)
            with count_macs() as counter:
                restorer(Tensor(np.zeros((16, 16, 3))))
            analytic = flop_report(config, 16, 16).total_macs
            if counter.total != analytic:
                mismatches[cea.targets_label() + "/" + cea.generator.value] = (counter.total, analytic)
        return PropertyResult(
            name="restorer_flop_crosscheck", passed=not mismatches, cases=3,
            counterexample={k: list(v) for k, v in mismatches.items()} or None,
        )

    def suite_block_gradients(self) -> PropertyResult:
        """Finite differences of the training loss through a CEA block for every adapter parameter."""
        worst = 0.0
        for seed in range(GRADCHECK_SEEDS):
            rng = np.random.default_rng(8000 + seed)
            cfg = CeaConfig(rank=2, adapter_heads=2, injection_targets="Q+K")
            store = ParameterStore(seed)
            block = BlockWeights.create(store, "block", 4, 2, 2)
            adapter = AdapterWeights.create(store, "block.cea", 4, cfg, {t: block.target_dims()[t] for t in cfg.injection_targets})
            features = Tensor(rng.normal(size=(4, 4, 4)))

            def objective() -> Tensor:
                context = generate_dynamic(features, adapter, cfg)
                return transformer_block_forward(features.reshape(16, 4), block, context, cfg).reshape(4, 4, 4)

            target = smooth_target(objective())
            report = grad_check(lambda: loss_total(objective(), target), adapter.tensors(), eps=1e-5, tol=1e-4)
            worst = max(worst, report.max_rel_error)
            if not report.passed:
                failing = [e.name for e in report.entries if not e.passed]
                return PropertyResult(
                    name="block_gradients", passed=False, cases=seed + 1, detail=f"max relative error {report.max_rel_error:.3e}",
                    counterexample={"seed": seed, "parameters": failing},
                )
        return PropertyResult(name="block_gradients", passed=True, cases=GRADCHECK_SEEDS, detail=f"max relative error {worst:.3e}")

    def suite_restorer_gradients(self) -> PropertyResult:
        """Finite differences of the training loss through a whole restorer on a sample of its parameters."""
        rng = np.random.default_rng(8500)
        restorer = Restorer(self._tiny_backbone(CeaConfig(rank=4)), seed=5)
        # a zero head blocks every upstream gradient
        restorer.state.set("head.w", 0.1 * rng.normal(size=restorer.head.shape))
        image = Tensor(rng.uniform(size=(16, 16, 3)))
        target = smooth_target(restorer(image))
        report = grad_check(
            lambda: loss_total(restorer(image), target), restorer.state.tensors(), eps=1e-5, tol=1e-4,
            atol=RESTORER_GRADCHECK_ATOL, sample_fraction=RESTORER_GRADCHECK_FRACTION, rng=rng, names=restorer.state.names(),
        )
        failing = [e.name for e in report.entries if not e.passed]
        return PropertyResult(
            name="restorer_gradients", passed=report.passed, cases=sum(e.checked for e in report.entries),
            detail=f"max relative error {report.max_rel_error:.3e}",
            counterexample={"parameters": failing} if failing else None,
        )

    def suite_loss_gradients(self) -> PropertyResult:
        rng = np.random.default_rng(9000)
        pred = Tensor(rng.uniform(size=(6, 6, 3)), requires_grad=True, name="pred")
        target = smooth_target(pred)
        report = grad_check(lambda: loss_total(pred, target), [pred], eps=1e-6, tol=1e-5)
        return PropertyResult(
            name="loss_gradients", passed=report.passed, cases=1, detail=f"max relative error {report.max_rel_error:.3e}"
        )

    # ------------------------------------------------------------------
    # Degradation, metric and bootstrap suites
    # ------------------------------------------------------------------
    def suite_degradations(self) -> PropertyResult:
        rng = np.random.default_rng(10000)
        y = rng.uniform(size=(16, 16, 3))
        identities = {
            "noise": apply_noise(y, sigma=0.0),
            "haze": apply_haze(y, t0=1.0, airlight=0.5),
            "lowlight": apply_lowlight(y, gamma=1.0, scale=1.0),
            "rain": apply_rain(y, density=0.0),
            "blur": apply_blur(y, kernel_sigma=0.0),
            "snow": apply_snow(y, density=0.0),
        }
        broken = [name for name, x in identities.items() if not np.array_equal(x, y)]
        severe = [
            apply_noise(y, sigma=255.0, rng=rng),
            apply_haze(y, t0=0.1, airlight=1.0, rng=rng),
            apply_lowlight(y, gamma=10.0, scale=0.1),
            apply_rain(y, density=0.1, angle=30.0, intensity=1.0, rng=rng),
            apply_blur(y, kernel_sigma=5.0),
            apply_snow(y, density=0.1, flake_size=4.0, opacity=1.0, rng=rng),
        ]
        out_of_range = [i for i, x in enumerate(severe) if x.shape != y.shape or x.min() < 0.0 or x.max() > 1.0]
        passed = not broken and not out_of_range
        return PropertyResult(
            name="degradation_identity_and_range", passed=passed, cases=len(identities) + len(severe),
            counterexample=None if passed else {"not_identity": broken, "out_of_range": out_of_range},
        )

    def suite_psnr_monotone(self) -> PropertyResult:
        rng = np.random.default_rng(11000)
        y = np.full((32, 32, 3), 0.5)
        values = [psnr(apply_noise(y, sigma=s, rng=np.random.default_rng(0)), y) for s in (5.0, 15.0, 25.0, 50.0)]
        monotone = all(a > b for a, b in zip(values, values[1:])) and all(math.isfinite(v) for v in values)
        cases = 50
        for _ in range(cases):
            t = rng.uniform(size=(8, 8, 3))
            noise = rng.normal(size=t.shape)
            small, large = sorted(rng.uniform(0.01, 0.2, size=2))
            if psnr(t + small * noise, t) < psnr(t + large * noise, t):
                monotone = False
        return PropertyResult(name="psnr_monotone", passed=monotone, cases=cases + 1, detail=", ".join(f"{v:.2f}" for v in values))

    def suite_bootstrap(self) -> PropertyResult:
        rng = np.random.default_rng(12000)
        diffs = rng.normal(0.3, 1.0, size=500)
        first = paired_bootstrap(diffs, n_resamples=2000, seed=3)
        threaded = paired_bootstrap(diffs, n_resamples=2000, seed=3, threads=2)
        again = paired_bootstrap(diffs, n_resamples=2000, seed=3)
        constant = paired_bootstrap(np.ones(50), n_resamples=1000, seed=0)
        passed = (
            first == again
            and threaded == first
            and constant.lo == constant.hi == 1.0
            and constant.p_boot_is_bound
        )
        return PropertyResult(name="bootstrap_determinism", passed=passed, cases=4, detail=f"CI [{first.lo:.4f}, {first.hi:.4f}]")

    # ------------------------------------------------------------------
    # Runner
    # ------------------------------------------------------------------
    def run(self, names: list[str] | None = None) -> PropertyReport:
        """cmd_props: run the selected suites (all by default).

        Args:
            names: Suite names; unknown names raise ConfigError

        Returns:
            PropertyReport; ``report.passed`` is False when any suite failed
        """
        selected = names or list(self.suites)
        unknown = [n for n in selected if n not in self.suites]
        if unknown:
            raise ConfigError(f"unknown property suites {unknown}; available: {list(self.suites)}")

        results = []
        for name in selected:
            result = self._execute_with_error_handling(f"running property suite {name}", self.suites[name])
            status = "passed" if result.passed else "FAILED"
            log = logger.info if result.passed else logger.warning
            log(f"{name}: {status} ({result.cases} cases) {result.detail}")
            results.append(result)
        return PropertyReport(fault=self.fault, results=results)
