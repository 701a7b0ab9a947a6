"""Materialized experiment runs.

Every experiment writes into a run directory (root from $COOPCONV_RUNS,
default ./runs) keyed by its resolved configuration; finished runs are
skipped on re-entry, so the acceptance suite and the CLI can resume after
interruption and figure data can be regenerated deterministically.

Budget and protocol choices pinned here, used by both the CLI and the
acceptance suite:

- Ego training runs at the per-env published training budget (bandit 1e4,
  blocks 1e6, hanabi scaled to 1.5e5 to keep the suite tractable on one
  core); self-play partners always use the published budgets.
- Oracle-marginal runs: the lambda sweeps train against the four
  hand-designed partners (whose conventions cover each context's optima
  exactly uniformly, making the uniform oracle attainable); the
  non-modular baselines train against the standard training split
  (self-play + hand-designed), as in the reported bars.
- Task transfer fine-tunes the trunk with the adaptation hyperparameters
  and no marginal term; the modular baseline's zero-shot score composes
  its unchanged trunk with the held-out heads directly.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .adaptation import adapt_new_partner, adapt_plain, transfer_new_task, zero_shot_eval
from .envs.bandit import BanditEnv, make_arms_task, make_study_tasks, make_tweaked_task
from .envs.blocks import BlocksEnv, BlocksTask
from .envs.hanabi import HanabiEnv
from .metrics import MetricsWriter
from .neural import masked_softmax
from .oracles import bandit_oracle_marginal, blocks_convention_marginal, l1_distance
from .partners import (NeuralPartner, make_bandit_fixed_partners,
                       make_blocks_permutation_partners, partners_from_study_log,
                       retarget_fixed_partner, split_study_partners)
from .policy import ModularPolicy
from .training.algos import (train_baseline_agg, train_ego, train_fomaml,
                             train_selfplay_partner)
from .training.ppo import PpoConfig, default_config
from .training.rollout import ModularActor, NetActor, ScriptedSeat, collect

log = logging.getLogger(__name__)

# Bumped whenever the training stack's numerics change, so cached runs
# trained under older behavior are rebuilt rather than silently reused.
PIPELINE_REV = 1

EGO_STEPS = {"bandit": 10_000, "blocks": 1_000_000, "hanabi": 150_000}
ROLLOUT = {"bandit": 128, "blocks": 240, "hanabi": 640}
BATCH_EPISODES = {"bandit": 128, "blocks": 40, "hanabi": 64}
TRANSFER_BUDGET = {"bandit": 10_000, "blocks": 200_000}
ADAPT_BUDGET = {"bandit": 10_000, "blocks": 50_000, "hanabi": 40_000}
ADAPT_EVAL_EVERY = {"bandit": 1_000, "blocks": 5_000, "hanabi": 5_000}
EVAL_EPISODES = {"bandit": 200, "blocks": 100, "hanabi": 100}
SELFPLAY_SEED_BASE = {"train": 1000, "test": 2000}
ADAPT_HP = {
    "bandit": {"epochs": 50, "minibatch": 16},
    "blocks": {"epochs": 5, "minibatch": 160},
    "hanabi": {"epochs": 5, "minibatch": 160},
}
# Ego training reuses the published self-play tables except bandit epochs:
# 20-epoch updates on 128-step windows let a head's family-arm bias outrun
# context discrimination and lock in wrong commitments; 10 is stable.
EGO_HP = {"bandit": {"epochs": 10}, "blocks": {}, "hanabi": {}}

METHODS = ("ours", "baseline-agg", "baseline-modular", "fomaml")


def runs_root() -> Path:
    return Path(os.environ.get("COOPCONV_RUNS", "runs"))


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def ensure_run(name: str, config: dict, builder) -> dict:
    """Build-or-load: if the run directory holds a finished result for this
    exact configuration, return it; otherwise run the builder."""
    config = {"pipeline_rev": PIPELINE_REV, **config}
    run_dir = runs_root() / name
    done = run_dir / "done.json"
    chash = _config_hash(config)
    if done.exists():
        payload = json.loads(done.read_text())
        if payload.get("config_hash") == chash:
            return payload["result"]
        log.warning("run %s: configuration changed, rebuilding", name)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "resolved_config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n")
    log.info("running %s", name)
    result = builder(run_dir)
    done.write_text(json.dumps(
        {"config_hash": chash, "result": result}, indent=2, sort_keys=True) + "\n")
    return result


# -- environments ---------------------------------------------------------------

def env_factory(env: str, *, m: int = 4, tweaked: bool = False,
                study: bool = False):
    if env == "bandit":
        if study:
            task = make_study_tasks()[0]
        elif tweaked:
            task = make_tweaked_task(m)
        else:
            task = make_arms_task(m)
        return lambda: BanditEnv(task)
    if env == "blocks":
        task = BlocksTask(tweaked=tweaked)
        return lambda: BlocksEnv(task)
    if env == "hanabi":
        return lambda: HanabiEnv()
    raise ValueError(f"unknown env {env!r}")


def _base_cfg(env: str, lam: float = 0.0, **overrides) -> PpoConfig:
    cfg = default_config(env).with_(lam=lam, rollout_steps=ROLLOUT[env],
                                    batch_episodes=BATCH_EPISODES[env])
    return cfg.with_(**overrides) if overrides else cfg


# -- self-play partner populations ------------------------------------------------

def ensure_selfplay_partner(env: str, variant: str, index: int,
                            task_kw: dict | None = None) -> str:
    """Train (or load) one self-play partner; returns the checkpoint path.

    The partner seat is saved: seat 1 for bandit/blocks (the ego plays seat
    0), the shared seat-symmetric net for hanabi.
    """
    task_kw = task_kw or {}
    seed = SELFPLAY_SEED_BASE[variant] + index
    key = "_".join(f"{k}{v}" for k, v in sorted(task_kw.items()))
    name = f"selfplay/{env}{('_' + key) if key else ''}/{variant}_{index}"
    config = {"env": env, "variant": variant, "index": index, "seed": seed,
              "task": task_kw, "timesteps": default_config(env).timesteps}

    def build(run_dir: Path) -> dict:
        factory = env_factory(env, **task_kw)
        cfg = _base_cfg(env)
        net0, net1, sink = train_selfplay_partner(factory, cfg, seed)
        path = run_dir / "partner.ckpt"
        ckpt.save_plain_net(path, net1, meta={"env": env, "seat": 1,
                                              "variant": variant, "index": index})
        with MetricsWriter(run_dir / "metrics.csv") as mw:
            for row in sink.rows:
                mw.write(run_id=name, method="selfplay", env=env, seed=seed, **row)
        final = sink.rows[-1]["mean_score"] if sink.rows else float("nan")
        return {"checkpoint": str(path), "final_score": final}

    return ensure_run(name, config, build)["checkpoint"]


def selfplay_population(env: str, variant: str, count: int,
                        task_kw: dict | None = None) -> list[NeuralPartner]:
    partners = []
    for i in range(count):
        path = ensure_selfplay_partner(env, variant, i, task_kw)
        net, _ = ckpt.load_plain_net(path)
        partners.append(NeuralPartner(net, seat=1, greedy=True,
                                      label=f"{env}-selfplay-{variant}-{i}"))
    return partners


def partner_population(env: str, variant: str, *, m: int = 4,
                       study: bool = False) -> list:
    """Standard splits: bandit 10 self-play + 4 hand-designed (or the
    study-derived halves); blocks 6 self-play + 3 hand-designed for training
    and 6 + 6 for testing; hanabi 4 self-play each."""
    if env == "bandit":
        if study:
            train, test = split_study_partners(partners_from_study_log())
            return train if variant == "train" else test
        task = make_arms_task(m)
        hand = make_bandit_fixed_partners(task, 4, variant)
        sp = selfplay_population("bandit", variant, 10, {"m": m})
        return sp + hand
    if env == "blocks":
        hand = make_blocks_permutation_partners(variant)
        sp = selfplay_population("blocks", variant, 6)
        return sp + hand
    if env == "hanabi":
        return selfplay_population("hanabi", variant, 4)
    raise ValueError(env)


def _resolve_partners(env: str, population: str, variant: str, m: int) -> list:
    if population == "hand":
        if env == "bandit":
            return make_bandit_fixed_partners(make_arms_task(m), 4, variant)
        if env == "blocks":
            return make_blocks_permutation_partners(variant)
        raise ValueError("hanabi has no hand-designed partners")
    if population == "study":
        train, test = split_study_partners(partners_from_study_log())
        return train if variant == "train" else test
    if population == "split":
        return partner_population(env, variant, m=m)
    raise ValueError(f"unknown population {population!r}")


# -- ego training -----------------------------------------------------------------

def _train_method(method: str, factory, partners, cfg: PpoConfig, seed: int,
                  env: str | None = None, low_dim_z: bool = False):
    if method == "ours":
        return train_ego(factory, partners, cfg, seed, low_dim_z=low_dim_z)
    if method == "baseline-modular":
        return train_ego(factory, partners, cfg.with_(lam=0.0), seed,
                         low_dim_z=low_dim_z)
    if method == "baseline-agg":
        return train_baseline_agg(factory, partners, cfg.with_(lam=0.0), seed)
    if method == "fomaml":
        inner_hp = ADAPT_HP.get(env or "", None)
        return train_fomaml(factory, partners, cfg.with_(lam=0.0), seed,
                            inner_hp=inner_hp)
    raise ValueError(f"unknown method {method!r}")


def ensure_ego_run(env: str, method: str, lam: float, seed: int, *,
                   population: str = "split", variant: str = "train",
                   task_kw: dict | None = None, low_dim_z: bool = False,
                   timesteps: int | None = None) -> dict:
    """Train (or load) one ego policy for ``method`` against the requested
    partner population; shared by every experiment needing that artifact."""
    task_kw = dict(task_kw or {})
    steps = timesteps if timesteps is not None else EGO_STEPS[env]
    key = "_".join(f"{k}{v}" for k, v in sorted(task_kw.items()))
    ztag = "_lowz" if low_dim_z else ""
    name = (f"ego/{env}{('_' + key) if key else ''}/{population}-{variant}/"
            f"{method}_lam{lam}_steps{steps}{ztag}_seed{seed}")
    config = {"env": env, "method": method, "lam": lam, "seed": seed,
              "task": task_kw, "population": population, "variant": variant,
              "timesteps": steps, "low_dim_z": low_dim_z}

    def build(run_dir: Path) -> dict:
        factory = env_factory(env, **task_kw)
        if population == "split" and env == "hanabi":
            partners = partner_population("hanabi", variant)
        else:
            partners = _resolve_partners(env, population, variant,
                                         task_kw.get("m", 4))
        cfg = _base_cfg(env, lam=lam, timesteps=steps, **EGO_HP[env])
        policy, sink = _train_method(method, factory, partners, cfg, seed, env,
                                     low_dim_z=low_dim_z)
        path = run_dir / "policy.ckpt"
        meta = {"env": env, "method": method, "lam": lam, "seed": seed,
                "n_partners": len(partners)}
        if isinstance(policy, ModularPolicy):
            ckpt.save_modular_policy(path, policy, meta)
        else:
            ckpt.save_plain_net(path, policy, meta)
        with MetricsWriter(run_dir / "metrics.csv") as mw:
            for row in sink.rows:
                mw.write(run_id=name, method=method, env=env,
                         **{"lambda": lam}, seed=seed, **row)
        scores = [r["mean_score"] for r in sink.rows[-max(len(partners), 1):]]
        return {"checkpoint": str(path), "n_partners": len(partners),
                "final_score": float(np.mean(scores)) if scores else float("nan")}

    return ensure_run(name, config, build)


def load_policy(run: dict):
    return ckpt.load_any(run["checkpoint"])[0]


# -- oracle-marginal measurement ----------------------------------------------------

def policy_action_dist(policy, obs, mask) -> np.ndarray:
    """The distribution compared against oracle marginals: the task module's
    for modular policies, the policy's own for single-net baselines."""
    if isinstance(policy, ModularPolicy):
        return policy.task_marginal(obs, mask)
    logits, _, _, _ = policy.forward(np.atleast_2d(obs))
    return masked_softmax(logits, np.atleast_2d(np.asarray(mask, dtype=bool)))[0]


def bandit_marginal_distance(policy, task) -> float:
    env = BanditEnv(task)
    ds = []
    for c in range(task.contexts):
        obs, _ = env.reset_to_context(c)
        dist = policy_action_dist(policy, obs, np.ones(task.arms, dtype=bool))
        ds.append(l1_distance(dist, bandit_oracle_marginal(task, c)))
    return float(np.mean(ds))


def blocks_marginal_distance(policy, partners, head_ids=None,
                             episodes_per_partner: int = 20,
                             seed: int = 12345) -> float:
    """Visitation-weighted distance on the ego's decision states, rolled out
    with the hand-designed permutation partners (sampled ego actions for
    state diversity).

    The reference is the exact best-response marginal over the training
    convention distribution (uniform over the population's permutations),
    restricted to states where every consistent convention admits a unique
    best response — the sufficiency lemma's own domain. States outside it
    (payoff-tied plans, or histories the family cannot produce) are skipped."""
    rng = np.random.default_rng(seed)
    factory = env_factory("blocks")
    ds = []
    for i, partner in enumerate(partners):
        if isinstance(policy, ModularPolicy):
            ids = head_ids if head_ids is not None else policy.active_ids()
            ego = ModularActor(policy, ids[i % len(ids)])
        else:
            ego = NetActor(policy)
        traj = collect(factory, {0: ego, 1: ScriptedSeat(partner)}, n_steps=1,
                       rng=rng, record_seats={0}, env_id="blocks",
                       max_episodes=episodes_per_partner)
        for ep in traj.episodes:
            obs0 = ep[0].obs
            goal_red = int(np.argmax(obs0[0:4]))
            goal_blue = int(np.argmax(obs0[4:8]))
            actions = [rec.action for rec in sorted(ep, key=lambda r: r.step)]
            for rec in ep:
                if rec.acting_player != 0:
                    continue
                oracle = blocks_convention_marginal(
                    goal_red, goal_blue, actions[:rec.step],
                    sigmas=[p.sigma for p in partners], unique_only=True)
                if oracle is None:
                    continue
                dist = policy_action_dist(policy, rec.obs, rec.legal_mask)
                ds.append(l1_distance(dist, oracle))
    return float(np.mean(ds))


def marginal_experiment(env: str, method: str, lam: float, seeds: list[int],
                        m: int = 4) -> dict:
    """Distance between the method's action distribution and the oracle
    marginal, averaged over seeds."""
    lam_run = lam if method == "ours" else 0.0
    # lambda sweeps train against the hand-designed partners (their
    # conventions cover the oracle's family); the non-modular baselines use
    # the standard training split, as in the reported bars
    population = "hand" if method in ("ours", "baseline-modular") else "split"
    key = f"m{m}" if env == "bandit" else "base"
    name = f"marginal/{env}_{key}/{method}_lam{lam_run}"
    config = {"env": env, "m": m, "method": method, "lam": lam_run,
              "seeds": seeds, "population": population,
              "oracle": "training-family-lemma-v2" if env == "blocks" else "uniform-optima",
              "ego_steps": EGO_STEPS[env]}

    def build(run_dir: Path) -> dict:
        per_seed = []
        for seed in seeds:
            task_kw = {"m": m} if env == "bandit" else {}
            run = ensure_ego_run(env, method, lam_run, seed,
                                 population=population, task_kw=task_kw)
            policy = load_policy(run)
            if env == "bandit":
                per_seed.append(bandit_marginal_distance(policy, make_arms_task(m)))
            elif env == "blocks":
                sigmas = make_blocks_permutation_partners("train")
                head_ids = None
                if isinstance(policy, ModularPolicy):
                    head_ids = policy.active_ids()[-len(sigmas):]
                per_seed.append(blocks_marginal_distance(policy, sigmas,
                                                         head_ids=head_ids))
            else:
                raise ValueError("oracle marginals are not defined for hanabi")
        return {"env": env, "m": m, "method": method, "lambda": lam_run,
                "per_seed": per_seed, "mean_D": float(np.mean(per_seed))}

    return ensure_run(name, config, build)


# -- zero-shot task transfer -----------------------------------------------------

def zeroshot_experiment(env: str, method: str, seeds: list[int], m: int = 1,
                        baseline_finetunes: bool = False) -> dict:
    """Train with 2n hand-designed partners on the base task; for `ours`,
    fine-tune the task module on the tweaked task with the first n heads
    frozen, then evaluate held-out (head, partner) pairs with no updates.

    The modular baseline recomposes its unchanged trunk with the held-out
    heads directly (its trunk has no marginal anchor that fine-tuning could
    preserve); pass ``baseline_finetunes=True`` for the mirrored variant.
    """
    if method not in ("ours", "baseline-modular"):
        raise ValueError("zero-shot transfer compares ours and baseline-modular")
    lam = 0.5 if method == "ours" else 0.0
    finetune = method == "ours" or baseline_finetunes
    per_seed = []
    for seed in seeds:
        suffix = "_ft" if (baseline_finetunes and method != "ours") else ""
        name = f"zeroshot/{env}_m{m}/{method}{suffix}_seed{seed}"
        config = {"env": env, "m": m, "method": method, "seed": seed,
                  "transfer_budget": TRANSFER_BUDGET[env], "finetune": finetune,
                  "ego_steps": EGO_STEPS[env]}

        def build(run_dir: Path) -> dict:
            if env == "bandit":
                old_task = make_arms_task(m)
                new_task = make_tweaked_task(m)
                train_p = make_bandit_fixed_partners(old_task, 4, "train")
                test_p = make_bandit_fixed_partners(old_task, 4, "test")
                new_train = [retarget_fixed_partner(p, new_task) for p in train_p]
                new_test = [retarget_fixed_partner(p, new_task) for p in test_p]
                f_old = lambda: BanditEnv(old_task)
                f_new = lambda: BanditEnv(new_task)
            elif env == "blocks":
                train_p = make_blocks_permutation_partners("train")
                test_p = make_blocks_permutation_partners("test")[:3]
                new_train, new_test = train_p, test_p   # sigma conventions carry over
                f_old = env_factory("blocks")
                f_new = env_factory("blocks", tweaked=True)
            else:
                raise ValueError("zero-shot transfer covers bandit and blocks")
            n = len(train_p)
            cfg = _base_cfg(env, lam=lam, timesteps=EGO_STEPS[env], **EGO_HP[env])
            policy, _ = train_ego(f_old, list(train_p) + list(test_p), cfg, seed)
            if finetune:
                tcfg = cfg.with_(lam=0.0, **ADAPT_HP[env])
                transfer_new_task(policy, f_new, new_train, tcfg,
                                  budget=TRANSFER_BUDGET[env], seed=seed + 7919)
            ckpt.save_modular_policy(run_dir / "transferred.ckpt", policy,
                                     {"env": env, "method": method})
            ids = policy.active_ids()[n:2 * n]
            scores = zero_shot_eval(policy, ids, new_test, f_new,
                                    EVAL_EPISODES[env], seed=9001)
            return {"scores": scores, "mean": float(np.mean(scores))}

        per_seed.append(ensure_run(name, config, build)["mean"])
    return {"env": env, "m": m, "method": method, "per_seed": per_seed,
            "mean": float(np.mean(per_seed))}


# -- adaptation to new partners -----------------------------------------------------

def adaptation_experiment(env: str, method: str, seeds: list[int],
                          partner_set: str = "hand", m: int = 2) -> dict:
    """Adapt a trained policy to each held-out partner; returns per-seed
    AUC and final scores averaged over the test partners."""
    if partner_set == "study":
        task_kw: dict = {"study": True}
        population = "study"
    elif partner_set == "hand":
        task_kw = {"m": m} if env == "bandit" else {}
        population = "hand"
    else:
        task_kw = {"m": m} if env == "bandit" else {}
        population = "split"
    lam = 0.5 if method == "ours" else 0.0
    results = {"curves": [], "auc_per_seed": [], "final_per_seed": []}
    for seed in seeds:
        name = f"adapt/{env}_{partner_set}{task_kw.get('m', '')}/{method}_seed{seed}"
        config = {"env": env, "method": method, "seed": seed, "set": partner_set,
                  "task": task_kw, "budget": ADAPT_BUDGET[env],
                  "ego_steps": EGO_STEPS[env]}

        def build(run_dir: Path) -> dict:
            factory = env_factory(env, **task_kw)
            run = ensure_ego_run(env, method, lam, seed, population=population,
                                 task_kw=task_kw)
            policy = load_policy(run)
            test_partners = _resolve_partners(env, population, "test",
                                              task_kw.get("m", 4))
            cfg = _base_cfg(env, lam=0.0, **ADAPT_HP[env])
            budget = ADAPT_BUDGET[env]
            every = ADAPT_EVAL_EVERY[env]
            aucs, finals, curves = [], [], []
            for j, partner in enumerate(test_partners):
                pseed = seed * 1000 + j
                if isinstance(policy, ModularPolicy):
                    adapted = copy.deepcopy(policy)
                    res = adapt_new_partner(adapted, partner, factory, cfg,
                                            budget, pseed, every,
                                            EVAL_EPISODES[env])
                else:
                    res = adapt_plain(policy, partner, factory, cfg, budget,
                                      pseed, every, EVAL_EPISODES[env])
                aucs.append(res.auc())
                finals.append(res.final_score())
                curves.append([[p.timesteps, p.mean_score] for p in res.curve])
            with MetricsWriter(run_dir / "curves.csv") as mw:
                for j, curve in enumerate(curves):
                    for ts, score in curve:
                        mw.write(run_id=name, method=method, env=env,
                                 **{"lambda": lam}, seed=seed, phase="adapt",
                                 partner_id=j, timesteps=ts, mean_score=score)
            return {"auc": float(np.mean(aucs)), "final": float(np.mean(finals)),
                    "curves": curves}

        res = ensure_run(name, config, build)
        results["auc_per_seed"].append(res["auc"])
        results["final_per_seed"].append(res["final"])
        results["curves"].append(res["curves"])
    results["mean_auc"] = float(np.mean(results["auc_per_seed"]))
    results["mean_final"] = float(np.mean(results["final_per_seed"]))
    return results
