"""On-disk run artifacts: policy tables, agent bundles, planning cache.

Layout under an experiment output directory:

    manifest.json                       config echo + fingerprints + timestamps
    planning/<label>__<hash>/           shared cooperative pairs (deterministic,
                                        identical across seeds, stored once)
    runs/<run_id>/                      per-seed artifacts + meta.json
    results.tsv, aggregates.tsv         written by the evaluate stage

Tabular policies are .npz files (integer key matrix + action/probability
arrays + a JSON metadata string). Loading verifies the environment
fingerprint so a policy can never silently drive the wrong environment.
"""

from __future__ import annotations

import hashlib
import json
import os
import subprocess
from pathlib import Path
from typing import Optional

import numpy as np

from .amtft import AmTFTBundle, AmTFTConfig
from .lola import Memory1Policy
from .planning import JointPolicyResult, TabularPolicy
from .welfare import WelfareSpec


class ArtifactError(RuntimeError):
    pass


def save_tabular_policy(path, policy: TabularPolicy) -> None:
    keys = np.array(sorted(policy.table), dtype=np.int32)
    first = tuple(keys[0]) if len(keys) else None
    deterministic = all(isinstance(v, int) for v in policy.table.values())
    meta = {
        "n_actions": policy.n_actions,
        "env_fingerprint": policy.env_fingerprint,
        "meta": policy.meta,
        "default_action": policy.default_action,
        "deterministic": deterministic,
    }
    if deterministic:
        values = np.array([policy.table[tuple(k)] for k in keys], dtype=np.int8)
    else:
        values = np.array([np.asarray(policy.probs(tuple(k)), dtype=float)
                           for k in keys])
    np.savez_compressed(path, keys=keys, values=values,
                        meta=np.array(json.dumps(meta)))


def load_tabular_policy(path, expect_fingerprint: Optional[str] = None) -> TabularPolicy:
    with np.load(path, allow_pickle=False) as data:
        keys = data["keys"]
        values = data["values"]
        meta = json.loads(str(data["meta"]))
    if expect_fingerprint is not None and meta["env_fingerprint"] != expect_fingerprint:
        raise ArtifactError(
            f"policy at {path} was trained for a different environment\n"
            f"  stored:   {meta['env_fingerprint']}\n"
            f"  expected: {expect_fingerprint}")
    if meta["deterministic"]:
        table = {tuple(int(x) for x in k): int(v) for k, v in zip(keys, values)}
    else:
        table = {tuple(int(x) for x in k): v for k, v in zip(keys, values)}
    return TabularPolicy(table, meta["n_actions"], meta["env_fingerprint"],
                         meta["meta"], meta["default_action"])


def save_memory1_policy(path, policy: Memory1Policy) -> None:
    Path(path).write_text(json.dumps(policy.to_dict()) + "\n")


def load_memory1_policy(path) -> Memory1Policy:
    return Memory1Policy.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Shared planning cache (cooperative pairs are identical across seeds).

def _short_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:10]


def planning_cache_dir(root, welfare_label: str, env_fingerprint: str) -> Path:
    return Path(root) / "planning" / f"{welfare_label}__{_short_hash(env_fingerprint)}"


def save_joint_policies(root, welfare_label: str, env_fingerprint: str,
                        joint: JointPolicyResult) -> Path:
    d = planning_cache_dir(root, welfare_label, env_fingerprint)
    if (d / "meta.json").exists():
        return d
    d.mkdir(parents=True, exist_ok=True)
    save_tabular_policy(d / "coop1.npz", joint.policy1)
    save_tabular_policy(d / "coop2.npz", joint.policy2)
    meta = {
        "welfare_label": welfare_label,
        "env_fingerprint": env_fingerprint,
        "values": list(joint.values),
        "welfare_value": joint.welfare_value,
        "schedule": joint.schedule,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return d


def load_joint_policies(cache_dir, expect_fingerprint: str) -> JointPolicyResult:
    d = Path(cache_dir)
    meta = json.loads((d / "meta.json").read_text())
    if meta["env_fingerprint"] != expect_fingerprint:
        raise ArtifactError(f"planning cache {d} belongs to a different environment")
    p1 = load_tabular_policy(d / "coop1.npz", expect_fingerprint)
    p2 = load_tabular_policy(d / "coop2.npz", expect_fingerprint)
    schedule = meta["schedule"]
    if schedule is not None:
        schedule = tuple(tuple(x) for x in schedule)
    return JointPolicyResult(p1, p2, tuple(meta["values"]),
                             meta["welfare_value"], schedule)


# ---------------------------------------------------------------------------
# amTFT bundles.

def save_amtft_bundle(run_dir, root, bundle: AmTFTBundle, env_fingerprint: str) -> None:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cache = save_joint_policies(root, bundle.welfare.label, env_fingerprint, bundle.joint)
    for seat in (1, 2):
        save_tabular_policy(run_dir / f"punish{seat}.npz", bundle.punish[seat])
        save_tabular_policy(run_dir / f"response{seat}.npz", bundle.punish_response[seat])
    meta = {
        "env_name": bundle.env_name,
        "env_fingerprint": env_fingerprint,
        "welfare": bundle.welfare.to_dict(),
        "config": bundle.config.to_dict(),
        "seed": bundle.seed,
        "planning_cache": str(cache.relative_to(root)),
    }
    (run_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_amtft_bundle(run_dir, root, expect_fingerprint: str) -> AmTFTBundle:
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "meta.json").read_text())
    if meta["env_fingerprint"] != expect_fingerprint:
        raise ArtifactError(f"bundle {run_dir} belongs to a different environment")
    joint = load_joint_policies(Path(root) / meta["planning_cache"], expect_fingerprint)
    punish = {}
    response = {}
    for seat in (1, 2):
        punish[seat] = load_tabular_policy(run_dir / f"punish{seat}.npz", expect_fingerprint)
        response[seat] = load_tabular_policy(run_dir / f"response{seat}.npz", expect_fingerprint)
    cfg = AmTFTConfig(**meta["config"])
    return AmTFTBundle(env_name=meta["env_name"],
                       welfare=WelfareSpec.from_dict(meta["welfare"]),
                       joint=joint, punish=punish, punish_response=response,
                       config=cfg, seed=meta["seed"])


def run_complete(run_dir) -> bool:
    return (Path(run_dir) / "meta.json").exists()


def git_fingerprint(cwd=None) -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, cwd=cwd, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"
