import json
import math
import os
from pathlib import Path

import pytest

import cpr

TINY = Path(__file__).resolve().parents[2] / "configs" / "tiny.conf"


def test_calibrate_matches_sorted_rank():
    t = cpr.calibrate([9, 3, 1, 7, 5, 2, 8, 4, 6], 0.5)
    assert t["k"] == 5 and t["tau"] == 5
    assert cpr.calibrate([1, 2, 3, 4], 0.1)["tau"] == cpr.INF
    assert cpr.conformal_rank(9, 0.3) == 7
    with pytest.raises(ValueError):
        cpr.calibrate([], 0.5)


def test_coverage_trial_with_python_sampler():
    rate = cpr.coverage_trial(lambda rng: rng.normal(), 100, 0.3, 2000, 1)
    sigma = math.sqrt(0.3 * 0.7 / 2000)
    assert 0.7 - 3 * sigma <= rate <= 0.7 + 1 / 101 + 3 * sigma
    threaded = cpr.coverage_trial(lambda rng: rng.normal(), 100, 0.3, 2000, 1, workers=3)
    assert threaded == rate


def test_scalar_helpers():
    assert cpr.pair_loss(0.0, 0.0) == pytest.approx(math.log(2))
    assert cpr.v_sem((0.8, 0.2, 0.5)) == pytest.approx(-0.5)
    assert cpr.coverage_efficiency(0.614, 7.14) == pytest.approx(0.0860, abs=5e-4)
    assert cpr.coverage_efficiency(0.0, 0.0) is None
    assert cpr.puct_select([0, 1], [0.5, 0.5], [(5, 5.0), (0, 0.0)], 2.0) == 1
    assert cpr.softmax([1.0, 0.0])[0] == pytest.approx(0.7311, abs=1e-4)
    v = cpr.hash_embed("film director", 16, 3)
    assert cpr.similarity(v, v) == pytest.approx(1.0)
    assert cpr.tokenize("people.person.spouse") == ["people", "person", "spouse"]


def test_fresh_network_is_the_semantic_baseline(tmp_path):
    p = cpr.RcvnetParams.initialize(embed_dim=4, width=8, seed=1)
    x = (0.3, 0.6, 0.5)
    assert p.forward(x, [0.1] * 12) == cpr.v_sem(x)
    p.save(str(tmp_path / "p.txt"))
    q = cpr.RcvnetParams.load(str(tmp_path / "p.txt"))
    assert q.forward(x, [0.2] * 12) == p.forward(x, [0.2] * 12)
    with pytest.raises(RuntimeError):
        p.forward(x, [0.0] * 5)


def test_hints():
    chains = cpr.parse_hint_json('{"chains":[["b.c.d"],["a.b.c","b.c.d"]]}')
    assert cpr.flatten_hints(chains) == ["a.b.c", "b.c.d"]
    prompt = cpr.hint_prompt("who is it", 3)
    assert "(1 to 3 hops)" in prompt and prompt.endswith("Question: who is it\nJSON:")
    with pytest.raises(ValueError):
        cpr.parse_hint_json("not json")


def test_synth_generate_is_deterministic():
    a = cpr.synth_generate(n_entities=200, n_relations=30, n_queries=50, seed=4)
    b = cpr.synth_generate(n_entities=200, n_relations=30, n_queries=50, seed=4)
    assert a == b
    assert a["ok"] and a["reachability"] == 1.0
    assert sum(a["depth_histogram"].values()) == 50
    assert json.loads(a["manifest_json"])["seed"] == 4
    with pytest.raises(ValueError):
        cpr.synth_generate(branching=0.5)


def test_end_to_end_tiny(tmp_path):
    rows = cpr.run(TINY, out_dir=tmp_path / "run", settings={"workers": 2})
    assert [r["alpha"] for r in rows] == pytest.approx([0.3, 0.4, 0.5, 0.6, 0.7, 0.8])
    apss = [r["apss"] for r in rows]
    assert apss == sorted(apss, reverse=True)
    assert (tmp_path / "run" / "report.csv").read_text().startswith("alpha,ecr,apss")
    again = cpr.run(TINY, out_dir=tmp_path / "again")
    assert rows == again
    assert (tmp_path / "run" / "report.csv").read_bytes() == (tmp_path / "again" / "report.csv").read_bytes()


def test_missing_input_maps_to_file_not_found(tmp_path):
    cfg = cpr.RunConfig.from_file(str(TINY))
    cfg.out_dir = str(tmp_path)
    cfg.set("graph", str(tmp_path / "absent.tsv"))
    with pytest.raises(FileNotFoundError):
        cpr.phase_collect(cfg)
    with pytest.raises(ValueError):
        cfg.set("no.such.key", "1")
