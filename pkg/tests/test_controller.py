import pytest

from qask import prompts
from qask.agents import AgentConfig, ScriptedOracle, ScriptedQuestioner
from qask.controller import Resolution, Route, decide, resolve_detection, score_mae
from qask.core import Rsq

from conftest import make_image


def scripted(script):
    return ScriptedQuestioner(AgentConfig(id="s", kind="scripted"), script=script)


def oracle(lookup=None):
    return ScriptedOracle(AgentConfig(id="o", kind="scripted"), lookup=lookup or {})


def rsq(reasoning, score, question=None):
    return prompts.render_rsq(Rsq(reasoning, score, question))


def test_route_kind_must_match_score():
    Route(kind="discard", reasoning="r", score=0)
    Route(kind="ask", reasoning="r", score=1, question="Why?")
    Route(kind="accept", reasoning="r", score=2)
    with pytest.raises(ValueError):
        Route(kind="accept", reasoning="r", score=0)
    with pytest.raises(ValueError):
        Route(kind="ask", reasoning="r", score=1)  # missing question
    with pytest.raises(ValueError):
        Route(kind="discard", reasoning="r", score=0, question="Why?")


def test_decide_routes_each_score(image_dir):
    obs = make_image(image_dir, "obs")
    assert decide("d", obs, (), scripted([rsq("no", 0)])).kind == "discard"
    ask = decide("d", obs, (), scripted([rsq("hmm", 1, "Is it red?")]))
    assert ask.kind == "ask" and ask.question == "Is it red?"
    assert decide("d", obs, (), scripted([rsq("yes", 2)])).kind == "accept"


def test_immediate_accept_asks_nothing(image_dir):
    obs = make_image(image_dir, "obs")
    res = resolve_detection("d", obs, scripted([rsq("yes", 2)]), oracle(), cap=3)
    assert res == Resolution(final="accept", ctx_out=(), asks=0)


def test_ask_then_accept_extends_context(image_dir):
    obs = make_image(image_dir, "obs")
    script = [rsq("unsure", 1, "Is it red?"), rsq("confirmed", 2)]
    res = resolve_detection("d", obs, scripted(script),
                            oracle({"is it red?": "Yes"}), cap=3)
    assert res.final == "accept"
    assert res.asks == 1
    assert len(res.ctx_out) == 1
    assert res.ctx_out[0].question == "Is it red?"
    assert res.ctx_out[0].answer == "Yes"


def test_cap_hit_discards_conservatively(image_dir):
    obs = make_image(image_dir, "obs")
    ask = rsq("still unsure", 1, "Is it red?")
    script = [ask, ask, ask]
    res = resolve_detection("d", obs, scripted(script), oracle(), cap=2)
    assert res.final == "discard"
    assert res.cap_hit is True
    assert res.asks == 2


def test_cap_zero_never_calls_the_oracle(image_dir):
    obs = make_image(image_dir, "obs")

    class ExplodingOracle(ScriptedOracle):
        def answer(self, request):
            raise AssertionError("oracle must not be consulted at cap 0")

    boom = ExplodingOracle(AgentConfig(id="o", kind="scripted"), lookup={})
    res = resolve_detection("d", obs, scripted([rsq("hmm", 1, "Q?")]), boom, cap=0)
    assert res.final == "discard" and res.cap_hit and res.asks == 0


def test_model_calls_bounded_by_cap_plus_one(image_dir):
    obs = make_image(image_dir, "obs")
    calls = []

    class Counting(ScriptedQuestioner):
        def turn(self, d, o, ctx, force_decision=False):
            calls.append(1)
            return super().turn(d, o, ctx, force_decision)

    cap = 3
    script = [rsq("hmm", 1, "Q?")] * 10
    agent = Counting(AgentConfig(id="c", kind="scripted"), script=script)
    resolve_detection("d", obs, agent, oracle(), cap=cap)
    assert len(calls) <= cap + 1


def test_resolution_carries_incoming_context(image_dir):
    obs = make_image(image_dir, "obs")
    from qask.core import Turn
    prior = (Turn("Earlier?", "Yes"),)
    script = [rsq("unsure", 1, "Next?"), rsq("no", 0)]
    res = resolve_detection("d", obs, scripted(script), oracle(), cap=2, ctx=prior)
    assert res.ctx_out[0] == prior[0]
    assert len(res.ctx_out) == 2


def test_score_mae_examples():
    assert score_mae([0, 1, 2], [0, 1, 2]) == 0.0
    assert score_mae([2, 0], [0, 2]) == 2.0
    assert score_mae([1, 1, 2, 0], [1, 2, 2, 1]) == pytest.approx(0.5)
    with pytest.raises(ValueError, match="length mismatch"):
        score_mae([1], [1, 2])
    with pytest.raises(ValueError):
        score_mae([3], [1])
    with pytest.raises(ValueError):
        score_mae([], [])
