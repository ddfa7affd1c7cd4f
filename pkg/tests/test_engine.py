import dataclasses

from qask import prompts
from qask.agents import AgentConfig, ScriptedOracle, ScriptedQuestioner, make_questioner
from qask.core import Rsq
from qask.engine import EngineConfig, run_episode, run_qask

from conftest import make_episode


def always_no():
    return make_questioner(AgentConfig(id="always-no", kind="scripted",
                                       params={"mode": "always_no"}))


def perfect(specs):
    refs = [s.observations[-1] for s in specs]
    return make_questioner(AgentConfig(id="perfect", kind="scripted",
                                       params={"mode": "perfect", "accept_refs": refs}))


def scripted(script):
    return ScriptedQuestioner(AgentConfig(id="scripted", kind="scripted"), script=script)


def silent_oracle(lookup=None):
    return ScriptedOracle(AgentConfig(id="oracle", kind="scripted"),
                          lookup=lookup or {})


def rsq(reasoning, score, question=None):
    return prompts.render_rsq(Rsq(reasoning, score, question))


def test_always_negative_fails_only_on_the_target(image_dir):
    spec = make_episode(image_dir, "neg", 5)
    result = run_episode(spec, always_no(), silent_oracle(), EngineConfig())
    assert len(result.steps) == 5
    assert [s.correct for s in result.steps] == [True, True, True, True, False]
    assert result.finished is False


def test_perfect_questioner_finishes_with_no_questions(image_dir):
    spec = make_episode(image_dir, "perf", 4)
    result = run_episode(spec, perfect([spec]), silent_oracle(), EngineConfig())
    assert result.finished is True
    assert all(s.correct for s in result.steps)
    assert sum(len(s.questions) for s in result.steps) == 0


def test_questions_are_answered_and_carried_in_context(image_dir):
    spec = make_episode(image_dir, "ctx", 2)
    script = [
        rsq("unsure", 1, "Is it red?"),
        rsq("still unsure", 1, "Is it big?"),
        rsq("not it", 0),
        rsq("the target", 2),
    ]
    oracle = silent_oracle({"is it red?": "No", "is it big?": "Yes"})
    result = run_episode(spec, scripted(script), oracle, EngineConfig())
    step0 = result.steps[0]
    assert len(step0.questions) == 2
    assert [q.answer for q in step0.questions] == ["No", "Yes"]
    assert result.finished is True


def test_wrong_decision_terminates_early(image_dir):
    spec = make_episode(image_dir, "stop", 4)
    script = [rsq("match", 2)]  # accepts the first distractor
    result = run_episode(spec, scripted(script), silent_oracle(), EngineConfig())
    assert len(result.steps) == 1
    assert result.steps[0].correct is False
    assert result.finished is False


def test_stop_on_wrong_disabled_presents_every_observation(image_dir):
    spec = make_episode(image_dir, "go-on", 3)
    script = [rsq("match", 2), rsq("no", 0), rsq("match", 2)]
    cfg = EngineConfig(stop_on_wrong=False)
    result = run_episode(spec, scripted(script), silent_oracle(), cfg)
    assert len(result.steps) == 3
    assert [s.correct for s in result.steps] == [False, True, True]
    assert result.finished is False


def test_question_cap_zero_forces_an_immediate_decision(image_dir):
    spec = make_episode(image_dir, "cap0", 2)
    # first output asks; the forced re-prompt then decides
    script = [rsq("unsure", 1, "Is it red?"), rsq("fine, no", 0), rsq("target", 2)]
    cfg = EngineConfig(max_questions_per_observation=0)
    result = run_episode(spec, scripted(script), silent_oracle(), cfg)
    assert result.finished is True
    step0 = result.steps[0]
    assert len(step0.questions) == 0  # the capped question was never answered
    assert len(step0.raw_outputs) == 2
    assert step0.decision is False


def test_stubborn_questioner_ends_episode_without_decision(image_dir):
    spec = make_episode(image_dir, "stubborn", 3)
    ask = rsq("unsure", 1, "Is it red?")
    script = [ask, ask]  # asks at cap 0, asks again when forced
    cfg = EngineConfig(max_questions_per_observation=0)
    result = run_episode(spec, scripted(script), silent_oracle(), cfg)
    assert result.finished is False
    assert result.steps[-1].decision is None
    assert result.steps[-1].correct is None


def test_agent_error_aborts_with_annotation(image_dir):
    spec = make_episode(image_dir, "err", 3)
    script = [rsq("no", 0)]  # exhausted on the second observation
    result = run_episode(spec, scripted(script), silent_oracle(), EngineConfig())
    assert result.finished is False
    assert result.error is not None
    assert len(result.steps) == 1


def test_call_budget_is_bounded(image_dir):
    spec = make_episode(image_dir, "budget", 4)
    cap = 2

    class CountingQuestioner(ScriptedQuestioner):
        calls = 0

        def turn(self, d, obs, ctx, force_decision=False):
            CountingQuestioner.calls += 1
            return super().turn(d, obs, ctx, force_decision)

    ask = rsq("unsure", 1, "Is it red?")
    script = [ask] * 100
    agent = CountingQuestioner(AgentConfig(id="c", kind="scripted"), script=script)
    result = run_episode(spec, agent, silent_oracle(), EngineConfig(
        max_questions_per_observation=cap))
    assert CountingQuestioner.calls <= spec.n * (cap + 2)
    assert result.finished is False


def test_obs_indices_are_contiguous_from_zero(image_dir):
    spec = make_episode(image_dir, "order", 4)
    result = run_episode(spec, perfect([spec]), silent_oracle(), EngineConfig())
    assert [s.obs_index for s in result.steps] == list(range(spec.n))


def test_context_persists_across_observations(image_dir):
    spec = make_episode(image_dir, "persist", 2)

    seen_contexts = []

    class Spy(ScriptedQuestioner):
        def turn(self, d, obs, ctx, force_decision=False):
            seen_contexts.append(ctx)
            return super().turn(d, obs, ctx, force_decision)

    script = [rsq("unsure", 1, "Is it red?"), rsq("no", 0), rsq("yes", 2)]
    agent = Spy(AgentConfig(id="spy", kind="scripted"), script=script)
    oracle = silent_oracle({"is it red?": "No"})
    run_episode(spec, agent, oracle, EngineConfig())
    # the question answered at obs 0 is visible at obs 1
    assert len(seen_contexts[2]) == 1
    assert seen_contexts[2][0].question == "Is it red?"


def test_run_qask_writes_artifacts(tmp_path, image_dir):
    specs = [make_episode(image_dir, f"rq{i}", n) for i, n in enumerate([5, 6])]
    qcfg = AgentConfig(id="always-no", kind="scripted", params={"mode": "always_no"})
    ocfgs = [AgentConfig(id=f"o{k}", kind="scripted") for k in range(3)]
    run_dir = tmp_path / "run"
    outcome = run_qask(specs, qcfg, ocfgs, EngineConfig(), run_dir=run_dir, workers=2)
    assert len(outcome.results) == 6  # 2 episodes x 3 oracles
    assert (run_dir / "results.jsonl").exists()
    assert (run_dir / "run_manifest.json").exists()
    assert (run_dir / "metrics.json").exists()
    assert (run_dir / "metrics.csv").exists()
