import pytest

from qask import prompts
from qask.agents import (
    AgentConfig,
    AgentError,
    AlwaysNoQuestioner,
    OracleRequest,
    RemoteOracle,
    RemoteQuestioner,
    ReplayQuestioner,
    ScriptedOracle,
    ScriptedQuestioner,
    make_oracle,
    make_questioner,
    oracle_answer,
    questioner_turn,
    truncate_answer,
)
from qask.core import Rsq

from conftest import make_image


def scripted_cfg(**params):
    return AgentConfig(id="scripted", kind="scripted", params=params)


def test_remote_config_requires_endpoint_and_model():
    with pytest.raises(ValueError):
        AgentConfig(id="r", kind="remote")


def test_always_negative_agent_rejects_everything(image_dir):
    agent = AlwaysNoQuestioner(scripted_cfg(mode="always_no"))
    obs = make_image(image_dir, "obs")
    out = questioner_turn(agent, "blue bed", obs, ())
    assert out.kind == "decision" and out.match is False
    assert out.parsed.score == 0


def test_scripted_agent_plays_outputs_in_order(image_dir):
    script = [
        prompts.render_rsq(Rsq("unsure", 1, "Is it red?")),
        prompts.render_rsq(Rsq("no match", 0)),
    ]
    agent = ScriptedQuestioner(scripted_cfg(script=script))
    obs = make_image(image_dir, "obs")
    first = agent.turn("d", obs, ())
    assert first.kind == "question" and first.question == "Is it red?"
    second = agent.turn("d", obs, ())
    assert second.kind == "decision" and second.match is False
    with pytest.raises(AgentError, match="exhausted"):
        agent.turn("d", obs, ())


def test_replay_agent_returns_stored_outputs_verbatim(image_dir):
    raw = prompts.render_rsq(Rsq("certain", 2))
    agent = ReplayQuestioner(AgentConfig(id="rp", kind="replay",
                                         params={"transcript": [raw]}))
    out = agent.turn("d", make_image(image_dir, "o"), ())
    assert out.raw == raw
    assert out.replayed


def test_scripted_oracle_lookup_and_normalization():
    oracle = ScriptedOracle(scripted_cfg(lookup={"is it red?": "No, it is blue."}))
    req = OracleRequest(target_image=b"png", category="bed", question="Is it red?")
    answer, _ = oracle_answer(oracle, req)
    assert answer == "No, it is blue."
    answer2, _ = oracle_answer(
        oracle, OracleRequest(target_image=b"png", category="bed", question="  IS IT RED ")
    )
    assert answer2 == "No, it is blue."


def test_scripted_oracle_miss_uses_default_answer():
    oracle = ScriptedOracle(scripted_cfg(lookup={}))
    answer, _ = oracle_answer(
        oracle, OracleRequest(target_image=b"p", category="bed", question="Is it soft?")
    )
    assert answer == "I cannot tell."


def test_oracle_request_rejects_empty_question():
    with pytest.raises(ValueError):
        OracleRequest(target_image=b"p", category="bed", question="  ")


def test_answers_are_truncated_to_64_tokens():
    long = " ".join(f"w{i}" for i in range(100))
    assert len(truncate_answer(long).split()) == 64


def test_remote_questioner_parses_stub_response(stub_server_factory, image_dir):
    raw = prompts.render_rsq(Rsq("stub reasoning", 1, "Is it patchwork?"))
    server = stub_server_factory(raw)
    cfg = AgentConfig(id="remote-q", kind="remote", endpoint=server.url,
                      model_name="stub-model")
    agent = RemoteQuestioner(cfg)
    out = agent.turn("blue bed", make_image(image_dir, "obs"), ())
    assert out.parsed == Rsq("stub reasoning", 1, "Is it patchwork?")
    assert out.latency > 0
    assert server.request_count == 1


def test_remote_questioner_retries_once_on_parse_failure(stub_server_factory, image_dir):
    good = prompts.render_rsq(Rsq("ok now", 0))

    def reply(body, index):
        return "garbled output" if index == 0 else good

    server = stub_server_factory(reply)
    cfg = AgentConfig(id="remote-q", kind="remote", endpoint=server.url,
                      model_name="stub-model", max_parse_retries=1)
    out = RemoteQuestioner(cfg).turn("blue bed", make_image(image_dir, "o"), ())
    assert out.match is False
    assert server.request_count == 2
    # the retry prompt carries the format reminder
    user = server.requests[1]["messages"][1]["content"][0]["text"]
    assert "Follow the output format exactly." in user


def test_remote_questioner_gives_up_after_retries(stub_server_factory, image_dir):
    server = stub_server_factory("never parseable")
    cfg = AgentConfig(id="remote-q", kind="remote", endpoint=server.url,
                      model_name="stub-model", max_parse_retries=1)
    with pytest.raises(AgentError, match="unparseable"):
        RemoteQuestioner(cfg).turn("blue bed", make_image(image_dir, "o"), ())


def test_remote_oracle_passes_through_stub_text(stub_server_factory):
    server = stub_server_factory("Yes, it has silver handles.")
    cfg = AgentConfig(id="remote-o", kind="remote", endpoint=server.url,
                      model_name="stub-model")
    oracle = RemoteOracle(cfg)
    answer, latency = oracle_answer(
        oracle, OracleRequest(target_image=b"pngbytes", category="cabinet",
                              question="Does it have handles?")
    )
    assert answer == "Yes, it has silver handles."
    assert latency > 0


def test_factories_dispatch_on_kind():
    assert isinstance(make_questioner(scripted_cfg(mode="always_no")), AlwaysNoQuestioner)
    assert isinstance(make_questioner(scripted_cfg(script=[])), ScriptedQuestioner)
    assert isinstance(make_oracle(scripted_cfg(lookup={})), ScriptedOracle)
    with pytest.raises(ValueError):
        make_oracle(AgentConfig(id="h", kind="human"))
